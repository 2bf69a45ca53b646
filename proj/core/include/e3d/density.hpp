#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e3d/tensor.hpp"

namespace e3d {

struct HeadPoints {
    // (x, y) pixel coordinates, frame-relative, real-valued.
    std::vector<std::array<double, 2>> points;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

enum class KernelProvenance { FixedSigma, Adaptive };

struct DensityMap {
    std::vector<double> grid;  // row-major, h*w
    index_t h = 0, w = 0;
    KernelProvenance provenance = KernelProvenance::FixedSigma;

    DensityMap() = default;
    DensityMap(index_t h_, index_t w_, KernelProvenance prov = KernelProvenance::FixedSigma)
        : grid(static_cast<size_t>(h_ * w_), 0.0), h(h_), w(w_), provenance(prov) {}

    double& at(index_t y, index_t x) { return grid[static_cast<size_t>(y * w + x)]; }
    double at(index_t y, index_t x) const { return grid[static_cast<size_t>(y * w + x)]; }

    double sum() const {
        double acc = 0.0;
        for (double v : grid) acc += v;
        return acc;
    }
};

struct RoiMask {
    std::vector<std::uint8_t> grid;  // nonzero = inside
    index_t h = 0, w = 0;

    RoiMask() = default;
    RoiMask(index_t h_, index_t w_, std::uint8_t fill = 1)
        : grid(static_cast<size_t>(h_ * w_), fill), h(h_), w(w_) {}

    bool inside(index_t y, index_t x) const { return grid[static_cast<size_t>(y * w + x)] != 0; }
    index_t count_inside() const {
        index_t n = 0;
        for (auto v : grid) n += (v != 0);
        return n;
    }
};

// Per-point sigma_i = beta * mean distance to the min(k, n-1) nearest
// neighbours. Requires at least two points.
std::vector<double> adaptive_sigmas(const HeadPoints& pts, int k, double beta);

// Adds one truncated (radius ceil(4*sigma)), renormalized Gaussian per head so
// every head contributes exactly 1.0 to the sum, border heads included.
DensityMap render_density(const HeadPoints& pts, const std::vector<double>& sigmas, index_t h,
                          index_t w);
DensityMap render_density(const HeadPoints& pts, double fixed_sigma, index_t h, index_t w);

void apply_roi(DensityMap& map, const RoiMask& roi);
template <typename T>
void apply_roi(Tensor<T>& t, const RoiMask& roi) {
    const Shape5& s = t.shape();
    if (s.h != roi.h || s.w != roi.w) {
        throw std::invalid_argument("apply_roi: mask dims do not match tensor");
    }
    for (index_t n = 0; n < s.n; ++n)
        for (index_t c = 0; c < s.c; ++c)
            for (index_t d = 0; d < s.d; ++d)
                for (index_t y = 0; y < s.h; ++y)
                    for (index_t x = 0; x < s.w; ++x)
                        if (!roi.inside(y, x)) t.at(n, c, d, y, x) = T(0);
}

// Bilinear 1/16 downscale rescaled by 256 so total mass is preserved.
DensityMap downscale_gt(const DensityMap& map);

// Binary mask downscale by `factor` (e.g. 16): output cell set iff at least
// half of its source block is inside.
RoiMask downscale_roi(const RoiMask& roi, index_t factor);

Tensor<double> density_to_tensor(const DensityMap& map);
DensityMap density_from_tensor(const Tensor<double>& t);

}  // namespace e3d
