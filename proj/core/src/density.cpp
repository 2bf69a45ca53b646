#include "e3d/density.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace e3d {

std::vector<double> adaptive_sigmas(const HeadPoints& pts, int k, double beta) {
    const size_t n = pts.size();
    if (n < 2) {
        throw std::invalid_argument(
            "adaptive_sigmas: need at least two points (fall back to a fixed sigma)");
    }
    if (k < 1) throw std::invalid_argument("adaptive_sigmas: k must be >= 1");
    if (beta <= 0) throw std::invalid_argument("adaptive_sigmas: beta must be > 0");

    std::vector<double> sigmas(n);
    std::vector<double> dists;
    dists.reserve(n - 1);
    const size_t use = std::min<size_t>(static_cast<size_t>(k), n - 1);
    for (size_t i = 0; i < n; ++i) {
        dists.clear();
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = pts.points[i][0] - pts.points[j][0];
            const double dy = pts.points[i][1] - pts.points[j][1];
            dists.push_back(std::sqrt(dx * dx + dy * dy));
        }
        std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(use) - 1,
                         dists.end());
        std::sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(use));
        double mean = 0.0;
        for (size_t m = 0; m < use; ++m) mean += dists[m];
        mean /= static_cast<double>(use);
        sigmas[i] = beta * mean;
    }
    return sigmas;
}

DensityMap render_density(const HeadPoints& pts, const std::vector<double>& sigmas, index_t h,
                          index_t w) {
    if (pts.size() != sigmas.size()) {
        throw std::invalid_argument("render_density: one sigma per head required");
    }
    DensityMap map(h, w, KernelProvenance::Adaptive);
    for (size_t i = 0; i < pts.size(); ++i) {
        const double sigma = sigmas[i];
        if (sigma <= 0) throw std::invalid_argument("render_density: sigma must be > 0");
        const double cx = pts.points[i][0];
        const double cy = pts.points[i][1];
        const index_t radius = static_cast<index_t>(std::ceil(4.0 * sigma));
        const index_t y0 = std::max<index_t>(0, static_cast<index_t>(std::floor(cy)) - radius);
        const index_t y1 = std::min<index_t>(h - 1, static_cast<index_t>(std::floor(cy)) + radius);
        const index_t x0 = std::max<index_t>(0, static_cast<index_t>(std::floor(cx)) - radius);
        const index_t x1 = std::min<index_t>(w - 1, static_cast<index_t>(std::floor(cx)) + radius);
        if (y0 > y1 || x0 > x1) continue;  // head clamped fully outside; nothing to add

        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
        double norm = 0.0;
        for (index_t y = y0; y <= y1; ++y) {
            for (index_t x = x0; x <= x1; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                norm += std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
        }
        if (norm <= 0) continue;
        // renormalize over in-image support: each head contributes exactly 1
        for (index_t y = y0; y <= y1; ++y) {
            for (index_t x = x0; x <= x1; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                map.at(y, x) += std::exp(-(dx * dx + dy * dy) * inv2s2) / norm;
            }
        }
    }
    return map;
}

DensityMap render_density(const HeadPoints& pts, double fixed_sigma, index_t h, index_t w) {
    DensityMap map = render_density(pts, std::vector<double>(pts.size(), fixed_sigma), h, w);
    map.provenance = KernelProvenance::FixedSigma;
    return map;
}

void apply_roi(DensityMap& map, const RoiMask& roi) {
    if (map.h != roi.h || map.w != roi.w) {
        throw std::invalid_argument("apply_roi: mask dims do not match map");
    }
    for (index_t y = 0; y < map.h; ++y)
        for (index_t x = 0; x < map.w; ++x)
            if (!roi.inside(y, x)) map.at(y, x) = 0.0;
}

DensityMap downscale_gt(const DensityMap& map) {
    if (map.h % 16 != 0 || map.w % 16 != 0) {
        throw std::invalid_argument("downscale_gt: dims must be divisible by 16");
    }
    Tensor<double> t = density_to_tensor(map);
    Tensor<double> small = bilinear_resize(t, 1.0 / 16.0);
    // bilinear averaging shrinks mass by 16^2; rescale so counts survive
    for (index_t i = 0; i < small.numel(); ++i) small[i] *= 256.0;
    DensityMap out = density_from_tensor(small);
    out.provenance = map.provenance;
    return out;
}

RoiMask downscale_roi(const RoiMask& roi, index_t factor) {
    if (factor < 1 || roi.h % factor != 0 || roi.w % factor != 0) {
        throw std::invalid_argument("downscale_roi: dims must be divisible by the factor");
    }
    RoiMask out(roi.h / factor, roi.w / factor, 0);
    const index_t block = factor * factor;
    for (index_t y = 0; y < out.h; ++y) {
        for (index_t x = 0; x < out.w; ++x) {
            index_t covered = 0;
            for (index_t dy = 0; dy < factor; ++dy)
                for (index_t dx = 0; dx < factor; ++dx)
                    covered += roi.inside(y * factor + dy, x * factor + dx);
            out.grid[static_cast<size_t>(y * out.w + x)] = (2 * covered >= block) ? 1 : 0;
        }
    }
    return out;
}

Tensor<double> density_to_tensor(const DensityMap& map) {
    return Tensor<double>(Shape5{1, 1, 1, map.h, map.w}, map.grid);
}

DensityMap density_from_tensor(const Tensor<double>& t) {
    const Shape5& s = t.shape();
    if (s.n != 1 || s.c != 1 || s.d != 1) {
        throw std::invalid_argument("density_from_tensor: expected shape (1,1,1,h,w)");
    }
    DensityMap map(s.h, s.w);
    std::copy(t.data().begin(), t.data().end(), map.grid.begin());
    return map;
}

}  // namespace e3d
