#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "e3d/dataset.hpp"
#include "e3d/density.hpp"
#include "e3d/metrics.hpp"
#include "e3d/network.hpp"

namespace e3d {

struct TrainConfig {
    double lr = 1e-4;
    std::string optimizer = "adam";  // "adam" or "sgd"
    double momentum = 0.9;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int steps = 500;
    int batch = 1;  // clips per step, gradient-averaged
    std::uint64_t seed = 1;
    int checkpoint_every = 0;  // 0 = final checkpoint only
    std::string precision = "f32";
    index_t window_stride = 1;  // training window stride, frames

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// ROI-masked mean squared pixel error over one clip.
// loss = (1/|ROI cells * frames|) sum_in_roi (pred - target)^2; the gradient is
// 2(pred - target)/denominator inside the ROI and exactly 0 outside.
template <typename T>
std::pair<double, Tensor<T>> masked_mse_loss(const Tensor<T>& pred,
                                             const std::vector<DensityMap>& targets,
                                             const RoiMask& roi_small) {
    const Shape5& s = pred.shape();
    if (s.n != 1 || s.c != 1 || s.d != static_cast<index_t>(targets.size())) {
        throw std::invalid_argument("masked_mse_loss: prediction shape " + s.str() +
                                    " does not match " + std::to_string(targets.size()) +
                                    " target frames");
    }
    for (const auto& t : targets) {
        if (t.h != s.h || t.w != s.w) {
            throw std::invalid_argument("masked_mse_loss: target dims do not match prediction");
        }
    }
    if (roi_small.h != s.h || roi_small.w != s.w) {
        throw std::invalid_argument("masked_mse_loss: ROI dims do not match prediction");
    }
    const index_t in_roi = roi_small.count_inside();
    if (in_roi == 0) throw std::invalid_argument("masked_mse_loss: empty ROI");
    const double denom = static_cast<double>(in_roi) * static_cast<double>(s.d);

    Tensor<T> grad(s);
    double loss = 0.0;
    for (index_t t = 0; t < s.d; ++t) {
        for (index_t y = 0; y < s.h; ++y) {
            for (index_t x = 0; x < s.w; ++x) {
                if (!roi_small.inside(y, x)) continue;
                const double diff = static_cast<double>(pred.at(0, 0, t, y, x)) -
                                    targets[static_cast<size_t>(t)].at(y, x);
                loss += diff * diff;
                grad.at(0, 0, t, y, x) = static_cast<T>(2.0 * diff / denom);
            }
        }
    }
    return {loss / denom, std::move(grad)};
}

struct TrainResult {
    std::vector<double> losses;  // one per step
    std::string final_checkpoint;
    std::string loss_curve_path;
};

TrainResult train(const DatasetManifest& data, const NetConfig& net_cfg, const TrainConfig& cfg,
                  const std::string& out_dir);

struct EvalResult {
    double mae = 0.0;
    double mse = 0.0;
    std::vector<double> game_scores;  // levels 0..3; NaN where the map is too small
    nlohmann::json report;            // per-frame records plus aggregates
};

EvalResult evaluate(const std::string& checkpoint_path, const DatasetManifest& data);

// 8-bit heatmap, per-map max normalized; `frame` selects the temporal slice of
// a multi-frame DMAP tensor.
void render_map(const DensityMap& map, const std::string& out_path);
void render_montage(const DensityMap& left, const DensityMap& right, const std::string& out_path);

}  // namespace e3d
