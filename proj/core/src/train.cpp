#include "e3d/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "e3d/checkpoint.hpp"
#include "e3d/image_io.hpp"
#include "e3d/rng.hpp"

namespace e3d {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    if (lr <= 0) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (optimizer != "adam" && optimizer != "sgd") {
        throw std::invalid_argument("TrainConfig: optimizer must be 'adam' or 'sgd'");
    }
    if (precision != "f32" && precision != "f64") {
        throw std::invalid_argument("TrainConfig: precision must be 'f32' or 'f64'");
    }
    if (window_stride < 1) throw std::invalid_argument("TrainConfig: window_stride must be >= 1");
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"lr", c.lr},           {"optimizer", c.optimizer},
                {"momentum", c.momentum}, {"beta1", c.beta1},
                {"beta2", c.beta2},     {"eps", c.eps},
                {"steps", c.steps},     {"batch", c.batch},
                {"seed", c.seed},       {"checkpoint_every", c.checkpoint_every},
                {"precision", c.precision}, {"window_stride", c.window_stride}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.momentum = j.value("momentum", c.momentum);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.precision = j.value("precision", c.precision);
    c.window_stride = j.value("window_stride", c.window_stride);
    c.validate();
    return c;
}

namespace {

template <typename T>
class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const std::vector<ParamRef<T>>& params) : cfg_(cfg) {
        for (const auto& p : params) {
            m_.emplace_back(p.values.size(), 0.0);
            v_.emplace_back(p.values.size(), 0.0);
        }
    }

    void step(std::vector<ParamRef<T>>& params, const std::vector<ParamRef<T>>& grads) {
        ++t_;
        const bool adam = cfg_.optimizer == "adam";
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t p = 0; p < params.size(); ++p) {
            auto w = params[p].values;
            auto g = grads[p].values;
            auto& m = m_[p];
            auto& v = v_[p];
            for (size_t i = 0; i < w.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                if (adam) {
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
                    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
                    const double mhat = m[i] / bc1;
                    const double vhat = v[i] / bc2;
                    w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                          cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
                } else {
                    m[i] = cfg_.momentum * m[i] + gi;
                    w[i] = static_cast<T>(static_cast<double>(w[i]) - cfg_.lr * m[i]);
                }
            }
        }
    }

private:
    TrainConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;  // moment state kept in double
};

template <typename T>
TrainResult train_impl(const DatasetManifest& data, NetConfig net_cfg, const TrainConfig& cfg,
                       const std::string& out_dir) {
    const ClipGeometry geo = clip_geometry(data);
    net_cfg.in_channels = geo.channels;
    const index_t clip_len =
        net_cfg.variant == Variant::E2D ? 1 : static_cast<index_t>(net_cfg.clip_length);

    fs::create_directories(out_dir);
    Network<T> net = build_network<T>(net_cfg, cfg.seed);

    const auto starts = window_starts(static_cast<index_t>(data.frames.size()), clip_len,
                                      cfg.window_stride, /*eval_tiling=*/false);
    std::vector<ClipSample> clips;
    clips.reserve(starts.size());
    for (index_t s : starts) clips.push_back(materialize_clip(data, geo, s, clip_len));

    auto params = param_refs<T>(net);
    Optimizer<T> opt(cfg, params);
    Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<size_t> order(clips.size());
    std::iota(order.begin(), order.end(), size_t{0});
    size_t cursor = order.size();  // forces a shuffle before the first pick

    TrainResult result;
    std::ofstream curve(fs::path(out_dir) / "loss.csv");
    curve << "step,loss\n";

    std::vector<std::vector<T>> accum(params.size());
    for (size_t p = 0; p < params.size(); ++p) accum[p].assign(params[p].values.size(), T(0));

    for (int step = 1; step <= cfg.steps; ++step) {
        double step_loss = 0.0;
        for (auto& a : accum) std::fill(a.begin(), a.end(), T(0));
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor >= order.size()) {
                // deterministic Fisher-Yates reshuffle per epoch
                for (size_t i = order.size(); i > 1; --i) {
                    const size_t j = static_cast<size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
                    std::swap(order[i - 1], order[j]);
                }
                cursor = 0;
            }
            const ClipSample& clip = clips[order[cursor++]];
            auto trace = network_forward(tensor_cast<T>(clip.input), net);
            auto [loss, grad] = masked_mse_loss(trace.output, clip.targets, clip.roi_small);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
            }
            step_loss += loss;
            auto net_grads = network_backward(trace, net, grad);
            auto grefs = grad_refs(net_grads, net);
            const T scale = T(1) / static_cast<T>(cfg.batch);
            for (size_t p = 0; p < grefs.size(); ++p) {
                for (size_t i = 0; i < grefs[p].values.size(); ++i) {
                    accum[p][i] += grefs[p].values[i] * scale;
                }
            }
        }
        step_loss /= cfg.batch;
        std::vector<ParamRef<T>> grad_views;
        grad_views.reserve(params.size());
        for (size_t p = 0; p < params.size(); ++p) {
            grad_views.push_back({params[p].name, std::span<T>(accum[p])});
        }
        opt.step(params, grad_views);

        result.losses.push_back(step_loss);
        char line[64];
        std::snprintf(line, sizeof(line), "%d,%.17g\n", step, step_loss);
        curve << line;

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) {
            save_checkpoint((fs::path(out_dir) / ("ckpt_" + std::to_string(step) + ".ckpt")).string(),
                            net, cfg.seed, step);
        }
    }

    result.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
    result.loss_curve_path = (fs::path(out_dir) / "loss.csv").string();
    save_checkpoint(result.final_checkpoint, net, cfg.seed, cfg.steps);
    return result;
}

}  // namespace

TrainResult train(const DatasetManifest& data, const NetConfig& net_cfg, const TrainConfig& cfg,
                  const std::string& out_dir) {
    cfg.validate();
    net_cfg.validate();
    if (cfg.precision == "f64") return train_impl<double>(data, net_cfg, cfg, out_dir);
    return train_impl<float>(data, net_cfg, cfg, out_dir);
}

namespace {

std::string checkpoint_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("evaluate: cannot open checkpoint " + path);
    std::string line;
    std::getline(is, line);
    return json::parse(line).value("dtype", "f32");
}

template <typename T>
EvalResult evaluate_impl(const std::string& checkpoint_path, const DatasetManifest& data) {
    auto ckpt = load_checkpoint<T>(checkpoint_path);
    const Network<T>& net = ckpt.net;
    const ClipGeometry geo = clip_geometry(data);
    if (geo.channels != net.cfg.in_channels) {
        throw std::runtime_error("evaluate: checkpoint expects " +
                                 std::to_string(net.cfg.in_channels) + " input channels, data has " +
                                 std::to_string(geo.channels));
    }
    const index_t clip_len =
        net.cfg.variant == Variant::E2D ? 1 : static_cast<index_t>(net.cfg.clip_length);
    const auto starts = window_starts(static_cast<index_t>(data.frames.size()), clip_len,
                                      clip_len, /*eval_tiling=*/true);

    std::vector<CountRecord> records;
    std::vector<DensityMap> pred_maps, gt_maps;
    std::vector<char> seen(data.frames.size(), 0);

    for (index_t s : starts) {
        ClipSample clip = materialize_clip(data, geo, s, clip_len);
        auto trace = network_forward(tensor_cast<T>(clip.input), net);
        const Tensor<T>& out = trace.output;
        for (index_t t = 0; t < clip_len; ++t) {
            const index_t fi = clip.frame_indices[static_cast<size_t>(t)];
            if (seen[static_cast<size_t>(fi)]) continue;  // right-aligned overlap
            seen[static_cast<size_t>(fi)] = 1;
            DensityMap pred(out.shape().h, out.shape().w);
            for (index_t y = 0; y < pred.h; ++y)
                for (index_t x = 0; x < pred.w; ++x)
                    pred.at(y, x) = static_cast<double>(out.at(0, 0, t, y, x));
            apply_roi(pred, clip.roi_small);  // out-of-ROI cells are zero in the report
            CountRecord rec;
            rec.frame_id = data.frames[static_cast<size_t>(fi)];
            rec.truth = clip.counts[static_cast<size_t>(t)];
            rec.estimate = pred.sum();
            records.push_back(rec);
            pred_maps.push_back(std::move(pred));
            gt_maps.push_back(clip.targets[static_cast<size_t>(t)]);
        }
    }

    EvalResult res;
    res.mae = mae(records);
    res.mse = mse(records);
    json game_json = json::array();
    for (int level = 0; level <= 3; ++level) {
        const index_t cells = index_t(1) << level;
        if (cells > pred_maps[0].h || cells > pred_maps[0].w) {
            res.game_scores.push_back(std::numeric_limits<double>::quiet_NaN());
            game_json.push_back(nullptr);  // map too small for this grid
        } else {
            const double score = game(pred_maps, gt_maps, level);
            res.game_scores.push_back(score);
            game_json.push_back(score);
        }
    }

    json frames = json::array();
    for (const auto& r : records) {
        frames.push_back({{"frame", r.frame_id}, {"truth", r.truth}, {"estimate", r.estimate}});
    }
    res.report = json{{"frames", std::move(frames)},
                      {"mae", res.mae},
                      {"mse", res.mse},
                      {"game", std::move(game_json)}};
    return res;
}

Image8 heatmap(const DensityMap& map) {
    double peak = 0.0;
    for (double v : map.grid) peak = std::max(peak, v);
    Image8 img;
    img.h = map.h;
    img.w = map.w;
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(map.h * map.w));
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = peak > 0 ? map.grid[i] / peak : 0.0;
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    }
    return img;
}

}  // namespace

EvalResult evaluate(const std::string& checkpoint_path, const DatasetManifest& data) {
    if (checkpoint_dtype(checkpoint_path) == "f64") {
        return evaluate_impl<double>(checkpoint_path, data);
    }
    return evaluate_impl<float>(checkpoint_path, data);
}

void render_map(const DensityMap& map, const std::string& out_path) {
    for (double v : map.grid) {
        if (!std::isfinite(v)) throw std::invalid_argument("render_map: non-finite cell");
    }
    write_image(out_path, heatmap(map));
}

void render_montage(const DensityMap& left, const DensityMap& right, const std::string& out_path) {
    if (left.h != right.h) throw std::invalid_argument("render_montage: height mismatch");
    const Image8 a = heatmap(left);
    const Image8 b = heatmap(right);
    Image8 out;
    out.h = a.h;
    out.w = a.w + 2 + b.w;
    out.channels = 1;
    out.pixels.assign(static_cast<size_t>(out.h * out.w), 128);  // grey separator
    for (index_t y = 0; y < out.h; ++y) {
        for (index_t x = 0; x < a.w; ++x) out.at(y, x) = a.at(y, x);
        for (index_t x = 0; x < b.w; ++x) out.at(y, a.w + 2 + x) = b.at(y, x);
    }
    write_image(out_path, out);
}

}  // namespace e3d
