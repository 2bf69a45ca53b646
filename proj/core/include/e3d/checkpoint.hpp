#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "e3d/network.hpp"
#include "e3d/tensor_io.hpp"

namespace e3d {

inline nlohmann::json net_config_to_json(const NetConfig& cfg) {
    return nlohmann::json{{"variant", to_string(cfg.variant)},
                          {"in_channels", cfg.in_channels},
                          {"stem_channels", cfg.stem_channels},
                          {"block_count", cfg.block_count},
                          {"downsample_blocks", cfg.downsample_blocks},
                          {"reduction_ratio", cfg.reduction_ratio},
                          {"global_context", cfg.global_context},
                          {"clip_length", cfg.clip_length}};
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig cfg;
    if (j.contains("variant")) cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("in_channels")) cfg.in_channels = j.at("in_channels").get<index_t>();
    if (j.contains("stem_channels")) cfg.stem_channels = j.at("stem_channels").get<index_t>();
    if (j.contains("block_count")) cfg.block_count = j.at("block_count").get<int>();
    if (j.contains("downsample_blocks"))
        cfg.downsample_blocks = j.at("downsample_blocks").get<std::vector<int>>();
    if (j.contains("reduction_ratio")) cfg.reduction_ratio = j.at("reduction_ratio").get<int>();
    if (j.contains("global_context")) cfg.global_context = j.at("global_context").get<bool>();
    if (j.contains("clip_length")) cfg.clip_length = j.at("clip_length").get<int>();
    return cfg;
}

// Checkpoint layout: one JSON header line (config, seed, step), then every
// parameter tensor as a DMAP blob in declaration order; biases are stored
// with shape (len,1,1,1,1).
template <typename T>
void save_checkpoint(const std::string& path, const Network<T>& net, std::uint64_t seed,
                     std::int64_t step) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    nlohmann::json header{{"config", net_config_to_json(net.cfg)},
                          {"seed", seed},
                          {"step", step},
                          {"dtype", std::is_same_v<T, float> ? "f32" : "f64"}};
    os << header.dump() << "\n";
    auto refs = param_refs<const T>(net);
    for (const auto& r : refs) {
        Tensor<T> blob(Shape5{static_cast<index_t>(r.values.size()), 1, 1, 1, 1});
        std::copy(r.values.begin(), r.values.end(), blob.data().begin());
        write_dmap(os, blob);
    }
}

template <typename T>
struct Checkpoint {
    Network<T> net;
    std::uint64_t seed = 0;
    std::int64_t step = 0;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("load_checkpoint: missing header");
    const nlohmann::json header = nlohmann::json::parse(line);
    Checkpoint<T> ckpt;
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.step = header.at("step").get<std::int64_t>();
    const NetConfig cfg = net_config_from_json(header.at("config"));
    ckpt.net = build_network<T>(cfg, ckpt.seed, /*strict_factor=*/false);
    auto refs = param_refs<T>(ckpt.net);
    for (auto& r : refs) {
        const Tensor<T> blob = read_dmap<T>(is);
        if (blob.numel() != static_cast<index_t>(r.values.size())) {
            throw std::runtime_error("load_checkpoint: size mismatch for parameter " + r.name);
        }
        std::copy(blob.data().begin(), blob.data().end(), r.values.begin());
    }
    return ckpt;
}

}  // namespace e3d
