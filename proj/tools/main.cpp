#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "e3d/checkpoint.hpp"
#include "e3d/dataset.hpp"
#include "e3d/gradcheck.hpp"
#include "e3d/tensor_io.hpp"
#include "e3d/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace e3d;

namespace {

json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    json j;
    is >> j;
    return j;
}

SynthConfig synth_config_from_json(const json& j) {
    SynthConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.num_frames = j.value("num_frames", cfg.num_frames);
    cfg.height = j.value("height", cfg.height);
    cfg.width = j.value("width", cfg.width);
    cfg.min_persons = j.value("min_persons", cfg.min_persons);
    cfg.max_persons = j.value("max_persons", cfg.max_persons);
    cfg.max_displacement = j.value("max_displacement", cfg.max_displacement);
    cfg.blob_sigma = j.value("blob_sigma", cfg.blob_sigma);
    cfg.perspective_gradient = j.value("perspective_gradient", cfg.perspective_gradient);
    cfg.fps = j.value("fps", cfg.fps);
    if (j.contains("kernel")) {
        const auto& k = j["kernel"];
        if (k.value("type", "fixed") == "adaptive") {
            cfg.kernel.type = KernelPolicy::Type::Adaptive;
            cfg.kernel.k = k.value("k", 3);
            cfg.kernel.beta = k.value("beta", 0.3);
            cfg.kernel.sigma = k.value("fallback_sigma", 4.0);
        } else {
            cfg.kernel.type = KernelPolicy::Type::Fixed;
            cfg.kernel.sigma = k.value("sigma", 4.0);
        }
    }
    cfg.validate();
    return cfg;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    const SynthConfig cfg =
        config_path.empty() ? SynthConfig{} : synth_config_from_json(load_json(config_path));
    const std::string manifest = write_synth_dataset(cfg, out_dir);
    std::cout << "wrote " << manifest << "\n";
    return 0;
}

int cmd_gt(const std::string& manifest_path, const std::string& out_dir) {
    const DatasetManifest m = load_manifest(manifest_path);
    if (m.clamped_points > 0) {
        std::cerr << "warning: clamped " << m.clamped_points << " out-of-bounds annotations\n";
    }
    const ClipGeometry geo = clip_geometry(m);
    fs::create_directories(out_dir);
    const RoiMask roi_small = [&] {
        ClipSample first = materialize_clip(m, geo, 0, 1);
        return first.roi_small;
    }();
    for (size_t i = 0; i < m.frames.size(); ++i) {
        ClipSample clip = materialize_clip(m, geo, static_cast<index_t>(i), 1);
        char name[64];
        std::snprintf(name, sizeof(name), "target_%05zu.dmap", i);
        write_dmap((fs::path(out_dir) / name).string(), density_to_tensor(clip.targets[0]));
    }
    std::cout << "wrote " << m.frames.size() << " density targets ("
              << geo.h / 16 << "x" << geo.w / 16 << ", " << roi_small.count_inside()
              << " ROI cells) to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& net_path,
              const std::string& train_path, const std::string& out_dir) {
    const DatasetManifest m = load_manifest(manifest_path);
    NetConfig net_cfg;
    if (!net_path.empty()) net_cfg = net_config_from_json(load_json(net_path));
    TrainConfig train_cfg;
    if (!train_path.empty()) train_cfg = train_config_from_json(load_json(train_path));
    const TrainResult res = train(m, net_cfg, train_cfg, out_dir);
    std::cout << "final loss " << res.losses.back() << " after " << res.losses.size()
              << " steps; checkpoint " << res.final_checkpoint << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& report_path) {
    const DatasetManifest m = load_manifest(manifest_path);
    const EvalResult res = evaluate(ckpt, m);
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        if (!os) throw std::runtime_error("cannot open " + report_path);
        os << res.report.dump(2) << "\n";
    }
    std::cout << "MAE " << res.mae << "  MSE " << res.mse << "  GAME";
    for (double g : res.game_scores) std::cout << " " << g;
    std::cout << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& op, bool all) {
    std::vector<GradCheckReport> reports;
    if (all || op.empty()) {
        reports = run_all_grad_checks();
    } else {
        reports.push_back(run_grad_check(op));
    }
    bool ok = true;
    for (const auto& r : reports) {
        std::cout << r.line() << "\n";
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}

int cmd_render(const std::string& in_path, const std::string& out_path, const std::string& gt_path,
               int frame) {
    const Tensor<double> t = read_dmap<double>(in_path);
    const Shape5& s = t.shape();
    if (frame < 0 || frame >= s.d) throw std::runtime_error("frame index out of range");
    DensityMap map(s.h, s.w);
    for (index_t y = 0; y < s.h; ++y)
        for (index_t x = 0; x < s.w; ++x) map.at(y, x) = t.at(0, 0, frame, y, x);
    if (gt_path.empty()) {
        render_map(map, out_path);
    } else {
        const Tensor<double> g = read_dmap<double>(gt_path);
        DensityMap gt(g.shape().h, g.shape().w);
        for (index_t y = 0; y < gt.h; ++y)
            for (index_t x = 0; x < gt.w; ++x)
                gt.at(y, x) = g.at(0, 0, std::min<index_t>(frame, g.shape().d - 1), y, x);
        render_montage(gt, map, out_path);
    }
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"E3D/E2D crowd counting toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, manifest_path, net_path, train_path, ckpt, report_path;
    std::string in_path, out_path, gt_path, op;
    bool all_checks = false;
    int frame = 0;

    auto* synth = app.add_subcommand("synth", "generate a synthetic moving-crowd dataset");
    synth->add_option("--config", config_path, "SynthConfig JSON");
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* gt = app.add_subcommand("gt", "render density-map targets as DMAP files");
    gt->add_option("--manifest", manifest_path)->required();
    gt->add_option("--out", out_dir)->required();

    auto* tr = app.add_subcommand("train", "train a network");
    tr->add_option("--manifest", manifest_path)->required();
    tr->add_option("--net", net_path, "NetConfig JSON");
    tr->add_option("--train", train_path, "TrainConfig JSON");
    tr->add_option("--out", out_dir)->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--ckpt", ckpt)->required();
    ev->add_option("--manifest", manifest_path)->required();
    ev->add_option("--report", report_path, "JSON report path");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--op", op, "single op name");
    gc->add_flag("--all", all_checks, "run the whole battery");

    auto* rd = app.add_subcommand("render", "render a DMAP density map as an image");
    rd->add_option("--in", in_path)->required();
    rd->add_option("--out", out_path)->required();
    rd->add_option("--gt", gt_path, "optional second map for a side-by-side montage");
    rd->add_option("--frame", frame, "temporal slice");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_dir);
        if (gt->parsed()) return cmd_gt(manifest_path, out_dir);
        if (tr->parsed()) return cmd_train(manifest_path, net_path, train_path, out_dir);
        if (ev->parsed()) return cmd_eval(ckpt, manifest_path, report_path);
        if (gc->parsed()) return cmd_gradcheck(op, all_checks);
        if (rd->parsed()) return cmd_render(in_path, out_path, gt_path, frame);
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
