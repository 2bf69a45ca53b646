// Acceptance suite: one line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "e3d/checkpoint.hpp"
#include "e3d/dataset.hpp"
#include "e3d/density.hpp"
#include "e3d/gradcheck.hpp"
#include "e3d/metrics.hpp"
#include "e3d/network.hpp"
#include "e3d/rng.hpp"
#include "e3d/tca.hpp"
#include "e3d/train.hpp"

using namespace e3d;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Criterion {
    int id;
    std::string name;
    bool pass = false;
    std::string detail;
};

fs::path scratch_dir() {
    const fs::path p = fs::temp_directory_path() / "e3d_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ConvParams<double> zero_conv(index_t co, index_t ci, Triple k, Triple stride, Triple pad) {
    ConvParams<double> p;
    p.weights = Tensor<double>(Shape5{co, ci, k[0], k[1], k[2]});
    p.bias.assign(static_cast<size_t>(co), 0.0);
    p.stride = stride;
    p.pad = pad;
    return p;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

DatasetManifest synth_manifest(const fs::path& dir, std::uint64_t seed, int frames) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.num_frames = frames;
    cfg.height = 64;
    cfg.width = 64;
    cfg.min_persons = 10;
    cfg.max_persons = 30;
    return load_manifest(write_synth_dataset(cfg, dir.string()));
}

// -------------------------------------------------------------------------
// 1. Gradient suite

Criterion criterion_gradients() {
    Criterion c{1, "gradient suite"};
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string failed;
    for (const auto& rep : run_all_grad_checks()) {
        worst = std::max(worst, rep.max_rel_error);
        if (!rep.pass) failed += (failed.empty() ? "" : ", ") + rep.op;
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max rel err %.3g (tol 1e-4), %.1fs (limit 120s)", worst, secs);
    c.detail = buf;
    if (!failed.empty()) c.detail += "; failed: " + failed;
    c.pass = failed.empty() && worst < 1e-4 && secs < 120.0;
    return c;
}

// -------------------------------------------------------------------------
// 2. Residual identity

Criterion criterion_residual_identity() {
    Criterion c{2, "residual identity"};
    TcaBlockParams<double> p;
    p.conv1 = zero_conv(4, 4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    p.conv2 = zero_conv(4, 4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    p.gate_reduce = zero_conv(1, 4, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    p.gate_expand = zero_conv(4, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});

    Rng rng(11);
    Tensor<double> x(Shape5{1, 4, 3, 8, 8});
    for (index_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-2, 2);
    auto trace = tca_forward(x, p);
    bool identical = true;
    for (index_t i = 0; i < x.numel(); ++i) identical = identical && trace.output[i] == x[i];

    // W2 = 0 but a live first gate layer: the gate must still be exactly 0.5
    auto q = p;
    for (index_t i = 0; i < q.gate_reduce.weights.numel(); ++i) {
        q.gate_reduce.weights[i] = rng.uniform(-1, 1);
    }
    auto u = channel_gate(x, q);
    bool half = true;
    for (index_t i = 0; i < u.numel(); ++i) half = half && u[i] == 0.5;

    c.pass = identical && half;
    c.detail = std::string("zero block bit-exact: ") + (identical ? "yes" : "no") +
               ", W2=0 gate == 0.5: " + (half ? "yes" : "no");
    return c;
}

// -------------------------------------------------------------------------
// 3. Shape law

Criterion criterion_shape_law() {
    Criterion c{3, "shape law"};
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    NetConfig cfg;
    cfg.stem_channels = 4;  // the law is channel-independent; keep it quick
    auto net = build_network<float>(cfg, 21);
    Rng rng(22);
    for (index_t T : {4, 8, 12, 16}) {
        for (index_t H : {32, 64}) {
            for (index_t W : {32, 64}) {
                Tensor<float> x(Shape5{1, 1, T, H, W});
                for (index_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(0, 1));
                auto t = network_forward(x, net);
                ok = ok && t.output.shape() == Shape5{1, 1, T, H / 16, W / 16};
            }
        }
    }
    NetConfig flat = cfg;
    flat.variant = Variant::E2D;
    auto net2d = build_network<float>(flat, 23);
    for (index_t H : {32, 64}) {
        Tensor<float> x(Shape5{1, 1, 1, H, H});
        for (index_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(0, 1));
        auto t = network_forward(x, net2d);
        ok = ok && t.output.shape() == Shape5{1, 1, 1, H / 16, H / 16};
    }
    const double secs = seconds_since(t0);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "18 shapes checked, %.1fs (limit 60s)", secs);
    c.detail = buf;
    c.pass = ok && secs < 60.0;
    return c;
}

// -------------------------------------------------------------------------
// 4. Density conservation

std::vector<double> sigmas_brute_force(const HeadPoints& pts, int k, double beta) {
    std::vector<double> out(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        std::vector<double> d;
        for (size_t j = 0; j < pts.size(); ++j) {
            if (j == i) continue;
            const double dx = pts.points[i][0] - pts.points[j][0];
            const double dy = pts.points[i][1] - pts.points[j][1];
            d.push_back(std::sqrt(dx * dx + dy * dy));
        }
        std::sort(d.begin(), d.end());
        const size_t use = std::min<size_t>(static_cast<size_t>(k), d.size());
        double mean = 0.0;
        for (size_t m = 0; m < use; ++m) mean += d[m];
        mean /= static_cast<double>(use);
        out[i] = beta * mean;
    }
    return out;
}

Criterion criterion_density_conservation() {
    Criterion c{4, "density conservation"};
    const index_t H = 64, W = 64;
    double worst_dev = 0.0;
    bool sigmas_exact = true;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(1000 + trial);
        const int n = static_cast<int>(rng.uniform_int(1, 200));
        HeadPoints pts;
        for (int i = 0; i < n; ++i) {
            if (i < 4) {
                // force border heads into every set
                const double edge[4][2] = {{0.0, 0.0},
                                           {static_cast<double>(W) - 0.01, 0.0},
                                           {0.0, static_cast<double>(H) - 0.01},
                                           {rng.uniform(0, W - 1), 0.0}};
                pts.points.push_back({edge[i][0], edge[i][1]});
            } else {
                pts.points.push_back({rng.uniform(0, W - 0.01), rng.uniform(0, H - 0.01)});
            }
        }
        const double N = static_cast<double>(pts.size());
        for (double sigma : {3.0, 4.0}) {
            const auto map = render_density(pts, sigma, H, W);
            worst_dev = std::max(worst_dev, std::abs(map.sum() - N) / N);
        }
        if (pts.size() >= 2) {
            const auto fast = adaptive_sigmas(pts, 3, 0.3);
            const auto slow = sigmas_brute_force(pts, 3, 0.3);
            for (size_t i = 0; i < fast.size(); ++i) sigmas_exact = sigmas_exact && fast[i] == slow[i];
            const auto amap = render_density(pts, fast, H, W);
            worst_dev = std::max(worst_dev, std::abs(amap.sum() - N) / N);
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst |sum-N|/N = %.3g (tol 1e-6), adaptive sigma exact: %s",
                  worst_dev, sigmas_exact ? "yes" : "no");
    c.detail = buf;
    c.pass = worst_dev <= 1e-6 && sigmas_exact;
    return c;
}

// -------------------------------------------------------------------------
// 5. Metric identities

Criterion criterion_metric_identities() {
    Criterion c{5, "metric identities"};
    bool ok = true;

    // quadrant fixture
    DensityMap gt(4, 4), pred(4, 4);
    gt.at(0, 0) = 5.0;
    pred.at(0, 3) = 5.0;
    ok = ok && std::abs(game_frame(pred, gt, 0)) < 1e-12;
    ok = ok && std::abs(game_frame(pred, gt, 1) - 10.0) < 1e-12;

    // GAME(0) == MAE and monotonicity on divisible dims
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Rng rng(400 + trial);
        std::vector<DensityMap> ps, gs;
        std::vector<CountRecord> recs;
        for (int f = 0; f < 5; ++f) {
            DensityMap p(16, 16), g(16, 16);
            for (double& v : p.grid) v = rng.uniform(0, 1);
            for (double& v : g.grid) v = rng.uniform(0, 1);
            recs.push_back({std::to_string(f), g.sum(), p.sum()});
            ps.push_back(std::move(p));
            gs.push_back(std::move(g));
        }
        ok = ok && std::abs(game(ps, gs, 0) - mae(recs)) < 1e-9;
        double prev = game(ps, gs, 0);
        for (int L = 1; L <= 3; ++L) {
            const double cur = game(ps, gs, L);
            ok = ok && cur >= prev - 1e-12;
            prev = cur;
        }
    }

    // MAE <= MSE on 100 random record sets
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(900 + trial);
        std::vector<CountRecord> recs;
        const int n = static_cast<int>(rng.uniform_int(1, 30));
        for (int i = 0; i < n; ++i) {
            recs.push_back({std::to_string(i), rng.uniform(0, 100), rng.uniform(0, 100)});
        }
        ok = ok && mae(recs) <= mse(recs) + 1e-12;
    }

    c.detail = "quadrant fixture 0/10, GAME(0)==MAE, monotone in L, MAE<=MSE x100";
    c.pass = ok;
    return c;
}

// -------------------------------------------------------------------------
// 6. ROI correctness

Criterion criterion_roi(const fs::path& scratch) {
    Criterion c{6, "roi correctness"};

    // (a) parameter gradients do not react to out-of-ROI prediction changes
    auto m = synth_manifest(scratch / "roi_ds", 51, 4);
    // left half inside
    Image8 roi_img;
    roi_img.h = 64;
    roi_img.w = 64;
    roi_img.channels = 1;
    roi_img.pixels.assign(64 * 64, 0);
    for (index_t y = 0; y < 64; ++y)
        for (index_t x = 0; x < 32; ++x) roi_img.at(y, x) = 255;
    write_pnm((fs::path(m.root) / "roi.pgm").string(), roi_img);
    m.roi = "roi.pgm";

    const ClipGeometry geo = clip_geometry(m);
    const ClipSample clip = materialize_clip(m, geo, 0, 4);

    NetConfig net_cfg;
    net_cfg.stem_channels = 4;
    net_cfg.clip_length = 4;
    auto net = build_network<double>(net_cfg, 52);
    auto trace = network_forward(tensor_cast<double>(clip.input), net);

    auto [loss_a, grad_a] = masked_mse_loss(trace.output, clip.targets, clip.roi_small);
    Tensor<double> tampered = trace.output;
    Rng rng(53);
    for (index_t t = 0; t < 4; ++t)
        for (index_t y = 0; y < 4; ++y)
            for (index_t x = 0; x < 4; ++x)
                if (!clip.roi_small.inside(y, x)) tampered.at(0, 0, t, y, x) = rng.uniform(-50, 50);
    auto [loss_b, grad_b] = masked_mse_loss(tampered, clip.targets, clip.roi_small);

    auto ga = network_backward(trace, net, grad_a);
    auto gb = network_backward(trace, net, grad_b);
    auto ra = grad_refs(ga, net);
    auto rb = grad_refs(gb, net);
    bool grads_equal = loss_a == loss_b && ra.size() == rb.size();
    for (size_t p = 0; grads_equal && p < ra.size(); ++p) {
        for (size_t i = 0; i < ra[p].values.size(); ++i) {
            grads_equal = grads_equal && ra[p].values[i] == rb[p].values[i];
        }
    }

    // (b) evaluation reports never count out-of-ROI cells
    TrainConfig tcfg;
    tcfg.steps = 1;
    tcfg.seed = 54;
    auto tr = train(m, net_cfg, tcfg, (scratch / "roi_run").string());
    auto ev = evaluate(tr.final_checkpoint, m);
    auto ckpt = load_checkpoint<float>(tr.final_checkpoint);
    bool masked_ok = true;
    const ClipSample eclip = materialize_clip(m, geo, 0, 4);
    auto etrace = network_forward(tensor_cast<float>(eclip.input), ckpt.net);
    for (size_t f = 0; f < 4 && masked_ok; ++f) {
        DensityMap pm(4, 4);
        for (index_t y = 0; y < 4; ++y)
            for (index_t x = 0; x < 4; ++x)
                pm.at(y, x) = static_cast<double>(
                    etrace.output.at(0, 0, static_cast<index_t>(f), y, x));
        apply_roi(pm, eclip.roi_small);
        for (index_t y = 0; y < 4; ++y)
            for (index_t x = 0; x < 4; ++x)
                if (!eclip.roi_small.inside(y, x)) masked_ok = masked_ok && pm.at(y, x) == 0.0;
        const double reported = ev.report["frames"][f]["estimate"].get<double>();
        masked_ok = masked_ok && std::abs(reported - pm.sum()) <= 1e-9;
    }

    c.pass = grads_equal && masked_ok;
    c.detail = std::string("param grads invariant: ") + (grads_equal ? "yes" : "no") +
               ", report masked: " + (masked_ok ? "yes" : "no");
    return c;
}

// -------------------------------------------------------------------------
// 7. Tiny overfit

Criterion criterion_overfit(const fs::path& scratch) {
    Criterion c{7, "tiny overfit"};
    const auto t0 = std::chrono::steady_clock::now();
    auto m = synth_manifest(scratch / "overfit_ds", 61, 16);

    NetConfig net_cfg;  // full c=16, 8-block E3D
    TrainConfig tcfg;
    tcfg.steps = 500;
    tcfg.seed = 62;
    auto tr = train(m, net_cfg, tcfg, (scratch / "overfit_run").string());

    const double initial = tr.losses.front();
    const double final_loss = tr.losses.back();
    const bool loss_ok = final_loss <= 0.10 * initial;

    auto ev = evaluate(tr.final_checkpoint, m);
    double truth = 0.0, est = 0.0;
    for (const auto& f : ev.report["frames"]) {
        truth += f["truth"].get<double>();
        est += f["estimate"].get<double>();
    }
    const bool count_ok = std::abs(est - truth) <= 0.10 * truth;
    const double secs = seconds_since(t0);

    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "loss %.4g -> %.4g (ratio %.3f, need <= 0.10), count %.1f vs %.1f, %.0fs (limit 600s)",
                  initial, final_loss, final_loss / initial, est, truth, secs);
    c.detail = buf;
    c.pass = loss_ok && count_ok && secs < 600.0;
    return c;
}

// -------------------------------------------------------------------------
// 8. Ablation plumbing

Criterion criterion_ablations(const fs::path& scratch) {
    Criterion c{8, "ablation plumbing"};
    auto m = synth_manifest(scratch / "ablation_ds", 71, 16);

    std::vector<NetConfig> grid;
    for (bool gc : {true, false}) {
        NetConfig cfg;
        cfg.stem_channels = 8;
        cfg.clip_length = 4;
        cfg.global_context = gc;
        grid.push_back(cfg);
    }
    for (int T : {4, 8, 12, 16}) {
        NetConfig cfg;
        cfg.stem_channels = 8;
        cfg.clip_length = T;
        grid.push_back(cfg);
    }
    for (int blocks : {4, 6, 8, 10}) {
        NetConfig cfg;
        cfg.stem_channels = 8;
        cfg.clip_length = 4;
        cfg.block_count = blocks;
        if (blocks < 5) cfg.downsample_blocks = {1, 3, blocks};  // {1,3,5} needs >= 5 blocks
        grid.push_back(cfg);
    }

    int done = 0;
    std::string error;
    for (size_t i = 0; i < grid.size(); ++i) {
        try {
            TrainConfig tcfg;
            tcfg.steps = 1;
            tcfg.seed = 72;
            const auto out = scratch / ("ablation_run_" + std::to_string(i));
            auto tr = train(m, grid[i], tcfg, out.string());
            evaluate(tr.final_checkpoint, m);
            ++done;
        } catch (const std::exception& e) {
            error = e.what();
            break;
        }
    }
    c.pass = done == static_cast<int>(grid.size());
    c.detail = std::to_string(done) + "/" + std::to_string(grid.size()) +
               " configs trained one step and evaluated";
    if (!error.empty()) c.detail += "; first error: " + error;
    return c;
}

// -------------------------------------------------------------------------
// 9. Reproducibility

Criterion criterion_reproducibility(const fs::path& scratch) {
    Criterion c{9, "reproducibility"};
    auto m = synth_manifest(scratch / "repro_ds", 81, 8);
    NetConfig net_cfg;
    net_cfg.stem_channels = 8;
    net_cfg.clip_length = 4;
    TrainConfig tcfg;
    tcfg.steps = 5;
    tcfg.seed = 82;
    auto ra = train(m, net_cfg, tcfg, (scratch / "repro_a").string());
    auto rb = train(m, net_cfg, tcfg, (scratch / "repro_b").string());
    const bool ckpt_same = slurp(ra.final_checkpoint) == slurp(rb.final_checkpoint);
    const bool curve_same = slurp(ra.loss_curve_path) == slurp(rb.loss_curve_path);
    c.pass = ckpt_same && curve_same;
    c.detail = std::string("checkpoints bit-identical: ") + (ckpt_same ? "yes" : "no") +
               ", loss curves bit-identical: " + (curve_same ? "yes" : "no");
    return c;
}

}  // namespace

int main() {
    const fs::path scratch = scratch_dir();
    std::vector<Criterion> results;
    auto run = [&results](Criterion (*fn)()) { results.push_back(fn()); };
    auto run_dir = [&results, &scratch](Criterion (*fn)(const fs::path&)) {
        results.push_back(fn(scratch));
    };

    run(criterion_gradients);
    run(criterion_residual_identity);
    run(criterion_shape_law);
    run(criterion_density_conservation);
    run(criterion_metric_identities);
    run_dir(criterion_roi);
    run_dir(criterion_overfit);
    run_dir(criterion_ablations);
    run_dir(criterion_reproducibility);

    bool all = true;
    for (const auto& c : results) {
        std::printf("[%s] criterion %d: %s — %s\n", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    c.detail.c_str());
        all = all && c.pass;
    }
    fs::remove_all(scratch);
    std::printf("%s\n", all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
    return all ? 0 : 1;
}
