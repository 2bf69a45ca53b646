#include "e3d/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "e3d/rng.hpp"

namespace e3d {

namespace fs = std::filesystem;
using nlohmann::json;

std::string DatasetManifest::frame_path(size_t i) const {
    return (fs::path(root) / frames.at(i)).string();
}

std::string DatasetManifest::roi_path() const {
    return roi.empty() ? std::string() : (fs::path(root) / roi).string();
}

namespace {

KernelPolicy kernel_from_json(const json& j) {
    KernelPolicy k;
    const std::string type = j.value("type", "fixed");
    if (type == "fixed") {
        k.type = KernelPolicy::Type::Fixed;
        k.sigma = j.value("sigma", 4.0);
        if (k.sigma <= 0) throw std::runtime_error("manifest: kernel sigma must be > 0");
    } else if (type == "adaptive") {
        k.type = KernelPolicy::Type::Adaptive;
        k.k = j.value("k", 3);
        k.beta = j.value("beta", 0.3);
        k.sigma = j.value("fallback_sigma", 4.0);
        if (k.k < 1 || k.beta <= 0) throw std::runtime_error("manifest: bad adaptive kernel");
    } else {
        throw std::runtime_error("manifest: unknown kernel type '" + type + "'");
    }
    return k;
}

json kernel_to_json(const KernelPolicy& k) {
    if (k.type == KernelPolicy::Type::Fixed) {
        return json{{"type", "fixed"}, {"sigma", k.sigma}};
    }
    return json{{"type", "adaptive"}, {"k", k.k}, {"beta", k.beta}, {"fallback_sigma", k.sigma}};
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_manifest: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("load_manifest: " + path + ": " + e.what());
    }

    DatasetManifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";

    if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty()) {
        throw std::runtime_error("load_manifest: empty or missing frame list");
    }
    m.frames = j["frames"].get<std::vector<std::string>>();

    const auto& jp = j.at("points");
    if (!jp.is_array() || jp.size() != m.frames.size()) {
        throw std::runtime_error("load_manifest: points array must have one entry per frame (" +
                                 std::to_string(jp.size()) + " vs " +
                                 std::to_string(m.frames.size()) + " frames)");
    }
    m.points.resize(m.frames.size());
    for (size_t i = 0; i < jp.size(); ++i) {
        const auto& entry = jp[i];
        if (!entry.is_array()) {
            throw std::runtime_error("load_manifest: malformed annotation entry " +
                                     std::to_string(i));
        }
        for (const auto& pt : entry) {
            if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
                throw std::runtime_error("load_manifest: malformed point in entry " +
                                         std::to_string(i));
            }
            m.points[i].points.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }
    }

    if (j.contains("roi") && !j["roi"].is_null()) m.roi = j["roi"].get<std::string>();
    if (j.contains("kernel")) m.kernel = kernel_from_json(j["kernel"]);
    m.resize = j.value("resize", 1.0);
    if (m.resize <= 0) throw std::runtime_error("load_manifest: resize factor must be > 0");
    m.fps = j.value("fps", 0.0);

    for (const auto& f : m.frames) {
        if (!fs::exists(fs::path(m.root) / f)) {
            throw std::runtime_error("load_manifest: missing frame file " + f);
        }
    }

    // clamp out-of-bounds annotations against the first frame's dims
    const Image8 first = read_image(m.frame_path(0));
    const double max_x = static_cast<double>(first.w) - 1e-3;
    const double max_y = static_cast<double>(first.h) - 1e-3;
    for (auto& hp : m.points) {
        for (auto& p : hp.points) {
            const double x = std::clamp(p[0], 0.0, max_x);
            const double y = std::clamp(p[1], 0.0, max_y);
            if (x != p[0] || y != p[1]) ++m.clamped_points;
            p = {x, y};
        }
    }
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    json j;
    j["frames"] = m.frames;
    json pts = json::array();
    for (const auto& hp : m.points) {
        json entry = json::array();
        for (const auto& p : hp.points) entry.push_back({p[0], p[1]});
        pts.push_back(std::move(entry));
    }
    j["points"] = std::move(pts);
    j["roi"] = m.roi.empty() ? json(nullptr) : json(m.roi);
    j["kernel"] = kernel_to_json(m.kernel);
    j["resize"] = m.resize;
    j["fps"] = m.fps;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_manifest: cannot open " + path);
    os << j.dump(2) << "\n";
}

ClipGeometry clip_geometry(const DatasetManifest& m) {
    const Image8 first = read_image(m.frame_path(0));
    ClipGeometry g;
    g.src_h = first.h;
    g.src_w = first.w;
    g.channels = first.channels;
    g.resized_h = static_cast<index_t>(std::llround(static_cast<double>(first.h) * m.resize));
    g.resized_w = static_cast<index_t>(std::llround(static_cast<double>(first.w) * m.resize));
    g.h = (g.resized_h / 16) * 16;
    g.w = (g.resized_w / 16) * 16;
    if (g.h < 16 || g.w < 16) {
        throw std::runtime_error("clip_geometry: frames too small after resize (" +
                                 std::to_string(g.resized_h) + "x" + std::to_string(g.resized_w) +
                                 ")");
    }
    g.crop_y = (g.resized_h - g.h) / 2;
    g.crop_x = (g.resized_w - g.w) / 2;
    return g;
}

namespace {

// image -> (1, c, 1, h, w) in [0,1], resized and center-cropped
Tensor<float> prepare_frame(const Image8& img, const ClipGeometry& geo) {
    Tensor<float> full(Shape5{1, geo.channels, 1, img.h, img.w});
    for (int c = 0; c < geo.channels; ++c)
        for (index_t y = 0; y < img.h; ++y)
            for (index_t x = 0; x < img.w; ++x)
                full.at(0, c, 0, y, x) = static_cast<float>(img.at(y, x, c)) / 255.0f;
    Tensor<float> resized =
        (geo.resized_h == img.h && geo.resized_w == img.w)
            ? std::move(full)
            : bilinear_resize(full, static_cast<double>(geo.resized_h) / img.h,
                              static_cast<double>(geo.resized_w) / img.w);
    Tensor<float> out(Shape5{1, geo.channels, 1, geo.h, geo.w});
    for (int c = 0; c < geo.channels; ++c)
        for (index_t y = 0; y < geo.h; ++y)
            for (index_t x = 0; x < geo.w; ++x)
                out.at(0, c, 0, y, x) = resized.at(0, c, 0, y + geo.crop_y, x + geo.crop_x);
    return out;
}

RoiMask load_roi(const DatasetManifest& m, const ClipGeometry& geo) {
    if (m.roi.empty()) return RoiMask(geo.h, geo.w, 1);
    const Image8 img = read_image(m.roi_path());
    RoiMask out(geo.h, geo.w, 0);
    for (index_t y = 0; y < geo.h; ++y) {
        const index_t sy = std::min<index_t>(
            img.h - 1, static_cast<index_t>((y + geo.crop_y) * img.h / geo.resized_h));
        for (index_t x = 0; x < geo.w; ++x) {
            const index_t sx = std::min<index_t>(
                img.w - 1, static_cast<index_t>((x + geo.crop_x) * img.w / geo.resized_w));
            out.grid[static_cast<size_t>(y * out.w + x)] = img.at(sy, sx) != 0 ? 1 : 0;
        }
    }
    return out;
}

HeadPoints transform_points(const HeadPoints& src, const ClipGeometry& geo) {
    HeadPoints out;
    const double fx = static_cast<double>(geo.resized_w) / static_cast<double>(geo.src_w);
    const double fy = static_cast<double>(geo.resized_h) / static_cast<double>(geo.src_h);
    for (const auto& p : src.points) {
        const double x = p[0] * fx - static_cast<double>(geo.crop_x);
        const double y = p[1] * fy - static_cast<double>(geo.crop_y);
        if (x < 0 || y < 0 || x >= static_cast<double>(geo.w) || y >= static_cast<double>(geo.h)) {
            continue;  // cropped away
        }
        out.points.push_back({x, y});
    }
    return out;
}

DensityMap render_with_policy(const HeadPoints& pts, const KernelPolicy& k, index_t h, index_t w) {
    if (k.type == KernelPolicy::Type::Adaptive && pts.size() >= 2) {
        return render_density(pts, adaptive_sigmas(pts, k.k, k.beta), h, w);
    }
    return render_density(pts, k.sigma, h, w);
}

}  // namespace

ClipSample materialize_clip(const DatasetManifest& m, const ClipGeometry& geo, index_t start,
                            index_t length) {
    if (start < 0 || start + length > static_cast<index_t>(m.frames.size())) {
        throw std::invalid_argument("materialize_clip: window out of range");
    }
    ClipSample clip;
    clip.input = Tensor<float>(Shape5{1, geo.channels, length, geo.h, geo.w});
    const RoiMask roi_full = load_roi(m, geo);
    clip.roi_small = downscale_roi(roi_full, 16);

    for (index_t t = 0; t < length; ++t) {
        const index_t fi = start + t;
        const Image8 img = read_image(m.frame_path(static_cast<size_t>(fi)));
        if (img.h != geo.src_h || img.w != geo.src_w || img.channels != geo.channels) {
            throw std::runtime_error("materialize_clip: frame " + m.frames[static_cast<size_t>(fi)] +
                                     " dims differ from the sequence");
        }
        Tensor<float> frame = prepare_frame(img, geo);
        apply_roi(frame, roi_full);
        for (int c = 0; c < geo.channels; ++c)
            for (index_t y = 0; y < geo.h; ++y)
                for (index_t x = 0; x < geo.w; ++x)
                    clip.input.at(0, c, t, y, x) = frame.at(0, c, 0, y, x);

        const HeadPoints pts = transform_points(m.points[static_cast<size_t>(fi)], geo);
        DensityMap full = render_with_policy(pts, m.kernel, geo.h, geo.w);
        DensityMap small = downscale_gt(full);
        apply_roi(small, clip.roi_small);
        clip.counts.push_back(small.sum());
        clip.targets.push_back(std::move(small));
        clip.frame_indices.push_back(fi);
    }
    return clip;
}

std::vector<index_t> window_starts(index_t num_frames, index_t length, index_t stride,
                                   bool eval_tiling) {
    if (length < 1 || length > num_frames) {
        throw std::invalid_argument("window_starts: window length " + std::to_string(length) +
                                    " exceeds sequence length " + std::to_string(num_frames));
    }
    std::vector<index_t> starts;
    if (eval_tiling) {
        for (index_t s = 0; s + length <= num_frames; s += length) starts.push_back(s);
        if (starts.empty() || starts.back() + length < num_frames) {
            starts.push_back(num_frames - length);  // right-aligned remainder
        }
    } else {
        if (stride < 1) throw std::invalid_argument("window_starts: stride must be >= 1");
        for (index_t s = 0; s + length <= num_frames; s += stride) starts.push_back(s);
    }
    return starts;
}

std::vector<ClipSample> make_windows(const DatasetManifest& m, index_t length, index_t stride,
                                     bool eval_tiling) {
    const ClipGeometry geo = clip_geometry(m);
    std::vector<ClipSample> out;
    for (index_t s :
         window_starts(static_cast<index_t>(m.frames.size()), length, stride, eval_tiling)) {
        out.push_back(materialize_clip(m, geo, s, length));
    }
    return out;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
    if (num_frames < 1) throw std::invalid_argument("SynthConfig: num_frames must be >= 1");
    if (height % 16 != 0 || width % 16 != 0) {
        throw std::invalid_argument("SynthConfig: dims must be divisible by 16");
    }
    if (min_persons < 1 || max_persons < min_persons) {
        throw std::invalid_argument("SynthConfig: bad person count range");
    }
    if (max_displacement < 0) throw std::invalid_argument("SynthConfig: displacement must be >= 0");
    if (blob_sigma <= 0) throw std::invalid_argument("SynthConfig: blob_sigma must be > 0");
}

SynthSequence synth_sequence(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int count = static_cast<int>(rng.uniform_int(cfg.min_persons, cfg.max_persons));

    const double max_sigma = cfg.blob_sigma * (1.0 + std::abs(cfg.perspective_gradient) * 0.5);
    const double margin = std::ceil(4.0 * max_sigma) + 1.0;
    const double lo_x = margin, hi_x = static_cast<double>(cfg.width) - 1.0 - margin;
    const double lo_y = margin, hi_y = static_cast<double>(cfg.height) - 1.0 - margin;
    if (lo_x >= hi_x || lo_y >= hi_y) {
        throw std::invalid_argument("synth_sequence: image too small for the blob size");
    }

    std::vector<std::array<double, 2>> pos(static_cast<size_t>(count));
    for (auto& p : pos) p = {rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};

    auto reflect = [](double v, double lo, double hi) {
        while (v < lo || v > hi) {
            if (v < lo) v = 2.0 * lo - v;
            if (v > hi) v = 2.0 * hi - v;
        }
        return v;
    };

    SynthSequence seq;
    for (int f = 0; f < cfg.num_frames; ++f) {
        if (f > 0) {
            for (auto& p : pos) {
                p[0] = reflect(p[0] + rng.uniform(-cfg.max_displacement, cfg.max_displacement),
                               lo_x, hi_x);
                p[1] = reflect(p[1] + rng.uniform(-cfg.max_displacement, cfg.max_displacement),
                               lo_y, hi_y);
            }
        }
        Image8 img;
        img.h = cfg.height;
        img.w = cfg.width;
        img.channels = 1;
        img.pixels.assign(static_cast<size_t>(img.h * img.w), 16);  // dark background
        HeadPoints pts;
        for (const auto& p : pos) {
            pts.points.push_back(p);
            const double sigma =
                cfg.blob_sigma *
                (1.0 + cfg.perspective_gradient * (p[1] / static_cast<double>(cfg.height) - 0.5));
            const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
            const index_t r = static_cast<index_t>(std::ceil(4.0 * sigma));
            const index_t y0 = std::max<index_t>(0, static_cast<index_t>(p[1]) - r);
            const index_t y1 = std::min<index_t>(img.h - 1, static_cast<index_t>(p[1]) + r);
            const index_t x0 = std::max<index_t>(0, static_cast<index_t>(p[0]) - r);
            const index_t x1 = std::min<index_t>(img.w - 1, static_cast<index_t>(p[0]) + r);
            for (index_t y = y0; y <= y1; ++y) {
                for (index_t x = x0; x <= x1; ++x) {
                    const double dy = static_cast<double>(y) - p[1];
                    const double dx = static_cast<double>(x) - p[0];
                    const double add = 200.0 * std::exp(-(dx * dx + dy * dy) * inv2s2);
                    const int v = static_cast<int>(img.at(y, x)) + static_cast<int>(add);
                    img.at(y, x) = static_cast<std::uint8_t>(std::min(v, 255));
                }
            }
        }
        seq.frames.push_back(std::move(img));
        seq.points.push_back(std::move(pts));
    }
    return seq;
}

std::string write_synth_dataset(const SynthConfig& cfg, const std::string& out_dir) {
    const SynthSequence seq = synth_sequence(cfg);
    fs::create_directories(fs::path(out_dir) / "frames");

    DatasetManifest m;
    m.root = out_dir;
    m.kernel = cfg.kernel;
    m.resize = 1.0;
    m.fps = cfg.fps;
    for (size_t i = 0; i < seq.frames.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "frames/frame_%05zu.pgm", i);
        write_pnm((fs::path(out_dir) / name).string(), seq.frames[i]);
        m.frames.push_back(name);
        m.points.push_back(seq.points[i]);
    }
    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    save_manifest(manifest_path, m);
    return manifest_path;
}

}  // namespace e3d
