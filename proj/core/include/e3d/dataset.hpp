#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "e3d/density.hpp"
#include "e3d/image_io.hpp"
#include "e3d/tensor.hpp"

namespace e3d {

struct KernelPolicy {
    enum class Type { Fixed, Adaptive };
    Type type = Type::Fixed;
    double sigma = 4.0;  // fixed kernel
    int k = 3;           // adaptive kernel
    double beta = 0.3;
};

// Manifest JSON: {"frames":[...], "points":[[[x,y],...],...], "roi": path-or-null,
//                 "kernel": {...}, "resize": f, "fps": n}
struct DatasetManifest {
    std::string root;  // directory of the manifest file; frame paths are relative to it
    std::vector<std::string> frames;
    std::vector<HeadPoints> points;
    std::string roi;  // empty = no mask
    KernelPolicy kernel;
    double resize = 1.0;
    double fps = 0.0;
    int clamped_points = 0;  // out-of-bounds annotations fixed up at load

    std::string frame_path(size_t i) const;
    std::string roi_path() const;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& m);

// One training window of T consecutive frames.
struct ClipSample {
    Tensor<float> input;              // (1, c_img, T, H, W), values in [0,1]
    std::vector<DensityMap> targets;  // T maps at (H/16, W/16), ROI-masked
    RoiMask roi_small;                // at (H/16, W/16)
    std::vector<double> counts;       // masked GT count per frame
    std::vector<index_t> frame_indices;
};

// Resized-then-cropped geometry shared by every frame of a sequence.
struct ClipGeometry {
    index_t src_h = 0, src_w = 0;      // original frame dims
    index_t resized_h = 0, resized_w = 0;
    index_t crop_y = 0, crop_x = 0;    // center-crop offset after resizing
    index_t h = 0, w = 0;              // final dims, multiples of 16
    int channels = 1;
};

ClipGeometry clip_geometry(const DatasetManifest& m);

// Frames are resized first, annotations scaled accordingly, then density is
// rendered at input resolution and downscaled by 1/16.
ClipSample materialize_clip(const DatasetManifest& m, const ClipGeometry& geo, index_t start,
                            index_t length);

// Window start offsets. Training: sliding windows with the given stride.
// Evaluation: non-overlapping tiling, last window right-aligned when the
// sequence length is not a multiple of T.
std::vector<index_t> window_starts(index_t num_frames, index_t length, index_t stride,
                                   bool eval_tiling);

std::vector<ClipSample> make_windows(const DatasetManifest& m, index_t length, index_t stride,
                                     bool eval_tiling);

// ---------------------------------------------------------------------------
// Synthetic moving-crowd generator

struct SynthConfig {
    std::uint64_t seed = 1;
    int num_frames = 16;
    index_t height = 64, width = 64;
    int min_persons = 10, max_persons = 30;
    double max_displacement = 2.0;  // per-frame random-walk bound, pixels
    double blob_sigma = 2.0;        // appearance only; annotations stay exact centers
    double perspective_gradient = 0.0;  // optional blob-size ramp down the image

    KernelPolicy kernel;
    double fps = 10.0;

    void validate() const;
};

struct SynthSequence {
    std::vector<Image8> frames;
    std::vector<HeadPoints> points;
};

SynthSequence synth_sequence(const SynthConfig& cfg);

// Emits frames/*.pgm plus manifest.json in the same layout real data uses.
std::string write_synth_dataset(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace e3d
