#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rangeup/loss.hpp"
#include "rangeup/metrics.hpp"
#include "rangeup/net.hpp"
#include "rangeup/pipeline.hpp"
#include "rangeup/synth.hpp"

namespace rangeup {

enum class Upsampler { Bilinear, Replicate, ToyNet, Gt };

Upsampler upsampler_from_string(const std::string& name);
const char* upsampler_name(Upsampler u);

struct MetricSpecs {
    VoxelGridSpec voxel;
    BevHistogramSpec jsd;
    std::vector<DepthBin> bins = default_depth_bins();
    double max_range = kDefaultMaxRange;
};

struct MaskFitConfig {
    int steps = 500;
    double learning_rate = 1e-2;
    int schedule_step = 0; // alpha/beta activate at this step (0 = from the start)
};

struct RunConfig {
    std::uint64_t seed = 0;
    int frames = 10;
    int factor = 4;
    Upsampler upsampler = Upsampler::Bilinear;

    // Either a synthetic scene or a directory of packed scan files.
    std::optional<std::string> scans_dir;
    int scan_beams = 64; // beams estimated per scan when scans_dir is set
    SceneSpec scene;

    MetricSpecs metrics;
    LossWeights loss;
    BevGridSpec bev;
    MaskFitConfig maskfit;
    int inpaint_gap = kDefaultInpaintGap;

    net::NetworkConfig net;
    std::optional<std::string> weights_path; // toynet weights; seeded init otherwise

    std::string output_dir = "out";

    void validate() const;
};

// Reads a RunConfig from JSON (all fields optional, defaults above). The
// schema is documented in the README.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

struct FrameResult {
    std::string id;
    bool ok = false;
    std::string message; // error detail when !ok
    MetricsReport report;
};

struct EvalOutput {
    std::vector<FrameResult> frames;
    MetricsReport aggregate; // column-wise mean over successful frames
    std::size_t failed = 0;
    std::string report_path;
    std::string csv_path;
};

// Per frame: ground-truth range image -> row downsample -> inpaint ->
// upsample -> back-project both -> metrics. Writes report.json and
// frames.csv under output_dir. Frame failures are recorded and skipped.
EvalOutput run_eval(const RunConfig& cfg);

// Applies the configured upsampler to a sparse image (used by the CLI).
RangeImage apply_upsampler(const RangeImage& sparse, const RunConfig& cfg,
                           const RangeImage* gt_for_oracle = nullptr);

struct MaskFitResult {
    MaskParams fitted;
    std::vector<double> row_weights; // mask_row_weights(fitted)
    std::vector<double> trace;       // loss per step
    bool diverged = false;
};

// Gradient descent on the mask parameters only, over (pred, gt) pairs from
// the frozen configured upsampler. Before maskfit.schedule_step both loss
// gates (alpha, beta) are zero; after it the configured weights apply.
MaskFitResult run_mask_fit(const RunConfig& cfg);

// Fits a mask to an explicit dataset (exposed for tests and the acceptance
// suite). Images must already be normalized by max_range.
MaskFitResult fit_mask(const std::vector<std::pair<RangeImage, RangeImage>>& pairs,
                       const LossWeights& weights, const BevGridSpec& bev,
                       const MaskFitConfig& fit);

} // namespace rangeup
