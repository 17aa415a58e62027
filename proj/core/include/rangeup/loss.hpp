#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "rangeup/geometry.hpp"

namespace rangeup {

// Unconstrained per-row mask parameters; the mask is softplus(raw) normalized
// to mean 1 across rows and broadcast along the width.
struct MaskParams {
    std::vector<double> raw;
};

struct LossWeights {
    double alpha = 0.1; // BEV constraint weight
    double beta = 0.5;  // adaptive-L1 weight

    void validate() const;
};

// Soft occupancy raster domain. Rows index x, columns index y.
struct BevGridSpec {
    double x_min = -40.0, x_max = 40.0;
    double y_min = -40.0, y_max = 40.0;
    int rows = 64, cols = 64;

    void validate() const;
    double res_x() const { return (x_max - x_min) / rows; }
    double res_y() const { return (y_max - y_min) / cols; }
};

struct BevGrid {
    int rows = 0, cols = 0;
    std::vector<double> values; // row-major, nonnegative soft occupancy mass
    BevGridSpec spec;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
    double total_mass() const;
};

// Loss value with analytic gradients. grad_image is row-major H*W with
// d(loss)/d(pixel value); grad_mask (when applicable) is d(loss)/d(raw_v).
struct LossValueGrad {
    double value = 0.0;
    int height = 0, width = 0;
    std::vector<double> grad_image;
    std::vector<double> grad_mask; // empty when the loss has no mask path

    nlohmann::json to_json() const;
};

// Mean absolute pixel difference over the full grid; gradient is
// sign(pred - gt) / (H*W) with sign(0) = 0. Depths are expected to be
// pre-normalized by max_range.
LossValueGrad l1_loss(const RangeImage& pred, const RangeImage& gt);

// Row weights softplus(raw) scaled to mean 1 (pairwise-summed mean so that
// equal raws yield an exactly uniform mask for power-of-two row counts).
std::vector<double> mask_row_weights(const MaskParams& params);

// Full H x W mask: row weights broadcast along the width.
std::vector<double> mask_from_params(const MaskParams& params, int width);

// Mask-weighted L1 with gradients for both the image and the raw mask
// parameters (chain rule through softplus and the mean normalization).
LossValueGrad adaptive_l1(const RangeImage& pred, const RangeImage& gt,
                          const MaskParams& params);

// One pixel's bilinear splat: the four affected cells, their weights, and the
// weight derivatives with respect to the pixel's stored value.
struct PixelSplat {
    std::size_t pixel = 0;
    std::array<std::size_t, 4> cell{};
    std::array<double, 4> weight{};
    std::array<double, 4> dweight_dvalue{};
};

struct SoftRaster {
    BevGrid grid;
    std::vector<PixelSplat> splats; // one per contributing valid pixel
};

// Back-projects each valid pixel (stored values are normalized depths; metric
// depth is value * beam_model.max_range) and splats unit mass bilinearly over
// the four surrounding cells. Out-of-range points clamp-splat at the boundary
// with zero gradient through the clamp.
SoftRaster soft_bev_raster(const RangeImage& img, const BevGridSpec& spec);

// Mean absolute difference between the pred and gt soft rasters; gradient via
// the chain rule through the pred splat weights and back-projection.
LossValueGrad bev_loss(const RangeImage& pred, const RangeImage& gt, const BevGridSpec& spec);

// alpha * bev + beta * adaptive_l1 + l1. Zero-weight components are skipped
// so the reduction to plain L1 is bit-exact.
LossValueGrad total_loss(const RangeImage& pred, const RangeImage& gt, const MaskParams& params,
                         const LossWeights& weights, const BevGridSpec& spec);

enum class LossOp { L1, AdaptiveL1, Bev, Total };

const char* loss_op_name(LossOp op);

struct LossInstance {
    RangeImage pred;
    RangeImage gt;
    MaskParams params;
    LossWeights weights;
    BevGridSpec bev;
};

struct GradCheckReport {
    std::string op;
    double eps = 0.0;
    double max_rel_error = 0.0;       // worst over both variable groups
    double max_rel_error_image = 0.0;
    double max_rel_error_mask = 0.0;  // zero when the op has no mask path
    std::size_t checked = 0;

    nlohmann::json to_json() const;
};

// Central-difference check of the analytic gradients. Coordinates with
// |analytic| <= 1e-10 are skipped (ties and dead cells).
GradCheckReport grad_check(LossOp op, const LossInstance& inst, double eps = 1e-5);

} // namespace rangeup
