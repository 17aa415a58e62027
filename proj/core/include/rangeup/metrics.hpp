#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rangeup/geometry.hpp"

namespace rangeup {

// Axis-aligned voxelization domain for occupancy IoU.
struct VoxelGridSpec {
    double voxel_size = 0.1;
    Vec3 min{-80.0, -80.0, -4.0};
    Vec3 max{80.0, 80.0, 4.0};

    void validate() const;
};

// 2D (x, y) occupancy histogram domain for the JSD metric.
struct BevHistogramSpec {
    double x_min = -50.0, x_max = 50.0;
    double y_min = -50.0, y_max = 50.0;
    int bins_x = 100, bins_y = 100;

    void validate() const;
};

struct DepthBin {
    double lo = 0.0;
    double hi = 0.0;
};

struct BinMetrics {
    DepthBin bin;
    std::optional<double> iou; // null when either side of the bin is empty
    std::optional<double> cd;
    std::size_t n_pred = 0;
    std::size_t n_gt = 0;
};

struct MetricsReport {
    double iou = 0.0;
    double cd = 0.0;                // meters
    std::optional<double> mae;     // normalized depth, filled by image-level evaluation
    std::optional<double> jsd;     // bits
    std::vector<BinMetrics> per_bin;

    nlohmann::json to_json() const;

    // Fixed-column CSV row; per-bin columns follow the scalar metrics.
    static std::string csv_header(const std::vector<DepthBin>& bins);
    std::string csv_row(const std::string& frame_id) const;
};

// |occupied(pred) ∩ occupied(gt)| / |occupied(pred) ∪ occupied(gt)| over voxel
// index sets; points outside the bounds are ignored.
double voxel_iou(const PointCloud& pred, const PointCloud& gt, const VoxelGridSpec& spec);

// 0.5 * (mean nearest-neighbor distance pred->gt + gt->pred), Euclidean,
// exact (kd-tree accelerated).
double chamfer(const PointCloud& pred, const PointCloud& gt);

// Mean |pred - gt| / max_range over all H*W cells; invalid cells contribute
// their stored zeros.
double image_mae(const RangeImage& pred, const RangeImage& gt, double max_range);

// Jensen-Shannon divergence (base-2) between normalized 2D occupancy
// histograms; in [0, 1].
double jsd_bev(const PointCloud& pred, const PointCloud& gt, const BevHistogramSpec& spec);

// Default depth stratification {[0,10), [10,20), [20,30), [30,50), [50,80)}.
std::vector<DepthBin> default_depth_bins();

// Whole-cloud voxel IoU and chamfer plus per-bin metrics, partitioned by
// planar distance sqrt(x^2 + y^2). Bins with either side empty report null
// metrics and the counts. mae/jsd are left unset.
MetricsReport stratified_eval(const PointCloud& pred, const PointCloud& gt,
                              const std::vector<DepthBin>& bins, const VoxelGridSpec& spec);

} // namespace rangeup
