#include "rangeup/metrics.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "kdtree.hpp"

namespace rangeup {

void VoxelGridSpec::validate() const {
    if (!(voxel_size > 0.0)) throw ArgumentError("voxel_size must be positive");
    if (!(max.x > min.x && max.y > min.y && max.z > min.z)) {
        throw ArgumentError("voxel bounds must be non-degenerate");
    }
}

void BevHistogramSpec::validate() const {
    if (!(x_max > x_min) || !(y_max > y_min)) {
        throw ArgumentError("histogram ranges must be non-degenerate");
    }
    if (bins_x < 2 || bins_y < 2) throw ArgumentError("histogram bins must be >= 2");
}

namespace {

std::unordered_set<std::int64_t> occupied_voxels(const PointCloud& cloud,
                                                 const VoxelGridSpec& spec) {
    const std::int64_t nx =
        static_cast<std::int64_t>(std::ceil((spec.max.x - spec.min.x) / spec.voxel_size));
    const std::int64_t ny =
        static_cast<std::int64_t>(std::ceil((spec.max.y - spec.min.y) / spec.voxel_size));
    std::unordered_set<std::int64_t> cells;
    for (const auto& p : cloud.points) {
        if (p.x < spec.min.x || p.x >= spec.max.x || p.y < spec.min.y || p.y >= spec.max.y ||
            p.z < spec.min.z || p.z >= spec.max.z) {
            continue;
        }
        const auto ix = static_cast<std::int64_t>(std::floor((p.x - spec.min.x) / spec.voxel_size));
        const auto iy = static_cast<std::int64_t>(std::floor((p.y - spec.min.y) / spec.voxel_size));
        const auto iz = static_cast<std::int64_t>(std::floor((p.z - spec.min.z) / spec.voxel_size));
        cells.insert((iz * ny + iy) * nx + ix);
    }
    return cells;
}

double directed_mean_nn(const std::vector<Vec3>& from, const detail::KdTree& to_tree) {
    double sum = 0.0;
    for (const auto& p : from) sum += std::sqrt(to_tree.nearest_sq(p));
    return sum / static_cast<double>(from.size());
}

std::vector<double> bev_histogram(const PointCloud& cloud, const BevHistogramSpec& spec,
                                  std::size_t* in_bounds) {
    std::vector<double> h(static_cast<std::size_t>(spec.bins_x) * spec.bins_y, 0.0);
    const double wx = (spec.x_max - spec.x_min) / spec.bins_x;
    const double wy = (spec.y_max - spec.y_min) / spec.bins_y;
    std::size_t count = 0;
    for (const auto& p : cloud.points) {
        if (p.x < spec.x_min || p.x >= spec.x_max || p.y < spec.y_min || p.y >= spec.y_max) {
            continue;
        }
        const int ix = static_cast<int>(std::floor((p.x - spec.x_min) / wx));
        const int iy = static_cast<int>(std::floor((p.y - spec.y_min) / wy));
        h[static_cast<std::size_t>(ix) * spec.bins_y + iy] += 1.0;
        ++count;
    }
    if (in_bounds) *in_bounds = count;
    if (count > 0) {
        for (auto& v : h) v /= static_cast<double>(count);
    }
    return h;
}

} // namespace

double voxel_iou(const PointCloud& pred, const PointCloud& gt, const VoxelGridSpec& spec) {
    spec.validate();
    if (pred.empty() || gt.empty()) throw MetricError("voxel_iou needs non-empty clouds");
    const auto a = occupied_voxels(pred, spec);
    const auto b = occupied_voxels(gt, spec);
    if (a.empty() || b.empty()) {
        throw MetricError("voxel_iou undefined: all points out of bounds on one side");
    }
    std::size_t inter = 0;
    for (const auto& c : a) inter += b.count(c);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double chamfer(const PointCloud& pred, const PointCloud& gt) {
    if (pred.empty() || gt.empty()) throw MetricError("chamfer needs non-empty clouds");
    const detail::KdTree pred_tree(pred.points);
    const detail::KdTree gt_tree(gt.points);
    const double fwd = directed_mean_nn(pred.points, gt_tree);
    const double bwd = directed_mean_nn(gt.points, pred_tree);
    return 0.5 * (fwd + bwd);
}

double image_mae(const RangeImage& pred, const RangeImage& gt, double max_range) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw ArgumentError("image_mae dimension mismatch");
    }
    if (!(max_range > 0.0)) throw ArgumentError("max_range must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.depth.size(); ++i) {
        sum += std::abs(pred.depth[i] - gt.depth[i]) / max_range;
    }
    return sum / static_cast<double>(pred.depth.size());
}

double jsd_bev(const PointCloud& pred, const PointCloud& gt, const BevHistogramSpec& spec) {
    spec.validate();
    if (pred.empty() || gt.empty()) throw MetricError("jsd_bev needs non-empty clouds");
    std::size_t na = 0, nb = 0;
    const auto p = bev_histogram(pred, spec, &na);
    const auto q = bev_histogram(gt, spec, &nb);
    if (na == 0 || nb == 0) {
        throw MetricError("jsd_bev undefined: no in-bounds mass on one side");
    }
    double jsd = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) jsd += 0.5 * p[i] * std::log2(p[i] / m);
        if (q[i] > 0.0) jsd += 0.5 * q[i] * std::log2(q[i] / m);
    }
    return jsd;
}

std::vector<DepthBin> default_depth_bins() {
    return {{0.0, 10.0}, {10.0, 20.0}, {20.0, 30.0}, {30.0, 50.0}, {50.0, 80.0}};
}

MetricsReport stratified_eval(const PointCloud& pred, const PointCloud& gt,
                              const std::vector<DepthBin>& bins, const VoxelGridSpec& spec) {
    for (std::size_t i = 0; i < bins.size(); ++i) {
        if (!(bins[i].hi > bins[i].lo)) throw ArgumentError("depth bins must be non-degenerate");
        if (i > 0 && bins[i].lo != bins[i - 1].hi) {
            throw ArgumentError("depth bins must be sorted, disjoint and covering");
        }
    }

    MetricsReport report;
    report.iou = voxel_iou(pred, gt, spec);
    report.cd = chamfer(pred, gt);

    for (const auto& bin : bins) {
        PointCloud pa, pb;
        for (const auto& p : pred.points) {
            const double r = planar_radius(p);
            if (r >= bin.lo && r < bin.hi) pa.points.push_back(p);
        }
        for (const auto& p : gt.points) {
            const double r = planar_radius(p);
            if (r >= bin.lo && r < bin.hi) pb.points.push_back(p);
        }
        BinMetrics bm;
        bm.bin = bin;
        bm.n_pred = pa.size();
        bm.n_gt = pb.size();
        if (!pa.empty() && !pb.empty()) {
            try {
                bm.iou = voxel_iou(pa, pb, spec);
            } catch (const MetricError&) {
                // all points of a side out of voxel bounds: leave null
            }
            bm.cd = chamfer(pa, pb);
        }
        report.per_bin.push_back(std::move(bm));
    }
    return report;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["iou"] = iou;
    j["cd"] = cd;
    j["mae"] = mae ? nlohmann::json(*mae) : nlohmann::json(nullptr);
    j["jsd"] = jsd ? nlohmann::json(*jsd) : nlohmann::json(nullptr);
    j["per_bin"] = nlohmann::json::array();
    for (const auto& b : per_bin) {
        nlohmann::json jb;
        jb["lo"] = b.bin.lo;
        jb["hi"] = b.bin.hi;
        jb["iou"] = b.iou ? nlohmann::json(*b.iou) : nlohmann::json(nullptr);
        jb["cd"] = b.cd ? nlohmann::json(*b.cd) : nlohmann::json(nullptr);
        jb["n_pred"] = b.n_pred;
        jb["n_gt"] = b.n_gt;
        j["per_bin"].push_back(jb);
    }
    return j;
}

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

std::string MetricsReport::csv_header(const std::vector<DepthBin>& bins) {
    std::ostringstream os;
    os << "frame,iou,cd,mae,jsd";
    for (std::size_t i = 0; i < bins.size(); ++i) {
        os << ",bin" << i << "_lo,bin" << i << "_hi,bin" << i << "_iou,bin" << i << "_cd,bin" << i
           << "_n_pred,bin" << i << "_n_gt";
    }
    return os.str();
}

std::string MetricsReport::csv_row(const std::string& frame_id) const {
    std::ostringstream os;
    os << frame_id << ',' << format_double(iou) << ',' << format_double(cd) << ','
       << (mae ? format_double(*mae) : std::string()) << ','
       << (jsd ? format_double(*jsd) : std::string());
    for (const auto& b : per_bin) {
        os << ',' << format_double(b.bin.lo) << ',' << format_double(b.bin.hi) << ','
           << (b.iou ? format_double(*b.iou) : std::string()) << ','
           << (b.cd ? format_double(*b.cd) : std::string()) << ',' << b.n_pred << ',' << b.n_gt;
    }
    return os.str();
}

} // namespace rangeup
