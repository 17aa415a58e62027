#include "rangeup/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace rangeup {

void PointCloud::validate() const {
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw ArgumentError("point cloud contains non-finite coordinates");
        }
    }
    if (intensity && intensity->size() != points.size()) {
        throw ArgumentError("intensity length " + std::to_string(intensity->size()) +
                            " does not match point count " + std::to_string(points.size()));
    }
}

void BeamModel::validate() const {
    if (elevations.size() < 2) {
        throw ArgumentError("beam model needs at least 2 beams, got " +
                            std::to_string(elevations.size()));
    }
    if (offsets.size() != elevations.size()) {
        throw ArgumentError("beam model offsets/elevations length mismatch");
    }
    if (!(max_range > 0.0)) {
        throw ArgumentError("beam model max_range must be positive");
    }
    for (std::size_t i = 1; i < elevations.size(); ++i) {
        if (!(elevations[i] < elevations[i - 1])) {
            throw ArgumentError("beam elevations must be strictly decreasing from row 0");
        }
    }
}

BeamModel BeamModel::uniform(int n_beams, double elev_top, double elev_bottom,
                             double max_range) {
    if (n_beams < 2) throw ArgumentError("uniform beam model needs n_beams >= 2");
    if (!(elev_top > elev_bottom)) {
        throw ArgumentError("uniform beam model needs elev_top > elev_bottom");
    }
    BeamModel bm;
    bm.elevations.resize(n_beams);
    bm.offsets.assign(n_beams, 0.0);
    bm.max_range = max_range;
    for (int i = 0; i < n_beams; ++i) {
        const double t = static_cast<double>(i) / (n_beams - 1);
        bm.elevations[i] = elev_top + t * (elev_bottom - elev_top);
    }
    bm.validate();
    return bm;
}

RangeImage RangeImage::zeros(const BeamModel& bm, int width) {
    bm.validate();
    if (width < 1) throw ArgumentError("range image width must be >= 1");
    RangeImage img;
    img.height = bm.rows();
    img.width = width;
    img.depth.assign(static_cast<std::size_t>(img.height) * width, 0.0);
    img.valid.assign(static_cast<std::size_t>(img.height) * width, 0);
    img.beam_model = bm;
    return img;
}

std::size_t RangeImage::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

void RangeImage::validate() const {
    beam_model.validate();
    if (height != beam_model.rows()) {
        throw ArgumentError("range image height does not match beam count");
    }
    const std::size_t n = static_cast<std::size_t>(height) * width;
    if (depth.size() != n || valid.size() != n) {
        throw ArgumentError("range image buffer size mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (valid[i]) {
            if (!(depth[i] > 0.0)) throw ArgumentError("valid cell with non-positive depth");
            if (depth[i] > beam_model.max_range) {
                throw ArgumentError("valid cell with depth beyond max_range");
            }
        } else if (depth[i] != 0.0) {
            throw ArgumentError("invalid cell must carry depth 0");
        }
    }
}

void HoughConfig::validate() const {
    if (elevation_bins < 8 || offset_bins < 8) {
        throw ArgumentError("hough bin counts must be >= 8");
    }
    if (!(elevation_range.second > elevation_range.first) ||
        !(offset_range.second > offset_range.first)) {
        throw ArgumentError("hough ranges must be non-degenerate");
    }
}

int assign_beam(const Vec3& p, const BeamModel& bm) {
    const double r = planar_radius(p);
    if (r == 0.0) {
        throw GeometryError("point on the sensor axis (x = y = 0) has no beam");
    }
    int best = 0;
    double best_res = std::numeric_limits<double>::infinity();
    for (int b = 0; b < bm.rows(); ++b) {
        const double angle = std::atan2(bm.offsets[b] - p.z, r);
        const double res = std::abs(bm.elevations[b] - angle);
        if (res < best_res) { // strict: ties keep the smaller index
            best_res = res;
            best = b;
        }
    }
    return best;
}

int azimuth_column(const Vec3& p, int width) {
    if (p.x == 0.0 && p.y == 0.0) {
        throw GeometryError("point on the sensor axis (x = y = 0) has no azimuth");
    }
    const double frac = (std::atan2(p.y, p.x) + M_PI) / (2.0 * M_PI);
    int u = static_cast<int>(std::floor((1.0 - frac) * width));
    if (u >= width) u -= width;
    if (u < 0) u += width;
    return u;
}

RangeImage spherical_project(const PointCloud& cloud, const BeamModel& bm, int width,
                             ProjectionStats* stats) {
    if (cloud.empty()) throw ArgumentError("cannot project an empty cloud");
    bm.validate();
    RangeImage img = RangeImage::zeros(bm, width);
    std::vector<std::uint32_t> landings(img.depth.size(), 0);

    ProjectionStats local;
    local.input_points = cloud.size();
    for (const auto& p : cloud.points) {
        if (p.x == 0.0 && p.y == 0.0) {
            ++local.skipped_degenerate;
            continue;
        }
        const double d = norm(p);
        if (d > bm.max_range || d <= 0.0) {
            ++local.skipped_out_of_range;
            continue;
        }
        const int v = assign_beam(p, bm);
        const int u = azimuth_column(p, width);
        const std::size_t i = img.idx(v, u);
        ++landings[i];
        ++local.landed_points;
        if (!img.valid[i] || d < img.depth[i]) {
            img.depth[i] = d;
            img.valid[i] = 1;
        }
    }
    for (std::size_t i = 0; i < landings.size(); ++i) {
        if (landings[i] > 1) local.colliding_points += landings[i];
    }
    if (stats) *stats = local;
    return img;
}

CellRay cell_ray(const BeamModel& bm, int v, int u, int width) {
    const double azimuth = M_PI - 2.0 * M_PI * (u + 0.5) / width;
    CellRay ray;
    ray.cos_elev = std::cos(bm.elevations[v]);
    ray.sin_elev = std::sin(bm.elevations[v]);
    ray.cos_az = std::cos(azimuth);
    ray.sin_az = std::sin(azimuth);
    ray.offset = bm.offsets[v];
    return ray;
}

// The ray of a beam with elevation phi and offset dz is
//   r = s*cos(phi), z = dz - s*sin(phi), s >= 0.
// Given the Euclidean range d = sqrt(r^2 + z^2), the ray parameter is
//   s = dz*sin(phi) + sqrt(d^2 - (dz*cos(phi))^2).
static double ray_parameter(const CellRay& ray, double depth) {
    const double k = ray.offset * ray.cos_elev;
    const double disc = depth * depth - k * k;
    if (disc <= 0.0) return -1.0;
    return ray.offset * ray.sin_elev + std::sqrt(disc);
}

Vec3 cell_point(const CellRay& ray, double depth) {
    const double s = ray_parameter(ray, depth);
    if (s <= 0.0) return {0.0, 0.0, ray.offset};
    const double r = s * ray.cos_elev;
    return {r * ray.cos_az, r * ray.sin_az, ray.offset - s * ray.sin_elev};
}

Vec3 cell_point_depth_jacobian(const CellRay& ray, double depth) {
    const double k = ray.offset * ray.cos_elev;
    const double disc = depth * depth - k * k;
    if (disc <= 0.0) return {0.0, 0.0, 0.0};
    const double s = ray.offset * ray.sin_elev + std::sqrt(disc);
    if (s <= 0.0) return {0.0, 0.0, 0.0};
    const double ds_dd = depth / std::sqrt(disc);
    return {ds_dd * ray.cos_elev * ray.cos_az, ds_dd * ray.cos_elev * ray.sin_az,
            -ds_dd * ray.sin_elev};
}

PointCloud back_project(const RangeImage& img) {
    PointCloud cloud;
    cloud.points.reserve(img.valid_count());
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            if (!img.is_valid(v, u)) continue;
            const CellRay ray = cell_ray(img.beam_model, v, u, img.width);
            cloud.points.push_back(cell_point(ray, img.at(v, u)));
        }
    }
    return cloud;
}

namespace {

struct PeakCell {
    int e = 0;
    int o = 0;
    std::int64_t votes = 0;
};

} // namespace

BeamModel estimate_beam_model(const PointCloud& cloud, int n_beams,
                              const HoughConfig& cfg) {
    cfg.validate();
    if (n_beams < 1) throw ArgumentError("estimate_beam_model needs n_beams >= 1");
    if (cloud.size() < static_cast<std::size_t>(n_beams) * 50) {
        throw CalibrationError("need at least " + std::to_string(n_beams * 50) +
                               " points, got " + std::to_string(cloud.size()));
    }

    const int ne = cfg.elevation_bins;
    const int no = cfg.offset_bins;
    const double e_lo = cfg.elevation_range.first;
    const double e_w = cfg.elevation_bin_width();
    const double o_lo = cfg.offset_range.first;
    const double o_w = cfg.offset_bin_width();

    std::vector<std::int64_t> acc(static_cast<std::size_t>(ne) * no, 0);
    double max_norm = 0.0;
    for (const auto& p : cloud.points) {
        const double r = planar_radius(p);
        if (r == 0.0) continue;
        max_norm = std::max(max_norm, norm(p));
        for (int oi = 0; oi < no; ++oi) {
            const double off = o_lo + (oi + 0.5) * o_w;
            const double angle = std::atan2(off - p.z, r);
            const int ei = static_cast<int>(std::floor((angle - e_lo) / e_w));
            if (ei < 0 || ei >= ne) continue;
            ++acc[static_cast<std::size_t>(ei) * no + oi];
        }
    }

    // Greedy non-maximum suppression: visit cells by descending vote count and
    // keep those not adjacent (3x3) to an already selected peak.
    std::vector<std::size_t> order(acc.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (acc[a] != acc[b]) return acc[a] > acc[b];
        return a < b;
    });

    std::vector<PeakCell> peaks;
    for (std::size_t cell : order) {
        if (acc[cell] <= 0) break;
        const int ei = static_cast<int>(cell / no);
        const int oi = static_cast<int>(cell % no);
        bool suppressed = false;
        for (const auto& pk : peaks) {
            if (std::abs(pk.e - ei) <= 1 && std::abs(pk.o - oi) <= 1) {
                suppressed = true;
                break;
            }
        }
        if (suppressed) continue;
        peaks.push_back({ei, oi, acc[cell]});
        if (static_cast<int>(peaks.size()) == n_beams) break;
    }

    if (static_cast<int>(peaks.size()) < n_beams) {
        throw CalibrationError("found only " + std::to_string(peaks.size()) +
                               " accumulator peaks, need " + std::to_string(n_beams));
    }

    // Refine each peak as the vote-weighted centroid of its 3x3 neighborhood.
    BeamModel bm;
    bm.max_range = max_norm > 0.0 ? max_norm : 1.0;
    for (const auto& pk : peaks) {
        double wsum = 0.0, esum = 0.0, osum = 0.0;
        for (int de = -1; de <= 1; ++de) {
            for (int dn = -1; dn <= 1; ++dn) {
                const int ei = pk.e + de;
                const int oi = pk.o + dn;
                if (ei < 0 || ei >= ne || oi < 0 || oi >= no) continue;
                const double w = static_cast<double>(acc[static_cast<std::size_t>(ei) * no + oi]);
                wsum += w;
                esum += w * (e_lo + (ei + 0.5) * e_w);
                osum += w * (o_lo + (oi + 0.5) * o_w);
            }
        }
        bm.elevations.push_back(esum / wsum);
        bm.offsets.push_back(osum / wsum);
    }

    // Row 0 carries the largest elevation in the projection convention.
    std::vector<std::size_t> idx(bm.elevations.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return bm.elevations[a] > bm.elevations[b];
    });
    BeamModel sorted;
    sorted.max_range = bm.max_range;
    for (std::size_t i : idx) {
        sorted.elevations.push_back(bm.elevations[i]);
        sorted.offsets.push_back(bm.offsets[i]);
    }
    for (std::size_t i = 1; i < sorted.elevations.size(); ++i) {
        if (!(sorted.elevations[i] < sorted.elevations[i - 1])) {
            throw CalibrationError("estimated beams are not strictly separated in elevation");
        }
    }
    return sorted;
}

} // namespace rangeup
