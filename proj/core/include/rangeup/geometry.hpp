#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rangeup/errors.hpp"

namespace rangeup {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline double planar_radius(const Vec3& v) { return std::hypot(v.x, v.y); }

// Unordered 3D points in meters, with optional per-point reflectance in [0,1].
struct PointCloud {
    std::vector<Vec3> points;
    std::optional<std::vector<double>> intensity;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    void validate() const;
};

// Per-beam elevation angles and vertical offsets. Elevations are stored in the
// projection convention (the angle compared against atan2(offset - z, r)) and
// are strictly decreasing from row 0 downward.
struct BeamModel {
    std::vector<double> elevations; // radians, one per image row
    std::vector<double> offsets;    // meters, same length
    double max_range = 0.0;         // meters

    int rows() const { return static_cast<int>(elevations.size()); }
    void validate() const;

    // Evenly spaced beams from elev_top (row 0) down to elev_bottom, zero offsets.
    static BeamModel uniform(int n_beams, double elev_top, double elev_bottom,
                             double max_range);
};

// H x W depth grid in meters with a validity mask. Invalid cells carry depth 0.
struct RangeImage {
    int height = 0;
    int width = 0;
    std::vector<double> depth;        // row-major, height*width
    std::vector<std::uint8_t> valid;  // row-major, 0/1
    BeamModel beam_model;

    static RangeImage zeros(const BeamModel& bm, int width);

    std::size_t idx(int v, int u) const { return static_cast<std::size_t>(v) * width + u; }
    double at(int v, int u) const { return depth[idx(v, u)]; }
    double& at(int v, int u) { return depth[idx(v, u)]; }
    bool is_valid(int v, int u) const { return valid[idx(v, u)] != 0; }
    void set(int v, int u, double d) {
        depth[idx(v, u)] = d;
        valid[idx(v, u)] = d > 0.0 ? 1 : 0;
    }
    std::size_t valid_count() const;
    void validate() const;
};

// Accumulator-grid configuration for beam-model estimation.
struct HoughConfig {
    int elevation_bins = 512;
    std::pair<double, double> elevation_range = {-30.0 * M_PI / 180.0, 15.0 * M_PI / 180.0};
    int offset_bins = 16;
    std::pair<double, double> offset_range = {-0.3, 0.3};

    void validate() const;
    double elevation_bin_width() const {
        return (elevation_range.second - elevation_range.first) / elevation_bins;
    }
    double offset_bin_width() const {
        return (offset_range.second - offset_range.first) / offset_bins;
    }
};

struct ProjectionStats {
    std::size_t input_points = 0;
    std::size_t skipped_degenerate = 0;
    std::size_t skipped_out_of_range = 0;
    std::size_t landed_points = 0;    // points that reached some cell
    std::size_t colliding_points = 0; // landed points sharing a cell with another

    double collision_fraction() const {
        return landed_points == 0 ? 0.0
                                  : static_cast<double>(colliding_points) / landed_points;
    }
};

// Row index of the beam minimizing |elevation_b - atan2(offset_b - z, r)|.
// Ties break toward the smaller index. Throws GeometryError when x = y = 0.
int assign_beam(const Vec3& p, const BeamModel& bm);

// Azimuth column: floor((1 - (atan2(y,x) + pi) / (2 pi)) * W), wrapped into [0, W).
int azimuth_column(const Vec3& p, int width);

// Projects a cloud into a range image. Cell collisions keep the minimum range;
// degenerate or out-of-range points are skipped and counted in `stats`.
RangeImage spherical_project(const PointCloud& cloud, const BeamModel& bm, int width,
                             ProjectionStats* stats = nullptr);

// Ray geometry of one image cell: azimuth at the column center, beam elevation
// and offset from the model. Shared by back-projection and the BEV raster.
struct CellRay {
    double cos_elev = 1.0;
    double sin_elev = 0.0;
    double cos_az = 1.0;
    double sin_az = 0.0;
    double offset = 0.0;
};

CellRay cell_ray(const BeamModel& bm, int v, int u, int width);

// Solves the ray point whose Euclidean range equals `depth`.
Vec3 cell_point(const CellRay& ray, double depth);

// d(point)/d(depth) for the same mapping; zero when depth is outside the
// geometric domain of the ray (depth^2 <= (offset*cos_elev)^2).
Vec3 cell_point_depth_jacobian(const CellRay& ray, double depth);

// One point per valid cell, reconstructed at the column center.
PointCloud back_project(const RangeImage& img);

// Hough-voting estimation of per-beam elevations and offsets. Requires at
// least n_beams * 50 points; throws CalibrationError when fewer than n_beams
// peaks are found.
BeamModel estimate_beam_model(const PointCloud& cloud, int n_beams,
                              const HoughConfig& cfg = {});

} // namespace rangeup
