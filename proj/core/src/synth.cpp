#include "rangeup/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace rangeup {

void SceneSpec::validate() const {
    if (!(ground_half_extent > 0.0)) throw ArgumentError("ground extent must be positive");
    if (box_count < 0 || pole_count < 0) throw ArgumentError("obstacle counts must be >= 0");
    if (width < 1) throw ArgumentError("scene width must be >= 1");
    beams.validate();
}

SceneGeometry build_scene_geometry(const SceneSpec& spec) {
    SceneGeometry geom;
    geom.boxes = spec.fixed_boxes;
    geom.poles = spec.fixed_poles;

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int i = 0; i < spec.box_count; ++i) {
        const double dist = spec.box_min_dist + unit(rng) * (spec.box_max_dist - spec.box_min_dist);
        const double a = angle(rng);
        const double sx = spec.box_min_size + unit(rng) * (spec.box_max_size - spec.box_min_size);
        const double sy = spec.box_min_size + unit(rng) * (spec.box_max_size - spec.box_min_size);
        const double sz = spec.box_min_size + unit(rng) * (spec.box_max_size - spec.box_min_size);
        const double cx = dist * std::cos(a);
        const double cy = dist * std::sin(a);
        BoxObstacle box;
        box.min = {cx - sx / 2.0, cy - sy / 2.0, spec.ground_z};
        box.max = {cx + sx / 2.0, cy + sy / 2.0, spec.ground_z + sz};
        geom.boxes.push_back(box);
    }
    for (int i = 0; i < spec.pole_count; ++i) {
        const double dist =
            spec.pole_min_dist + unit(rng) * (spec.pole_max_dist - spec.pole_min_dist);
        const double a = angle(rng);
        PoleObstacle pole;
        pole.cx = dist * std::cos(a);
        pole.cy = dist * std::sin(a);
        pole.radius =
            spec.pole_min_radius + unit(rng) * (spec.pole_max_radius - spec.pole_min_radius);
        pole.z0 = spec.ground_z;
        pole.z1 = spec.ground_z + spec.pole_min_height +
                  unit(rng) * (spec.pole_max_height - spec.pole_min_height);
        geom.poles.push_back(pole);
    }
    return geom;
}

namespace {

constexpr double kRayEps = 1e-9;

double intersect_ground(const SceneSpec& spec, const Vec3& o, const Vec3& d) {
    if (d.z >= 0.0) return -1.0;
    const double t = (spec.ground_z - o.z) / d.z;
    if (t <= kRayEps) return -1.0;
    const double x = o.x + t * d.x;
    const double y = o.y + t * d.y;
    if (std::abs(x) > spec.ground_half_extent || std::abs(y) > spec.ground_half_extent) {
        return -1.0;
    }
    return t;
}

double intersect_box(const BoxObstacle& box, const Vec3& o, const Vec3& d) {
    double tmin = 0.0;
    double tmax = std::numeric_limits<double>::infinity();
    const double omin[3] = {box.min.x, box.min.y, box.min.z};
    const double omax[3] = {box.max.x, box.max.y, box.max.z};
    const double oo[3] = {o.x, o.y, o.z};
    const double dd[3] = {d.x, d.y, d.z};
    for (int k = 0; k < 3; ++k) {
        if (dd[k] == 0.0) {
            if (oo[k] < omin[k] || oo[k] > omax[k]) return -1.0;
            continue;
        }
        double t0 = (omin[k] - oo[k]) / dd[k];
        double t1 = (omax[k] - oo[k]) / dd[k];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return -1.0;
    }
    return tmin > kRayEps ? tmin : -1.0;
}

double intersect_pole(const PoleObstacle& pole, const Vec3& o, const Vec3& d) {
    // |o_xy + t d_xy - c|^2 = r^2
    const double ox = o.x - pole.cx;
    const double oy = o.y - pole.cy;
    const double a = d.x * d.x + d.y * d.y;
    if (a == 0.0) return -1.0;
    const double b = 2.0 * (ox * d.x + oy * d.y);
    const double c = ox * ox + oy * oy - pole.radius * pole.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return -1.0;
    const double sq = std::sqrt(disc);
    for (const double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t <= kRayEps) continue;
        const double z = o.z + t * d.z;
        if (z >= pole.z0 && z <= pole.z1) return t;
    }
    return -1.0;
}

} // namespace

double cast_ray(const SceneGeometry& geom, const SceneSpec& spec, const Vec3& origin,
                const Vec3& dir) {
    double best = -1.0;
    const auto consider = [&](double t) {
        if (t > 0.0 && (best < 0.0 || t < best)) best = t;
    };
    consider(intersect_ground(spec, origin, dir));
    for (const auto& box : geom.boxes) consider(intersect_box(box, origin, dir));
    for (const auto& pole : geom.poles) consider(intersect_pole(pole, origin, dir));
    if (best > spec.beams.max_range) return -1.0;
    return best;
}

PointCloud synth_scene(const SceneSpec& spec) {
    spec.validate();
    const SceneGeometry geom = build_scene_geometry(spec);

    PointCloud cloud;
    for (int b = 0; b < spec.beams.rows(); ++b) {
        const double elev = spec.beams.elevations[b];
        const double off = spec.beams.offsets[b];
        const Vec3 origin{0.0, 0.0, off};
        const double ce = std::cos(elev);
        const double se = std::sin(elev);
        for (int u = 0; u < spec.width; ++u) {
            const double azimuth = M_PI - 2.0 * M_PI * (u + 0.5) / spec.width;
            const Vec3 dir{ce * std::cos(azimuth), ce * std::sin(azimuth), -se};
            const double t = cast_ray(geom, spec, origin, dir);
            if (t > 0.0) cloud.points.push_back(origin + t * dir);
        }
    }
    return cloud;
}

} // namespace rangeup
