#pragma once

#include <cstdint>
#include <vector>

#include "rangeup/geometry.hpp"

namespace rangeup {

struct BoxObstacle {
    Vec3 min;
    Vec3 max;
};

struct PoleObstacle {
    double cx = 0.0, cy = 0.0;
    double radius = 0.1;
    double z0 = 0.0, z1 = 1.0;
};

// Procedural LiDAR scene: a ground plane plus seeded boxes and poles.
// Fixed obstacles are kept as given (used by tests); random ones are placed
// deterministically from the seed.
struct SceneSpec {
    std::uint64_t seed = 0;

    double ground_half_extent = 60.0; // meters, square in x/y
    double ground_z = -1.7;

    int box_count = 6;
    double box_min_size = 0.8, box_max_size = 4.0;
    double box_min_dist = 5.0, box_max_dist = 45.0;

    int pole_count = 8;
    double pole_min_radius = 0.05, pole_max_radius = 0.3;
    double pole_min_height = 2.0, pole_max_height = 8.0;
    double pole_min_dist = 4.0, pole_max_dist = 40.0;

    std::vector<BoxObstacle> fixed_boxes;
    std::vector<PoleObstacle> fixed_poles;

    BeamModel beams; // beam model reference used for ray casting
    int width = 1024;

    void validate() const;
};

// Materialized obstacle set for a spec (fixed + seeded random placements).
struct SceneGeometry {
    std::vector<BoxObstacle> boxes;
    std::vector<PoleObstacle> poles;
};

SceneGeometry build_scene_geometry(const SceneSpec& spec);

// Casts one ray per (beam, azimuth-column-center) pair against the scene and
// keeps the nearest hit within max_range. Deterministic for a fixed seed.
PointCloud synth_scene(const SceneSpec& spec);

// Distance along the ray to the nearest scene hit; negative when the ray
// escapes. Exposed for closed-form occlusion checks.
double cast_ray(const SceneGeometry& geom, const SceneSpec& spec, const Vec3& origin,
                const Vec3& dir);

} // namespace rangeup
