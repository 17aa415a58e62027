#pragma once

#include <array>
#include <string>

#include "rangeup/geometry.hpp"
#include "rangeup/net.hpp"

namespace rangeup {

// Fixed blue-to-red colormap over t in [0, 1].
std::array<std::uint8_t, 3> heatmap_color(double t);

// Min-max normalizes the grid and writes a binary P6 pixmap. Deterministic
// bytes for identical input; constant grids map to the mid color.
void emit_heatmap(const std::vector<double>& values, int height, int width,
                  const std::string& path);

void emit_heatmap(const RangeImage& img, const std::string& path);

// Multi-channel maps are reduced to the per-site channel mean.
void emit_heatmap(const net::FeatureMap& map, const std::string& path);

} // namespace rangeup
