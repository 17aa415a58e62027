#pragma once

#include <cstddef>
#include <string>

#include "rangeup/geometry.hpp"

namespace rangeup {

// Depth normalization constant shared by image-space losses and metrics.
inline constexpr double kDefaultMaxRange = 80.0;

// Default horizontal gap (columns) bridged by inpainting at W = 1024.
inline constexpr int kDefaultInpaintGap = 8;

// Reads packed little-endian float32 (x, y, z, intensity) records. Records
// containing NaN/Inf are dropped; `dropped` (when given) receives the count.
PointCloud load_scan(const std::string& path, std::size_t* dropped = nullptr);

// Range-image file: one JSON header line (height, width, max_range, beam
// elevations/offsets), then row-major float32 depths, then one validity byte
// per cell. Depths round-trip bit-exactly at float32 precision.
void save_range_image(const RangeImage& img, const std::string& path);
RangeImage load_range_image(const std::string& path);

// Keeps rows v with v % factor == 0 together with their beam-model entries.
RangeImage downsample_rows(const RangeImage& img, int factor);

// Fills invalid cells whose nearest valid horizontal neighbors (wrapping
// across the azimuth seam) lie within max_gap columns on both sides, by
// linear interpolation along the row.
RangeImage inpaint(const RangeImage& img, int max_gap = kDefaultInpaintGap);

// Knot-aligned vertical interpolation: output row r sits at input coordinate
// r / factor, so kept beams reproduce exactly. Invalid cells do not
// contribute; the blend renormalizes over valid neighbors. The last input row
// is replicated below; beam elevations/offsets are interpolated (and
// extrapolated past the last knot, preserving monotonicity).
RangeImage bilinear_upsample_vertical(const RangeImage& img, int factor);

// Nearest-knot row replication; the reference strawman for baseline
// comparisons. Shares the interpolated output beam model with bilinear.
RangeImage replicate_upsample_vertical(const RangeImage& img, int factor);

// The beam model both vertical upsamplers attach to their output.
BeamModel interpolate_beam_model(const BeamModel& bm, int factor);

} // namespace rangeup
