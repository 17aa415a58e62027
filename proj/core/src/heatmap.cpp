#include "rangeup/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace rangeup {

std::array<std::uint8_t, 3> heatmap_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const auto channel = [](double v) {
        return static_cast<std::uint8_t>(std::lround(255.0 * v));
    };
    return {channel(t), 0, channel(1.0 - t)};
}

void emit_heatmap(const std::vector<double>& values, int height, int width,
                  const std::string& path) {
    if (height < 1 || width < 1 ||
        values.size() != static_cast<std::size_t>(height) * width) {
        throw ArgumentError("heatmap grid size mismatch");
    }
    double lo = values[0], hi = values[0];
    for (double v : values) {
        if (!std::isfinite(v)) throw ArgumentError("heatmap input must be finite");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "P6\n" << width << ' ' << height << "\n255\n";
    std::vector<char> row(static_cast<std::size_t>(width) * 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double v = values[static_cast<std::size_t>(y) * width + x];
            const double t = span > 0.0 ? (v - lo) / span : 0.5;
            const auto rgb = heatmap_color(t);
            row[3 * x] = static_cast<char>(rgb[0]);
            row[3 * x + 1] = static_cast<char>(rgb[1]);
            row[3 * x + 2] = static_cast<char>(rgb[2]);
        }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw FormatError("short write on " + path);
}

void emit_heatmap(const RangeImage& img, const std::string& path) {
    emit_heatmap(img.depth, img.height, img.width, path);
}

void emit_heatmap(const net::FeatureMap& map, const std::string& path) {
    std::vector<double> mean(static_cast<std::size_t>(map.height) * map.width, 0.0);
    for (int c = 0; c < map.channels; ++c) {
        for (int y = 0; y < map.height; ++y) {
            for (int x = 0; x < map.width; ++x) {
                mean[static_cast<std::size_t>(y) * map.width + x] += map.at(c, y, x);
            }
        }
    }
    for (auto& v : mean) v /= map.channels;
    emit_heatmap(mean, map.height, map.width, path);
}

} // namespace rangeup
