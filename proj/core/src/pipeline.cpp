#include "rangeup/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include <json.hpp>

namespace rangeup {

namespace {

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> buf(static_cast<std::size_t>(size));
    if (size > 0) in.read(buf.data(), size);
    if (!in) throw FormatError("short read on " + path);
    return buf;
}

float load_f32le(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void store_f32le(float f, char* p) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) {
        p[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    }
}

} // namespace

PointCloud load_scan(const std::string& path, std::size_t* dropped) {
    const std::vector<char> buf = read_all(path);
    if (buf.size() % 16 != 0) {
        throw FormatError("scan file " + path + " has " + std::to_string(buf.size()) +
                          " bytes, not a multiple of 16");
    }
    PointCloud cloud;
    cloud.intensity.emplace();
    const std::size_t n = buf.size() / 16;
    cloud.points.reserve(n);
    cloud.intensity->reserve(n);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const char* rec = buf.data() + i * 16;
        const float x = load_f32le(rec);
        const float y = load_f32le(rec + 4);
        const float z = load_f32le(rec + 8);
        const float inten = load_f32le(rec + 12);
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
            !std::isfinite(inten)) {
            ++bad;
            continue;
        }
        cloud.points.push_back({x, y, z});
        cloud.intensity->push_back(inten);
    }
    if (dropped) *dropped = bad;
    return cloud;
}

void save_range_image(const RangeImage& img, const std::string& path) {
    if (img.height < 1 || img.width < 1) {
        throw ArgumentError("cannot save a zero-size range image");
    }
    img.validate();

    nlohmann::json header;
    header["height"] = img.height;
    header["width"] = img.width;
    header["max_range"] = img.beam_model.max_range;
    header["elevations"] = img.beam_model.elevations;
    header["offsets"] = img.beam_model.offsets;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << header.dump() << '\n';

    const std::size_t n = img.depth.size();
    std::vector<char> payload(n * 4 + n);
    for (std::size_t i = 0; i < n; ++i) {
        store_f32le(static_cast<float>(img.depth[i]), payload.data() + i * 4);
    }
    for (std::size_t i = 0; i < n; ++i) {
        payload[n * 4 + i] = static_cast<char>(img.valid[i] ? 1 : 0);
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw FormatError("short write on " + path);
}

RangeImage load_range_image(const std::string& path) {
    const std::vector<char> buf = read_all(path);
    const auto nl = std::find(buf.begin(), buf.end(), '\n');
    if (nl == buf.end()) throw FormatError("range image file " + path + " has no header line");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(std::string(buf.begin(), nl));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad range image header in " + path + ": " + e.what());
    }

    RangeImage img;
    try {
        img.height = header.at("height").get<int>();
        img.width = header.at("width").get<int>();
        img.beam_model.max_range = header.at("max_range").get<double>();
        img.beam_model.elevations = header.at("elevations").get<std::vector<double>>();
        img.beam_model.offsets = header.at("offsets").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("incomplete range image header in " + path + ": " + e.what());
    }
    if (img.height < 1 || img.width < 1) {
        throw FormatError("range image header with non-positive dims in " + path);
    }

    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    const std::size_t expected = n * 4 + n;
    const std::size_t have = static_cast<std::size_t>(buf.end() - (nl + 1));
    if (have != expected) {
        throw FormatError("range image payload is " + std::to_string(have) + " bytes, expected " +
                          std::to_string(expected));
    }

    const char* p = &*(nl + 1);
    img.depth.resize(n);
    img.valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        img.depth[i] = static_cast<double>(load_f32le(p + i * 4));
    }
    for (std::size_t i = 0; i < n; ++i) {
        img.valid[i] = static_cast<std::uint8_t>(p[n * 4 + i] ? 1 : 0);
    }
    img.validate();
    return img;
}

RangeImage downsample_rows(const RangeImage& img, int factor) {
    if (factor < 1 || img.height % factor != 0) {
        throw ArgumentError("factor " + std::to_string(factor) + " does not divide height " +
                            std::to_string(img.height));
    }
    if (factor == 1) return img;

    BeamModel bm;
    bm.max_range = img.beam_model.max_range;
    for (int v = 0; v < img.height; v += factor) {
        bm.elevations.push_back(img.beam_model.elevations[v]);
        bm.offsets.push_back(img.beam_model.offsets[v]);
    }
    RangeImage out = RangeImage::zeros(bm, img.width);
    for (int v = 0, ov = 0; v < img.height; v += factor, ++ov) {
        std::copy_n(img.depth.begin() + img.idx(v, 0), img.width,
                    out.depth.begin() + out.idx(ov, 0));
        std::copy_n(img.valid.begin() + img.idx(v, 0), img.width,
                    out.valid.begin() + out.idx(ov, 0));
    }
    return out;
}

RangeImage inpaint(const RangeImage& img, int max_gap) {
    if (max_gap < 0) throw ArgumentError("max_gap must be >= 0");
    RangeImage out = img;
    const int w = img.width;
    std::vector<int> left(w), right(w);

    for (int v = 0; v < img.height; ++v) {
        bool any_valid = false;
        for (int u = 0; u < w; ++u) {
            if (img.is_valid(v, u)) {
                any_valid = true;
                break;
            }
        }
        if (!any_valid) continue;

        // Circular distance to the nearest valid cell on each side. Two sweeps
        // are enough once seeded with the wrap-around distance.
        int last = -1;
        for (int u = 0; u < w; ++u) {
            if (img.is_valid(v, u)) last = u;
        }
        int dist = w - 1 - last; // distance from column -1 back to the last valid cell
        for (int u = 0; u < w; ++u) {
            if (img.is_valid(v, u)) dist = 0;
            else ++dist;
            left[u] = dist;
        }
        int first = -1;
        for (int u = w - 1; u >= 0; --u) {
            if (img.is_valid(v, u)) first = u;
        }
        dist = first; // distance from (virtual) column w forward to the first valid cell
        for (int u = w - 1; u >= 0; --u) {
            if (img.is_valid(v, u)) dist = 0;
            else ++dist;
            right[u] = dist;
        }

        for (int u = 0; u < w; ++u) {
            if (img.is_valid(v, u)) continue;
            const int dl = left[u];
            const int dr = right[u];
            if (dl > max_gap || dr > max_gap) continue;
            const int ul = (u - dl + w) % w;
            const int ur = (u + dr) % w;
            const double a = img.at(v, ul);
            const double b = img.at(v, ur);
            const double value = (static_cast<double>(dr) * a + static_cast<double>(dl) * b) /
                                 (dl + dr);
            out.set(v, u, value);
        }
    }
    return out;
}

BeamModel interpolate_beam_model(const BeamModel& bm, int factor) {
    BeamModel out;
    out.max_range = bm.max_range;
    const int h = bm.rows();
    const int oh = h * factor;
    out.elevations.resize(oh);
    out.offsets.resize(oh);
    for (int r = 0; r < oh; ++r) {
        const double y = static_cast<double>(r) / factor;
        const int i0 = static_cast<int>(y);
        if (i0 + 1 < h) {
            const double t = y - i0;
            out.elevations[r] = bm.elevations[i0] + t * (bm.elevations[i0 + 1] - bm.elevations[i0]);
            out.offsets[r] = bm.offsets[i0] + t * (bm.offsets[i0 + 1] - bm.offsets[i0]);
        } else {
            // Continue the last segment's slope so elevations stay strictly monotone.
            const double t = y - (h - 1);
            const double de = bm.elevations[h - 1] - bm.elevations[h - 2];
            const double dz = bm.offsets[h - 1] - bm.offsets[h - 2];
            out.elevations[r] = bm.elevations[h - 1] + t * de;
            out.offsets[r] = bm.offsets[h - 1] + t * dz;
        }
    }
    out.validate();
    return out;
}

RangeImage bilinear_upsample_vertical(const RangeImage& img, int factor) {
    if (factor < 1) throw ArgumentError("upsample factor must be >= 1");
    if (factor == 1) return img;
    img.beam_model.validate();

    RangeImage out = RangeImage::zeros(interpolate_beam_model(img.beam_model, factor), img.width);
    for (int r = 0; r < out.height; ++r) {
        const double y = static_cast<double>(r) / factor;
        int i0 = static_cast<int>(y);
        double t = y - i0;
        if (i0 >= img.height - 1) { // replicate the last input row below
            i0 = img.height - 1;
            t = 0.0;
        }
        const int i1 = std::min(i0 + 1, img.height - 1);
        for (int u = 0; u < img.width; ++u) {
            double wsum = 0.0, dsum = 0.0;
            if (t < 1.0 && img.is_valid(i0, u)) {
                wsum += 1.0 - t;
                dsum += (1.0 - t) * img.at(i0, u);
            }
            if (t > 0.0 && img.is_valid(i1, u)) {
                wsum += t;
                dsum += t * img.at(i1, u);
            }
            if (wsum > 0.0) out.set(r, u, dsum / wsum);
        }
    }
    return out;
}

RangeImage replicate_upsample_vertical(const RangeImage& img, int factor) {
    if (factor < 1) throw ArgumentError("upsample factor must be >= 1");
    if (factor == 1) return img;
    img.beam_model.validate();

    RangeImage out = RangeImage::zeros(interpolate_beam_model(img.beam_model, factor), img.width);
    for (int r = 0; r < out.height; ++r) {
        const int v = r / factor;
        std::copy_n(img.depth.begin() + img.idx(v, 0), img.width,
                    out.depth.begin() + out.idx(r, 0));
        std::copy_n(img.valid.begin() + img.idx(v, 0), img.width,
                    out.valid.begin() + out.idx(r, 0));
    }
    return out;
}

} // namespace rangeup
