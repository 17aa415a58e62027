#include <algorithm>
#include <cmath>
#include <limits>

#include "rangeup/net.hpp"

namespace rangeup::net {

FeatureMap FeatureMap::zeros(int c, int h, int w) {
    if (c < 1 || h < 1 || w < 1) throw ArgumentError("feature map dims must be >= 1");
    FeatureMap f;
    f.channels = c;
    f.height = h;
    f.width = w;
    f.data.assign(static_cast<std::size_t>(c) * h * w, 0.0);
    return f;
}

void ScanParams::validate(int channels) const {
    if (state_dim < 1) throw ArgumentError("scan state_dim must be >= 1");
    const std::size_t n = static_cast<std::size_t>(state_dim);
    const std::size_t cn = static_cast<std::size_t>(channels) * n;
    for (const auto& d : dirs) {
        if (d.a.size() != n || d.b.size() != cn || d.c.size() != cn ||
            d.delta.size() != static_cast<std::size_t>(channels) ||
            d.skip.size() != static_cast<std::size_t>(channels)) {
            throw ConfigError("scan parameter shapes do not match feature channels");
        }
        for (double v : d.a) {
            if (!(v < 0.0)) throw ArgumentError("scan state matrix entries must be negative");
        }
        for (double v : d.delta) {
            if (!(v > 0.0)) throw ArgumentError("scan step sizes must be positive");
        }
    }
}

FeatureMap patch_embed(const RangeImage& img, const Tensor& kernel) {
    if (img.width % 4 != 0) {
        throw ArgumentError("patch_embed needs width divisible by 4, got " +
                            std::to_string(img.width));
    }
    if (kernel.shape.size() != 2 || kernel.shape[1] != 4) {
        throw ConfigError("patch_embed kernel must have shape [C1][4]");
    }
    const int c1 = kernel.shape[0];
    FeatureMap out = FeatureMap::zeros(c1, img.height, img.width / 4);
    for (int c = 0; c < c1; ++c) {
        const double* k = kernel.data.data() + static_cast<std::size_t>(c) * 4;
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                double acc = 0.0;
                for (int t = 0; t < 4; ++t) acc += k[t] * img.at(y, 4 * x + t);
                out.at(c, y, x) = acc;
            }
        }
    }
    return out;
}

FeatureMap layer_norm_channels(const FeatureMap& x, double eps) {
    FeatureMap out = FeatureMap::zeros(x.channels, x.height, x.width);
    const double inv_c = 1.0 / x.channels;
    for (int y = 0; y < x.height; ++y) {
        for (int x0 = 0; x0 < x.width; ++x0) {
            double mean = 0.0;
            for (int c = 0; c < x.channels; ++c) mean += x.at(c, y, x0);
            mean *= inv_c;
            double var = 0.0;
            for (int c = 0; c < x.channels; ++c) {
                const double d = x.at(c, y, x0) - mean;
                var += d * d;
            }
            var *= inv_c;
            const double scale = 1.0 / std::sqrt(var + eps);
            for (int c = 0; c < x.channels; ++c) {
                out.at(c, y, x0) = (x.at(c, y, x0) - mean) * scale;
            }
        }
    }
    return out;
}

FeatureMap depthwise_conv3x3(const FeatureMap& x, const Tensor& kernel) {
    if (kernel.shape.size() != 3 || kernel.shape[0] != x.channels || kernel.shape[1] != 3 ||
        kernel.shape[2] != 3) {
        throw ConfigError("depthwise kernel must have shape [C][3][3]");
    }
    FeatureMap out = FeatureMap::zeros(x.channels, x.height, x.width);
    for (int c = 0; c < x.channels; ++c) {
        const double* k = kernel.data.data() + static_cast<std::size_t>(c) * 9;
        for (int y = 0; y < x.height; ++y) {
            for (int x0 = 0; x0 < x.width; ++x0) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= x.height) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x0 + dx;
                        if (xx < 0 || xx >= x.width) continue;
                        acc += k[(dy + 1) * 3 + (dx + 1)] * x.at(c, yy, xx);
                    }
                }
                out.at(c, y, x0) = acc;
            }
        }
    }
    return out;
}

namespace {

// One 1D selective scan along a row or column. `stride` walks the spatial
// axis (negative for reversed directions); the state is reset per sequence.
void scan_sequence(const double* in, double* out, std::ptrdiff_t len, std::ptrdiff_t stride,
                   const double* a, const double* b, const double* c, double delta, double skip,
                   int n, std::vector<double>& h) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::ptrdiff_t t = 0; t < len; ++t) {
        const double xv = in[t * stride];
        double yv = skip * xv;
        for (int s = 0; s < n; ++s) {
            h[s] = std::exp(delta * a[s]) * h[s] + delta * b[s] * xv;
            yv += c[s] * h[s];
        }
        out[t * stride] += yv;
    }
}

} // namespace

FeatureMap ss2d_scan(const FeatureMap& x, const ScanParams& p) {
    p.validate(x.channels);
    FeatureMap out = FeatureMap::zeros(x.channels, x.height, x.width);
    const int n = p.state_dim;
    std::vector<double> h(n);

    for (int dir = 0; dir < 4; ++dir) {
        const ScanDirParams& d = p.dirs[dir];
        const bool horizontal = dir < 2;
        const bool reversed = (dir == 1) || (dir == 3);
        for (int c = 0; c < x.channels; ++c) {
            const double* b = d.b.data() + static_cast<std::size_t>(c) * n;
            const double* cp = d.c.data() + static_cast<std::size_t>(c) * n;
            const double delta = d.delta[c];
            const double skip = d.skip[c];
            if (horizontal) {
                for (int y = 0; y < x.height; ++y) {
                    const std::size_t base = x.idx(c, y, reversed ? x.width - 1 : 0);
                    scan_sequence(x.data.data() + base, out.data.data() + base, x.width,
                                  reversed ? -1 : 1, d.a.data(), b, cp, delta, skip, n, h);
                }
            } else {
                for (int x0 = 0; x0 < x.width; ++x0) {
                    const std::size_t base = x.idx(c, reversed ? x.height - 1 : 0, x0);
                    const std::ptrdiff_t step =
                        (reversed ? -1 : 1) * static_cast<std::ptrdiff_t>(x.width);
                    scan_sequence(x.data.data() + base, out.data.data() + base, x.height, step,
                                  d.a.data(), b, cp, delta, skip, n, h);
                }
            }
        }
    }
    return out;
}

FeatureMap scan_block(const FeatureMap& x, const ScanBlockWeights& w) {
    FeatureMap y = layer_norm_channels(x);
    y = depthwise_conv3x3(y, w.dw_kernel);
    y = ss2d_scan(y, w.scan);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
    return y;
}

FeatureMap se_max(const FeatureMap& x, const SeWeights& w) {
    if (w.w1.shape.size() != 2 || w.w2.shape.size() != 2 || w.w1.shape[1] != x.channels ||
        w.w2.shape[0] != x.channels || w.w1.shape[0] != w.w2.shape[1]) {
        throw ConfigError("se weights do not match feature channels");
    }
    const int hidden = w.w1.shape[0];
    std::vector<double> pooled(x.channels, -std::numeric_limits<double>::infinity());
    const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
    for (int c = 0; c < x.channels; ++c) {
        const double* p = x.data.data() + c * plane;
        pooled[c] = *std::max_element(p, p + plane);
    }
    std::vector<double> mid(hidden, 0.0);
    for (int j = 0; j < hidden; ++j) {
        double acc = 0.0;
        for (int c = 0; c < x.channels; ++c) {
            acc += w.w1.data[static_cast<std::size_t>(j) * x.channels + c] * pooled[c];
        }
        mid[j] = std::max(acc, 0.0);
    }
    FeatureMap out = x;
    for (int c = 0; c < x.channels; ++c) {
        double acc = 0.0;
        for (int j = 0; j < hidden; ++j) {
            acc += w.w2.data[static_cast<std::size_t>(c) * hidden + j] * mid[j];
        }
        const double gate = 1.0 / (1.0 + std::exp(-acc));
        double* p = out.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] *= gate;
    }
    return out;
}

namespace {

FeatureMap pad_right_bottom(const FeatureMap& x, int h, int w) {
    if (h == x.height && w == x.width) return x;
    FeatureMap out = FeatureMap::zeros(x.channels, h, w);
    for (int c = 0; c < x.channels; ++c) {
        for (int y = 0; y < x.height; ++y) {
            for (int x0 = 0; x0 < x.width; ++x0) {
                out.at(c, y, x0) = x.at(c, y, x0);
            }
        }
    }
    return out;
}

FeatureMap conv3x3_stride2(const FeatureMap& x, const Tensor& kernel) {
    const int ci = x.channels;
    const int co = kernel.shape[0];
    FeatureMap out = FeatureMap::zeros(co, x.height / 2, x.width / 2);
    for (int o = 0; o < co; ++o) {
        for (int y = 0; y < out.height; ++y) {
            for (int x0 = 0; x0 < out.width; ++x0) {
                double acc = 0.0;
                for (int i = 0; i < ci; ++i) {
                    const double* k =
                        kernel.data.data() + (static_cast<std::size_t>(o) * ci + i) * 9;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = 2 * y + dy;
                        if (yy < 0 || yy >= x.height) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = 2 * x0 + dx;
                            if (xx < 0 || xx >= x.width) continue;
                            acc += k[(dy + 1) * 3 + (dx + 1)] * x.at(i, yy, xx);
                        }
                    }
                }
                out.at(o, y, x0) = acc;
            }
        }
    }
    return out;
}

FeatureMap conv1x1(const FeatureMap& x, const Tensor& kernel) {
    const int ci = x.channels;
    const int co = kernel.shape[0];
    FeatureMap out = FeatureMap::zeros(co, x.height, x.width);
    const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
    for (int o = 0; o < co; ++o) {
        double* op = out.data.data() + o * plane;
        for (int i = 0; i < ci; ++i) {
            const double k = kernel.data[static_cast<std::size_t>(o) * ci + i];
            const double* ip = x.data.data() + i * plane;
            for (std::size_t s = 0; s < plane; ++s) op[s] += k * ip[s];
        }
    }
    return out;
}

} // namespace

FeatureMap modulation(const FeatureMap& x, ModulationMode mode, const ModulationWeights& w) {
    FeatureMap se = se_max(layer_norm_channels(x), w.se);
    FeatureMap mid = x;
    for (std::size_t i = 0; i < mid.data.size(); ++i) mid.data[i] += se.data[i];

    switch (mode) {
        case ModulationMode::None:
            return mid;
        case ModulationMode::Down: {
            if (w.conv.shape.size() != 4 || w.conv.shape[0] != 2 * x.channels ||
                w.conv.shape[1] != x.channels || w.conv.shape[2] != 3 || w.conv.shape[3] != 3) {
                throw ConfigError("down conv must have shape [2C][C][3][3]");
            }
            const int ph = mid.height + (mid.height % 2);
            const int pw = mid.width + (mid.width % 2);
            const FeatureMap padded = pad_right_bottom(mid, ph, pw);
            return layer_norm_channels(conv3x3_stride2(padded, w.conv));
        }
        case ModulationMode::Up: {
            if (w.conv.shape.size() != 2 || w.conv.shape[0] != 2 * x.channels ||
                w.conv.shape[1] != x.channels) {
                throw ConfigError("up conv must have shape [2C][C]");
            }
            return pixel_shuffle(conv1x1(mid, w.conv), 2, 2);
        }
    }
    throw ArgumentError("unknown modulation mode");
}

FeatureMap pixel_shuffle(const FeatureMap& x, int r_v, int r_h) {
    if (r_v < 1 || r_h < 1) throw ArgumentError("pixel_shuffle factors must be >= 1");
    const int block = r_v * r_h;
    if (x.channels % block != 0) {
        throw ArgumentError("pixel_shuffle needs channels divisible by " + std::to_string(block));
    }
    FeatureMap out = FeatureMap::zeros(x.channels / block, x.height * r_v, x.width * r_h);
    for (int c = 0; c < out.channels; ++c) {
        for (int j = 0; j < block; ++j) {
            const int dy = j / r_h;
            const int dx = j % r_h;
            const int ci = c * block + j;
            for (int y = 0; y < x.height; ++y) {
                for (int x0 = 0; x0 < x.width; ++x0) {
                    out.at(c, y * r_v + dy, x0 * r_h + dx) = x.at(ci, y, x0);
                }
            }
        }
    }
    return out;
}

FeatureMap pixel_unshuffle(const FeatureMap& x, int r_v, int r_h) {
    if (r_v < 1 || r_h < 1) throw ArgumentError("pixel_unshuffle factors must be >= 1");
    if (x.height % r_v != 0 || x.width % r_h != 0) {
        throw ArgumentError("pixel_unshuffle needs dims divisible by the factors");
    }
    const int block = r_v * r_h;
    FeatureMap out = FeatureMap::zeros(x.channels * block, x.height / r_v, x.width / r_h);
    for (int c = 0; c < x.channels; ++c) {
        for (int j = 0; j < block; ++j) {
            const int dy = j / r_h;
            const int dx = j % r_h;
            const int co = c * block + j;
            for (int y = 0; y < out.height; ++y) {
                for (int x0 = 0; x0 < out.width; ++x0) {
                    out.at(co, y, x0) = x.at(c, y * r_v + dy, x0 * r_h + dx);
                }
            }
        }
    }
    return out;
}

namespace {

FeatureMap cyclic_shift(const FeatureMap& x, int sy, int sx) {
    FeatureMap out = FeatureMap::zeros(x.channels, x.height, x.width);
    for (int c = 0; c < x.channels; ++c) {
        for (int y = 0; y < x.height; ++y) {
            const int yy = ((y + sy) % x.height + x.height) % x.height;
            for (int x0 = 0; x0 < x.width; ++x0) {
                const int xx = ((x0 + sx) % x.width + x.width) % x.width;
                out.at(c, yy, xx) = x.at(c, y, x0);
            }
        }
    }
    return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Region labels for the Swin shift mask: cells from different pre-shift
// regions must not attend to each other inside a wrapped window.
int shift_region(int coord, int extent, int win, int shift) {
    if (coord < extent - win) return 0;
    if (coord < extent - shift) return 1;
    return 2;
}

void apply_linear(const Tensor& w, const std::vector<double>& in, std::vector<double>& out,
                  int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* wp = w.data.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) acc += wp[c] * in[c];
        out[r] = acc;
    }
}

} // namespace

FeatureMap window_attention(const FeatureMap& x, const AttentionConfig& cfg,
                            const AttentionWeights& w, AttentionStats* stats) {
    const int C = x.channels;
    if (cfg.heads < 1 || C % cfg.heads != 0) {
        throw ConfigError("attention heads must divide channel count");
    }
    const int wh = cfg.win_h;
    const int ww = cfg.win_w;
    const int table = (2 * wh - 1) * (2 * ww - 1);
    if (w.wq.shape != std::vector<int>{C, C} || w.wk.shape != std::vector<int>{C, C} ||
        w.wv.shape != std::vector<int>{C, C} || w.wo.shape != std::vector<int>{C, C}) {
        throw ConfigError("attention projections must have shape [C][C]");
    }
    if (w.rel_bias.shape != std::vector<int>{cfg.heads, table}) {
        throw ConfigError("relative position bias table shape mismatch");
    }
    const int hidden = w.ffn1.shape.empty() ? 0 : w.ffn1.shape[0];
    if (w.ffn1.shape != std::vector<int>{hidden, C} || w.ffn2.shape != std::vector<int>{C, hidden}) {
        throw ConfigError("attention feed-forward shape mismatch");
    }

    const int ph = (x.height + wh - 1) / wh * wh;
    const int pw = (x.width + ww - 1) / ww * ww;
    FeatureMap padded = pad_right_bottom(x, ph, pw);

    const int sy = cfg.shifted ? wh / 2 : 0;
    const int sx = cfg.shifted ? ww / 2 : 0;
    if (cfg.shifted) padded = cyclic_shift(padded, -sy, -sx);

    const int tokens = wh * ww;
    const int dh = C / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Pre-normalized attention with residual.
    const FeatureMap normed = layer_norm_channels(padded);
    FeatureMap attn_out = FeatureMap::zeros(C, ph, pw);

    std::vector<double> token(C), q(C), k(C), v(C);
    std::vector<std::vector<double>> qs(tokens), ks(tokens), vs(tokens);
    std::vector<int> region(tokens);
    std::vector<double> logits(tokens);

    double min_row_sum = std::numeric_limits<double>::infinity();
    double max_row_sum = -std::numeric_limits<double>::infinity();
    double max_masked = 0.0;

    for (int wy = 0; wy < ph / wh; ++wy) {
        for (int wx = 0; wx < pw / ww; ++wx) {
            for (int t = 0; t < tokens; ++t) {
                const int y = wy * wh + t / ww;
                const int xx = wx * ww + t % ww;
                for (int c = 0; c < C; ++c) token[c] = normed.at(c, y, xx);
                qs[t].resize(C);
                ks[t].resize(C);
                vs[t].resize(C);
                apply_linear(w.wq, token, qs[t], C, C);
                apply_linear(w.wk, token, ks[t], C, C);
                apply_linear(w.wv, token, vs[t], C, C);
                region[t] = cfg.shifted
                                ? shift_region(y, ph, wh, sy) * 3 + shift_region(xx, pw, ww, sx)
                                : 0;
            }

            for (int h = 0; h < cfg.heads; ++h) {
                const double* bias = w.rel_bias.data.data() + static_cast<std::size_t>(h) * table;
                for (int s = 0; s < tokens; ++s) {
                    const int sy_t = s / ww;
                    const int sx_t = s % ww;
                    double max_logit = -std::numeric_limits<double>::infinity();
                    for (int t = 0; t < tokens; ++t) {
                        double acc = 0.0;
                        for (int d = 0; d < dh; ++d) acc += qs[s][h * dh + d] * ks[t][h * dh + d];
                        const int dy = sy_t - t / ww + wh - 1;
                        const int dx = sx_t - t % ww + ww - 1;
                        double l = acc * scale + bias[dy * (2 * ww - 1) + dx];
                        if (region[s] != region[t]) l -= 1e9;
                        logits[t] = l;
                        max_logit = std::max(max_logit, l);
                    }
                    double denom = 0.0;
                    for (int t = 0; t < tokens; ++t) {
                        logits[t] = std::exp(logits[t] - max_logit);
                        denom += logits[t];
                    }
                    double row_sum = 0.0;
                    const int y = wy * wh + sy_t;
                    const int xx = wx * ww + sx_t;
                    for (int t = 0; t < tokens; ++t) {
                        const double weight = logits[t] / denom;
                        row_sum += weight;
                        if (region[s] != region[t]) max_masked = std::max(max_masked, weight);
                        for (int d = 0; d < dh; ++d) {
                            attn_out.at(h * dh + d, y, xx) += weight * vs[t][h * dh + d];
                        }
                    }
                    min_row_sum = std::min(min_row_sum, row_sum);
                    max_row_sum = std::max(max_row_sum, row_sum);
                }
            }
        }
    }

    // Output projection, un-shift, crop, first residual.
    FeatureMap projected = FeatureMap::zeros(C, ph, pw);
    std::vector<double> in_vec(C), out_vec(C);
    for (int y = 0; y < ph; ++y) {
        for (int xx = 0; xx < pw; ++xx) {
            for (int c = 0; c < C; ++c) in_vec[c] = attn_out.at(c, y, xx);
            apply_linear(w.wo, in_vec, out_vec, C, C);
            for (int c = 0; c < C; ++c) projected.at(c, y, xx) = out_vec[c];
        }
    }
    if (cfg.shifted) projected = cyclic_shift(projected, sy, sx);

    FeatureMap y1 = x;
    for (int c = 0; c < C; ++c) {
        for (int yy = 0; yy < x.height; ++yy) {
            for (int xx = 0; xx < x.width; ++xx) {
                y1.at(c, yy, xx) += projected.at(c, yy, xx);
            }
        }
    }

    // Pre-normalized feed-forward with residual.
    const FeatureMap n2 = layer_norm_channels(y1);
    FeatureMap out = y1;
    std::vector<double> mid(hidden);
    for (int yy = 0; yy < x.height; ++yy) {
        for (int xx = 0; xx < x.width; ++xx) {
            for (int c = 0; c < C; ++c) in_vec[c] = n2.at(c, yy, xx);
            apply_linear(w.ffn1, in_vec, mid, hidden, C);
            for (int j = 0; j < hidden; ++j) mid[j] = gelu(mid[j]);
            apply_linear(w.ffn2, mid, out_vec, C, hidden);
            for (int c = 0; c < C; ++c) out.at(c, yy, xx) += out_vec[c];
        }
    }

    if (stats) {
        stats->min_row_sum = min_row_sum;
        stats->max_row_sum = max_row_sum;
        stats->max_masked_weight = max_masked;
    }
    return out;
}

} // namespace rangeup::net
