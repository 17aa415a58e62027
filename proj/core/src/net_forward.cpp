#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "rangeup/net.hpp"
#include "rangeup/pipeline.hpp"

namespace rangeup::net {

void NetworkConfig::validate() const {
    if (depths.empty()) throw ConfigError("network needs at least one stage");
    for (int d : depths) {
        if (d < 1) throw ConfigError("stage depths must be >= 1");
    }
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (upsample_factor != 4) {
        throw ConfigError("upsample factor is fixed to 4 by the output head");
    }
    if (state_dim < 1) throw ConfigError("state_dim must be >= 1");
    if (win_h < 1 || win_w < 1 || heads < 1) throw ConfigError("bad attention config");
    for (int s = 0; s < stages(); ++s) {
        const int c = stage_channels(s);
        if (se_reduction < 1 || c % se_reduction != 0) {
            throw ConfigError("se_reduction must divide every stage's channel count");
        }
        if (c % heads != 0) throw ConfigError("heads must divide every stage's channel count");
    }
}

namespace {

struct TensorRef {
    std::string name;
    std::vector<int> shape;
    std::vector<double>* data;
};

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

void add_ref(std::vector<TensorRef>& refs, const std::string& name, Tensor& t,
             std::vector<int> shape) {
    t.shape = shape;
    t.data.resize(shape_size(shape));
    refs.push_back({name, std::move(shape), &t.data});
}

void add_raw(std::vector<TensorRef>& refs, const std::string& name, std::vector<double>& v,
             std::vector<int> shape) {
    v.resize(shape_size(shape));
    refs.push_back({name, std::move(shape), &v});
}

void add_scan_refs(std::vector<TensorRef>& refs, const std::string& prefix, ScanParams& p, int c,
                   int n) {
    p.state_dim = n;
    static const char* kDirNames[4] = {"lr", "rl", "td", "bu"};
    for (int d = 0; d < 4; ++d) {
        const std::string dp = prefix + "." + kDirNames[d];
        add_raw(refs, dp + ".a", p.dirs[d].a, {n});
        add_raw(refs, dp + ".b", p.dirs[d].b, {c, n});
        add_raw(refs, dp + ".c", p.dirs[d].c, {c, n});
        add_raw(refs, dp + ".delta", p.dirs[d].delta, {c});
        add_raw(refs, dp + ".skip", p.dirs[d].skip, {c});
    }
}

void add_block_refs(std::vector<TensorRef>& refs, const std::string& prefix, ScanBlockWeights& b,
                    int c, int n) {
    add_ref(refs, prefix + ".dw", b.dw_kernel, {c, 3, 3});
    add_scan_refs(refs, prefix + ".scan", b.scan, c, n);
}

void add_se_refs(std::vector<TensorRef>& refs, const std::string& prefix, SeWeights& se, int c,
                 int r) {
    add_ref(refs, prefix + ".w1", se.w1, {c / r, c});
    add_ref(refs, prefix + ".w2", se.w2, {c, c / r});
}

void add_attention_refs(std::vector<TensorRef>& refs, const std::string& prefix,
                        AttentionWeights& a, const NetworkConfig& cfg, int c) {
    add_ref(refs, prefix + ".wq", a.wq, {c, c});
    add_ref(refs, prefix + ".wk", a.wk, {c, c});
    add_ref(refs, prefix + ".wv", a.wv, {c, c});
    add_ref(refs, prefix + ".wo", a.wo, {c, c});
    add_ref(refs, prefix + ".rel_bias", a.rel_bias,
            {cfg.heads, (2 * cfg.win_h - 1) * (2 * cfg.win_w - 1)});
    add_ref(refs, prefix + ".ffn1", a.ffn1, {2 * c, c});
    add_ref(refs, prefix + ".ffn2", a.ffn2, {c, 2 * c});
}

// Sizes every tensor for the config and lists them in a fixed order shared by
// initialization and (de)serialization.
std::vector<TensorRef> build_refs(Weights& w) {
    const NetworkConfig& cfg = w.cfg;
    cfg.validate();
    const int S = cfg.stages();
    const int n = cfg.state_dim;

    std::vector<TensorRef> refs;
    add_ref(refs, "patch_embed", w.patch_embed, {cfg.base_channels, 4});

    w.encoder.resize(S - 1);
    for (int s = 0; s < S - 1; ++s) {
        const int c = cfg.stage_channels(s);
        auto& stage = w.encoder[s];
        stage.blocks.resize(cfg.depths[s]);
        const std::string sp = "enc" + std::to_string(s);
        for (int i = 0; i < cfg.depths[s]; ++i) {
            add_block_refs(refs, sp + ".block" + std::to_string(i), stage.blocks[i], c, n);
        }
        add_se_refs(refs, sp + ".down.se", stage.down.se, c, cfg.se_reduction);
        add_ref(refs, sp + ".down.conv", stage.down.conv, {2 * c, c, 3, 3});
    }

    const int cb = cfg.stage_channels(S - 1);
    w.bottleneck.resize(cfg.depths[S - 1]);
    for (int i = 0; i < cfg.depths[S - 1]; ++i) {
        add_block_refs(refs, "mid.block" + std::to_string(i), w.bottleneck[i], cb, n);
    }
    add_se_refs(refs, "mid.se", w.bottleneck_mod.se, cb, cfg.se_reduction);

    w.decoder.resize(S - 1);
    for (int s = S - 2; s >= 0; --s) {
        const int c = cfg.stage_channels(s);       // channels after the up branch
        const int cin = cfg.stage_channels(s + 1); // channels entering the stage
        auto& stage = w.decoder[s];
        stage.blocks.resize(cfg.depths[s]);
        const std::string sp = "dec" + std::to_string(s);
        add_se_refs(refs, sp + ".up.se", stage.up.se, cin, cfg.se_reduction);
        add_ref(refs, sp + ".up.conv", stage.up.conv, {2 * cin, cin});
        add_ref(refs, sp + ".fuse", stage.fuse, {c, 2 * c});
        for (int i = 0; i < cfg.depths[s]; ++i) {
            add_block_refs(refs, sp + ".block" + std::to_string(i), stage.blocks[i], c, n);
        }
        add_attention_refs(refs, sp + ".wmsa", stage.attn, cfg, c);
        add_attention_refs(refs, sp + ".swmsa", stage.attn_shifted, cfg, c);
    }

    add_ref(refs, "head", w.head, {16, cfg.base_channels});
    return refs;
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

Weights init_weights(const NetworkConfig& cfg, std::uint64_t seed) {
    Weights w;
    w.cfg = cfg;
    w.seed = seed;
    auto refs = build_refs(w);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-0.05, 0.05);
    std::uniform_real_distribution<double> step(0.05, 0.15);

    for (auto& ref : refs) {
        if (ends_with(ref.name, ".a")) {
            // -exp(linspace(0, log(N))): decay rates spread over [1, N].
            const int n = cfg.state_dim;
            for (int i = 0; i < n; ++i) {
                const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
                (*ref.data)[i] = round_f32(-std::exp(t * std::log(static_cast<double>(n))));
            }
        } else if (ends_with(ref.name, ".delta")) {
            for (auto& v : *ref.data) v = round_f32(step(rng));
        } else {
            for (auto& v : *ref.data) v = round_f32(uniform(rng));
        }
    }
    return w;
}

void save_weights(const Weights& w, const std::string& path) {
    Weights copy = w; // build_refs needs mutable access; shapes already sized
    auto refs = build_refs(copy);

    nlohmann::json manifest;
    manifest["schema"] = 1;
    manifest["seed"] = w.seed;
    manifest["config"] = {
        {"depths", w.cfg.depths},           {"base_channels", w.cfg.base_channels},
        {"upsample_factor", w.cfg.upsample_factor}, {"state_dim", w.cfg.state_dim},
        {"se_reduction", w.cfg.se_reduction}, {"heads", w.cfg.heads},
        {"win_h", w.cfg.win_h},             {"win_w", w.cfg.win_w},
    };
    auto tensors = nlohmann::json::array();
    std::size_t total = 0;
    for (const auto& ref : refs) {
        tensors.push_back({{"name", ref.name}, {"shape", ref.shape}});
        total += ref.data->size();
    }
    manifest["tensors"] = tensors;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << manifest.dump() << '\n';

    std::vector<char> payload(total * 4);
    std::size_t off = 0;
    for (const auto& ref : refs) {
        for (double v : *ref.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i) {
                payload[off * 4 + i] = static_cast<char>((bits >> (8 * i)) & 0xff);
            }
            ++off;
        }
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw FormatError("short write on " + path);
}

Weights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw FormatError("weight bundle has no manifest line");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad weight manifest: ") + e.what());
    }

    Weights w;
    try {
        const auto& jc = manifest.at("config");
        w.cfg.depths = jc.at("depths").get<std::vector<int>>();
        w.cfg.base_channels = jc.at("base_channels").get<int>();
        w.cfg.upsample_factor = jc.at("upsample_factor").get<int>();
        w.cfg.state_dim = jc.at("state_dim").get<int>();
        w.cfg.se_reduction = jc.at("se_reduction").get<int>();
        w.cfg.heads = jc.at("heads").get<int>();
        w.cfg.win_h = jc.at("win_h").get<int>();
        w.cfg.win_w = jc.at("win_w").get<int>();
        w.seed = manifest.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("incomplete weight manifest: ") + e.what());
    }

    auto refs = build_refs(w);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != refs.size()) {
        throw FormatError("weight manifest lists " + std::to_string(tensors.size()) +
                          " tensors, expected " + std::to_string(refs.size()));
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (tensors[i].at("name").get<std::string>() != refs[i].name ||
            tensors[i].at("shape").get<std::vector<int>>() != refs[i].shape) {
            throw FormatError("weight manifest mismatch at tensor " + refs[i].name);
        }
    }

    for (auto& ref : refs) {
        std::vector<char> buf(ref.data->size() * 4);
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!in) throw FormatError("weight payload truncated at " + ref.name);
        for (std::size_t i = 0; i < ref.data->size(); ++i) {
            std::uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) {
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i * 4 + k]))
                        << (8 * k);
            }
            float f;
            std::memcpy(&f, &bits, 4);
            (*ref.data)[i] = static_cast<double>(f);
        }
    }
    if (in.peek() != EOF) throw FormatError("trailing bytes in weight bundle");
    return w;
}

namespace {

FeatureMap crop(const FeatureMap& x, int h, int w) {
    if (x.height == h && x.width == w) return x;
    if (x.height < h || x.width < w) throw ConfigError("cannot crop feature map upward");
    FeatureMap out = FeatureMap::zeros(x.channels, h, w);
    for (int c = 0; c < x.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x0 = 0; x0 < w; ++x0) out.at(c, y, x0) = x.at(c, y, x0);
        }
    }
    return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ConfigError("skip connection dimension mismatch");
    }
    FeatureMap out = FeatureMap::zeros(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

FeatureMap conv1x1_fuse(const FeatureMap& x, const Tensor& kernel) {
    if (kernel.shape.size() != 2 || kernel.shape[1] != x.channels) {
        throw ConfigError("fuse conv shape mismatch");
    }
    const int co = kernel.shape[0];
    FeatureMap out = FeatureMap::zeros(co, x.height, x.width);
    const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
    for (int o = 0; o < co; ++o) {
        double* op = out.data.data() + o * plane;
        for (int i = 0; i < x.channels; ++i) {
            const double k = kernel.data[static_cast<std::size_t>(o) * x.channels + i];
            const double* ip = x.data.data() + i * plane;
            for (std::size_t s = 0; s < plane; ++s) op[s] += k * ip[s];
        }
    }
    return out;
}

} // namespace

RangeImage forward(const RangeImage& img, const Weights& weights) {
    const NetworkConfig& cfg = weights.cfg;
    cfg.validate();
    if (img.width % 4 != 0) {
        throw ArgumentError("forward needs width divisible by 4, got " + std::to_string(img.width));
    }
    const int S = cfg.stages();

    FeatureMap x = patch_embed(img, weights.patch_embed);

    std::vector<FeatureMap> skips;
    for (int s = 0; s < S - 1; ++s) {
        const auto& stage = weights.encoder[s];
        for (const auto& block : stage.blocks) x = scan_block(x, block);
        skips.push_back(x);
        x = modulation(x, ModulationMode::Down, stage.down);
    }

    for (const auto& block : weights.bottleneck) x = scan_block(x, block);
    x = modulation(x, ModulationMode::None, weights.bottleneck_mod);

    AttentionConfig attn_cfg;
    attn_cfg.win_h = cfg.win_h;
    attn_cfg.win_w = cfg.win_w;
    attn_cfg.heads = cfg.heads;

    for (int s = S - 2; s >= 0; --s) {
        const auto& stage = weights.decoder[s];
        x = modulation(x, ModulationMode::Up, stage.up);
        const FeatureMap& skip = skips[s];
        x = crop(x, skip.height, skip.width);
        x = conv1x1_fuse(concat_channels(skip, x), stage.fuse);
        for (const auto& block : stage.blocks) x = scan_block(x, block);
        attn_cfg.shifted = false;
        x = window_attention(x, attn_cfg, stage.attn);
        attn_cfg.shifted = true;
        x = window_attention(x, attn_cfg, stage.attn_shifted);
    }

    x = conv1x1_fuse(x, weights.head);
    x = pixel_shuffle(x, 4, 4);
    if (x.channels != 1 || x.height != 4 * img.height || x.width != img.width) {
        throw ConfigError("forward produced unexpected output shape");
    }

    RangeImage out = RangeImage::zeros(interpolate_beam_model(img.beam_model, 4), img.width);
    const double cap = img.beam_model.max_range;
    for (int v = 0; v < out.height; ++v) {
        for (int u = 0; u < out.width; ++u) {
            const double value = std::clamp(x.at(0, v, u), 0.0, cap);
            out.set(v, u, value);
        }
    }
    return out;
}

} // namespace rangeup::net
