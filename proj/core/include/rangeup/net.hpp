#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rangeup/geometry.hpp"

namespace rangeup::net {

// C x H x W feature tensor, row-major within each channel plane.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    static FeatureMap zeros(int c, int h, int w);

    std::size_t idx(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height + y) * width + x;
    }
    double at(int c, int y, int x) const { return data[idx(c, y, x)]; }
    double& at(int c, int y, int x) { return data[idx(c, y, x)]; }
};

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    std::size_t size() const { return data.size(); }
};

// Diagonal state-space parameters for one scan direction. Each channel runs
// an independent N-state recurrence
//   h_t = exp(delta_c * a) (.) h_{t-1} + delta_c * b_c * x_t
//   y_t = c_c . h_t + skip_c * x_t
struct ScanDirParams {
    std::vector<double> a;     // [N], all negative
    std::vector<double> b;     // [C * N]
    std::vector<double> c;     // [C * N]
    std::vector<double> delta; // [C], all positive
    std::vector<double> skip;  // [C]
};

struct ScanParams {
    int state_dim = 4;
    std::array<ScanDirParams, 4> dirs; // left-right, right-left, top-down, bottom-up

    void validate(int channels) const;
};

struct ScanBlockWeights {
    Tensor dw_kernel; // [C][3][3] depthwise, zero padding, no bias
    ScanParams scan;
};

struct SeWeights {
    Tensor w1; // [C/r][C]
    Tensor w2; // [C][C/r]
};

enum class ModulationMode { Down, Up, None };

struct ModulationWeights {
    SeWeights se;
    Tensor conv; // Down: [2C][C][3][3] stride 2; Up: [2C][C] 1x1; None: unused
};

struct AttentionConfig {
    int win_h = 2;
    int win_w = 8;
    int heads = 2;
    bool shifted = false;
};

struct AttentionWeights {
    Tensor wq, wk, wv, wo; // [C][C], no bias
    Tensor rel_bias;       // [heads][(2*win_h - 1) * (2*win_w - 1)]
    Tensor ffn1, ffn2;     // [2C][C], [C][2C]
};

struct NetworkConfig {
    std::vector<int> depths{2, 2, 2, 2};
    int base_channels = 8;
    int upsample_factor = 4; // fixed by the 16-channel 4x4 shuffle head
    int state_dim = 4;
    int se_reduction = 4;
    int heads = 2;
    int win_h = 2;
    int win_w = 8;

    void validate() const;
    int stages() const { return static_cast<int>(depths.size()); }
    int stage_channels(int stage) const { return base_channels << stage; }
};

struct EncoderStage {
    std::vector<ScanBlockWeights> blocks;
    ModulationWeights down;
};

struct DecoderStage {
    ModulationWeights up;
    Tensor fuse; // [C][2C] 1x1 after skip concatenation
    std::vector<ScanBlockWeights> blocks;
    AttentionWeights attn;         // W-MSA
    AttentionWeights attn_shifted; // SW-MSA
};

struct Weights {
    NetworkConfig cfg;
    std::uint64_t seed = 0;
    Tensor patch_embed; // [C1][4]: 1x4 horizontal kernel, stride (1,4)
    std::vector<EncoderStage> encoder;       // stages 0 .. S-2
    std::vector<ScanBlockWeights> bottleneck; // stage S-1
    ModulationWeights bottleneck_mod;         // mode None (SE refinement only)
    std::vector<DecoderStage> decoder;        // applied for stages S-2 .. 0
    Tensor head; // [16][C1] 1x1 before the 4x4 shuffle
};

// Seeded deterministic initialization: uniform [-0.05, 0.05] rounded through
// float32 (so weight files round-trip bit-exactly), except the state matrices
// a = -exp(linspace) and the positive step sizes delta.
Weights init_weights(const NetworkConfig& cfg, std::uint64_t seed);

// Weight bundle: one JSON manifest line (schema, seed, config, tensor names
// and shapes) followed by packed little-endian float32 payload.
void save_weights(const Weights& w, const std::string& path);
Weights load_weights(const std::string& path);

// 1x4 horizontal convolution with stride (1,4): H x W -> C1 x H x W/4.
FeatureMap patch_embed(const RangeImage& img, const Tensor& kernel);

// Non-affine layer normalization across channels at each spatial site.
FeatureMap layer_norm_channels(const FeatureMap& x, double eps = 1e-5);

FeatureMap depthwise_conv3x3(const FeatureMap& x, const Tensor& kernel);

// Four-direction selective scan; directional outputs are summed.
FeatureMap ss2d_scan(const FeatureMap& x, const ScanParams& p);

// Norm -> depthwise conv -> SS2D, with a residual connection to the input.
FeatureMap scan_block(const FeatureMap& x, const ScanBlockWeights& w);

// Squeeze-excitation with global max pooling: per-channel gate
// sigmoid(W2 relu(W1 max_c)) rescaling the input.
FeatureMap se_max(const FeatureMap& x, const SeWeights& w);

// F_mid = x + SE(Norm(x)); then Down: stride-2 3x3 conv + Norm (2C, h/2, w/2,
// odd dims zero-padded right/bottom first); Up: 1x1 conv to 2C + 2x2 pixel
// shuffle (C/2, 2h, 2w); None: F_mid.
FeatureMap modulation(const FeatureMap& x, ModulationMode mode, const ModulationWeights& w);

// Channel blocks of size r_v*r_h map to r_v x r_h spatial tiles, row-major.
FeatureMap pixel_shuffle(const FeatureMap& x, int r_v, int r_h);
FeatureMap pixel_unshuffle(const FeatureMap& x, int r_v, int r_h);

struct AttentionStats {
    double min_row_sum = 0.0;
    double max_row_sum = 0.0;
    double max_masked_weight = 0.0; // over wrapped pairs under the shift mask
};

// Pre-normalized windowed multi-head attention with relative position bias
// and a two-layer feed-forward, each with its own residual. When shifted,
// the map is cyclically shifted by half a window and wrapped pairs are
// masked out. Non-multiple dims are zero-padded and cropped back.
FeatureMap window_attention(const FeatureMap& x, const AttentionConfig& cfg,
                            const AttentionWeights& w, AttentionStats* stats = nullptr);

// Full U-shaped forward pass: H x W -> 4H x W, clamped to [0, max_range].
// Cells clamped to zero are marked invalid in the output.
RangeImage forward(const RangeImage& img, const Weights& weights);

} // namespace rangeup::net
