#pragma once

// Encoder-decoder segmentation network: Conv-Norm-ReLU stem, hybrid
// axial-attention encoder, five-layer upsampling decoder with additive skip
// fusion, and a 3x3 conv + sigmoid head.

#include "haaseg/axial_attention.hpp"
#include "haaseg/position_encoding.hpp"
#include "haaseg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace haaseg {

struct NetConfig {
    std::size_t in_channels = 1;
    std::vector<std::size_t> stem_channels{16, 32, 64};
    std::vector<std::size_t> stem_strides{1, 2, 2};
    std::vector<std::size_t> encoder_channels{64, 64, 64, 64};
    std::vector<std::size_t> encoder_strides{1, 1, 1, 1};
    std::vector<std::size_t> decoder_channels{64, 64, 32, 32, 16};
    std::size_t decoder_kernel = 3; // odd; shared by all decoder layers
    std::size_t image_size = 32;
    EncodingStrategy position_encoding = EncodingStrategy::LPE_APE;
    std::size_t k_clip = 8;
    double gate_init = 1.0;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kDecoderLayers = 5;

/// Throws ConfigError describing the first inconsistency.
void validate(const NetConfig& cfg);

/// Conv (no bias) -> channel norm -> ReLU. Stride-2 blocks use a 4x4 kernel
/// with padding 1 so even extents halve exactly; stride-1 blocks use 3x3/p1.
struct ConvBlock {
    Tensor kernel;
    Tensor norm_gamma, norm_beta;
    std::size_t stride = 1;
    std::size_t padding = 1;

    void collect(const std::string& prefix, ParamList& out) const;
};

ConvBlock make_conv_block(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                          std::size_t padding, Rng& rng);

Tensor conv_block_forward(const Tensor& x, const ConvBlock& block);

struct EncoderStage {
    std::optional<ConvBlock> entry; // 1x1 channel change ahead of the block
    HybridAxialBlock block;

    void collect(const std::string& prefix, ParamList& out) const;
};

/// O = ReLU(Bilinear(Conv(F))) + Bilinear(Proj(F)), then + Proj(skip).
struct DecoderLayer {
    Tensor kernel, bias;  // kernel [C_out, C_in, k, k], padded to keep the size
    Tensor residual_proj; // [C_out, C_in] when channels change
    std::size_t factor = 1;
    int skip_source = -1; // index into the encoder feature list, -1 for none
    Tensor skip_proj;     // [C_out, C_skip] when channels differ

    void collect(const std::string& prefix, ParamList& out) const;
};

Tensor decoder_layer_forward(const Tensor& f, const Tensor& skip, const DecoderLayer& layer);

struct HAANet {
    NetConfig config;
    std::vector<ConvBlock> stem;
    std::vector<EncoderStage> encoder;
    std::vector<DecoderLayer> decoder;
    Tensor head_kernel, head_bias;

    /// Every learnable tensor with a stable dotted name, in build order.
    ParamList parameters() const;
};

HAANet build_network(const NetConfig& cfg);

/// image [in_channels, S, S] -> probability map [1, S, S].
Tensor net_forward(const Tensor& image, const HAANet& net);

struct ParamReport {
    std::uint64_t total_params = 0;
    std::map<std::string, std::uint64_t> per_module_params; // "stem.0", "encoder.2", "decoder.4", "head"
    std::uint64_t total_macs_per_forward = 0;
};

ParamReport count_params(const HAANet& net);
std::uint64_t count_params(const ParamList& params);
std::uint64_t count_macs(const HAANet& net, std::size_t image_size);

} // namespace haaseg
