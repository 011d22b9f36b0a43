#pragma once

#include "haaseg/attention_kernel.hpp"
#include "haaseg/position_encoding.hpp"
#include "haaseg/rng.hpp"
#include "haaseg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace haaseg {

struct NamedParam {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

/// 1x1 projections, each [d_out, d_in].
struct AttentionParams {
    Tensor wq, wk, wv;
};

AttentionParams make_attention_params(std::size_t d_in, std::size_t d_out, Rng& rng);

/// Single-head attention along one axis with its own position state.
struct AxialAttentionLayer {
    Axis axis = Axis::Height;
    EncodingStrategy strategy = EncodingStrategy::None;
    AttentionParams proj;
    LearnableTable learnable;    // defined for LPE variants
    SinusoidalTable sinusoidal;  // defined for APE variants
    RelativeBiasParams relative; // RPE and bias-term variants

    void collect(const std::string& prefix, ParamList& out) const;
};

/// `length` is the extent of the attended axis; tables are [length, channels].
AxialAttentionLayer make_axial_layer(std::size_t channels, std::size_t length, Axis axis, EncodingStrategy strategy,
                                     std::size_t k_clip, Rng& rng);

/// Softmax over all H*W positions. Built from generic ops; serves as the
/// reference that axial attention is checked against.
Tensor full_self_attention(const Tensor& x, const AttentionParams& params);

/// Attention restricted to `layer.axis`; each column (Height) or row (Width)
/// is an independent 1D problem. Absolute tables are added to the input
/// before projection; relative terms enter the logits and values.
Tensor axial_attention(const Tensor& x, const AxialAttentionLayer& layer);

struct HybridBlockConfig {
    std::size_t channels = 64;
    std::size_t height = 8;
    std::size_t width = 8;
    EncodingStrategy strategy = EncodingStrategy::LPE_APE;
    std::size_t k_clip = 8;
    double gate_init = 1.0;
    std::size_t pool_stride = 1; // 1: 3x3/s1/p1 smoothing, 2: 2x2/s2 downsampling
};

/// Gated height-then-width axial attention:
///   F^h = g1 * Avg(Norm(HA(F^c))) + Avg(F^c)
///   F^w = g2 * Avg(Norm(WA(F^h))) + Avg(F^h)
struct HybridAxialBlock {
    AxialAttentionLayer height_attn;
    AxialAttentionLayer width_attn;
    Tensor gamma1, gamma2; // [1]
    Tensor norm_h_gamma, norm_h_beta;
    Tensor norm_w_gamma, norm_w_beta;
    std::size_t pool_stride = 1;

    void collect(const std::string& prefix, ParamList& out) const;
};

HybridAxialBlock make_hybrid_block(const HybridBlockConfig& cfg, Rng& rng);

/// The pooling used on both branches of a gate.
Tensor gate_pool(const Tensor& x, std::size_t stride);

Tensor hybrid_block_forward(const Tensor& f_c, const HybridAxialBlock& block);

/// Similarity-logit multiply-accumulates.
struct MacCount {
    std::uint64_t full_attention_macs = 0; // (HW)^2 d
    std::uint64_t height_axis_macs = 0;    // H^2 W d
    std::uint64_t width_axis_macs = 0;     // H W^2 d
};

MacCount mac_count(std::uint64_t h, std::uint64_t w, std::uint64_t d);

} // namespace haaseg
