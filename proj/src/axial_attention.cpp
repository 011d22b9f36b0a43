#include "haaseg/axial_attention.hpp"

#include "haaseg/errors.hpp"
#include "haaseg/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace haaseg {

AttentionParams make_attention_params(std::size_t d_in, std::size_t d_out, Rng& rng) {
    const double std = 1.0 / std::sqrt(static_cast<double>(d_in));
    auto w = [&] {
        Tensor t = normal_tensor({d_out, d_in}, rng, std);
        t.set_requires_grad(true);
        return t;
    };
    AttentionParams p;
    p.wq = w();
    p.wk = w();
    p.wv = w();
    return p;
}

void AxialAttentionLayer::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".wq", proj.wq});
    out.push_back({prefix + ".wk", proj.wk});
    out.push_back({prefix + ".wv", proj.wv});
    if (learnable.table.defined())
        out.push_back({prefix + ".lpe", learnable.table});
    const std::pair<const char*, const Tensor*> rel[] = {
        {".rpe_key", &relative.key_bias},     {".rpe_value", &relative.value_bias},
        {".bias_query", &relative.query_term}, {".bias_key", &relative.key_term},
        {".bias_value", &relative.value_term},
    };
    for (auto [suffix, t] : rel)
        if (t->defined())
            out.push_back({prefix + suffix, *t});
}

AxialAttentionLayer make_axial_layer(std::size_t channels, std::size_t length, Axis axis, EncodingStrategy strategy,
                                     std::size_t k_clip, Rng& rng) {
    AxialAttentionLayer layer;
    layer.axis = axis;
    layer.strategy = strategy;
    layer.proj = make_attention_params(channels, channels, rng);
    if (uses_learnable_table(strategy))
        layer.learnable = make_learnable_table(length, channels, rng);
    if (uses_sinusoidal_table(strategy))
        layer.sinusoidal = build_sinusoidal(length, channels);
    layer.relative = make_relative_params(strategy, channels, k_clip, rng);
    return layer;
}

Tensor full_self_attention(const Tensor& x, const AttentionParams& params) {
    const std::size_t h = x.dim(1), w = x.dim(2);
    auto flat = [&](const Tensor& weight) {
        Tensor p = ops::project_channels(x, weight);
        return ops::reshape(p, {p.dim(0), h * w});
    };
    const Tensor q = flat(params.wq), k = flat(params.wk), v = flat(params.wv);
    // scores[p, r] = q_p . k_r over all H*W positions
    const Tensor weights = ops::softmax_lastdim(ops::matmul(ops::permute(q, {1, 0}), k));
    const Tensor y = ops::matmul(v, ops::permute(weights, {1, 0}));
    return ops::reshape(y, {v.dim(0), h, w});
}

Tensor axial_attention(const Tensor& x, const AxialAttentionLayer& layer) {
    Tensor input = x;
    if (layer.learnable.table.defined())
        input = add_axis_table(input, layer.learnable.table, layer.axis);
    if (layer.sinusoidal.table.defined())
        input = add_axis_table(input, layer.sinusoidal.table, layer.axis);

    RelativeTerms terms;
    terms.k_clip = layer.relative.k_clip;
    if (uses_relative_bias(layer.strategy)) {
        terms.query_bias = layer.relative.key_bias;
        terms.value_bias = layer.relative.value_bias;
    } else if (uses_bias_terms(layer.strategy)) {
        terms.query_bias = layer.relative.query_term;
        terms.key_bias = layer.relative.key_term;
        terms.value_bias = layer.relative.value_term;
    }

    const Tensor q = ops::project_channels(input, layer.proj.wq);
    const Tensor k = ops::project_channels(input, layer.proj.wk);
    const Tensor v = ops::project_channels(input, layer.proj.wv);
    return sliced_attention(q, k, v, SliceLayout::axial(q.shape(), layer.axis), terms);
}

void HybridAxialBlock::collect(const std::string& prefix, ParamList& out) const {
    height_attn.collect(prefix + ".height", out);
    width_attn.collect(prefix + ".width", out);
    out.push_back({prefix + ".gamma1", gamma1});
    out.push_back({prefix + ".gamma2", gamma2});
    out.push_back({prefix + ".norm_h.gamma", norm_h_gamma});
    out.push_back({prefix + ".norm_h.beta", norm_h_beta});
    out.push_back({prefix + ".norm_w.gamma", norm_w_gamma});
    out.push_back({prefix + ".norm_w.beta", norm_w_beta});
}

HybridAxialBlock make_hybrid_block(const HybridBlockConfig& cfg, Rng& rng) {
    if (cfg.pool_stride != 1 && cfg.pool_stride != 2)
        throw ConfigError("hybrid block pool stride must be 1 or 2");
    if (cfg.pool_stride == 2 && (cfg.height % 2 || cfg.width % 2))
        throw ConfigError("stride-2 pooling needs even spatial extents");
    HybridAxialBlock b;
    b.pool_stride = cfg.pool_stride;
    b.height_attn = make_axial_layer(cfg.channels, cfg.height, Axis::Height, cfg.strategy, cfg.k_clip, rng);
    b.width_attn = make_axial_layer(cfg.channels, cfg.width / cfg.pool_stride, Axis::Width, cfg.strategy, cfg.k_clip,
                                    rng);
    auto learnable = [](Tensor t) { return t.set_requires_grad(true), t; };
    b.gamma1 = learnable(Tensor::scalar(cfg.gate_init));
    b.gamma2 = learnable(Tensor::scalar(cfg.gate_init));
    b.norm_h_gamma = learnable(Tensor({cfg.channels}, 1.0));
    b.norm_h_beta = learnable(Tensor({cfg.channels}, 0.0));
    b.norm_w_gamma = learnable(Tensor({cfg.channels}, 1.0));
    b.norm_w_beta = learnable(Tensor({cfg.channels}, 0.0));
    return b;
}

Tensor gate_pool(const Tensor& x, std::size_t stride) {
    return stride == 1 ? ops::avg_pool2d(x, 3, 1, 1) : ops::avg_pool2d(x, 2, 2, 0);
}

namespace {
// Both summands of a gate equation share a shape by construction.
void check_gate_shapes(const Tensor& attn, const Tensor& residual) {
    if (attn.shape() != residual.shape())
        throw std::logic_error("hybrid block: gated branch " + shape_str(attn.shape()) + " vs residual " +
                               shape_str(residual.shape()));
}
} // namespace

Tensor hybrid_block_forward(const Tensor& f_c, const HybridAxialBlock& block) {
    const Tensor ha = gate_pool(
        ops::channel_norm(axial_attention(f_c, block.height_attn), block.norm_h_gamma, block.norm_h_beta),
        block.pool_stride);
    const Tensor residual_h = gate_pool(f_c, block.pool_stride);
    check_gate_shapes(ha, residual_h);
    const Tensor f_h = ops::add(ops::mul_scalar(ha, block.gamma1), residual_h);

    const Tensor wa =
        gate_pool(ops::channel_norm(axial_attention(f_h, block.width_attn), block.norm_w_gamma, block.norm_w_beta), 1);
    const Tensor residual_w = gate_pool(f_h, 1);
    check_gate_shapes(wa, residual_w);
    return ops::add(ops::mul_scalar(wa, block.gamma2), residual_w);
}

MacCount mac_count(std::uint64_t h, std::uint64_t w, std::uint64_t d) {
    return {.full_attention_macs = (h * w) * (h * w) * d,
            .height_axis_macs = h * h * w * d,
            .width_axis_macs = h * w * w * d};
}

} // namespace haaseg
