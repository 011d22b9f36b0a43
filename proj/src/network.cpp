#include "haaseg/network.hpp"

#include "haaseg/errors.hpp"
#include "haaseg/ops.hpp"

#include <cmath>

namespace haaseg {

namespace {

Tensor learnable(Tensor t) {
    t.set_requires_grad(true);
    return t;
}

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0) {
    return learnable(normal_tensor(std::move(shape), rng, gain * std::sqrt(2.0 / static_cast<double>(fan_in))));
}

Tensor projection(std::size_t c_out, std::size_t c_in, Rng& rng, double gain = 1.0) {
    return learnable(normal_tensor({c_out, c_in}, rng, gain / std::sqrt(static_cast<double>(c_in))));
}

// Decoder branches are summed without normalization; a reduced gain keeps
// activations bounded across the five layers. The head starts near zero
// logits.
constexpr double kDecoderGain = 0.5;
constexpr double kHeadGain = 0.1;

std::string list_str(const std::vector<std::size_t>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
    return s + "]";
}

struct Feature {
    std::size_t channels;
    std::size_t size;
};

} // namespace

void validate(const NetConfig& cfg) {
    if (cfg.in_channels == 0)
        throw ConfigError("net.in_channels must be >= 1");
    if (cfg.stem_channels.empty())
        throw ConfigError("net.stem_channels must list at least one conv block");
    if (cfg.stem_strides.size() != cfg.stem_channels.size())
        throw ConfigError("net.stem_strides " + list_str(cfg.stem_strides) + " must have one entry per stem block " +
                          list_str(cfg.stem_channels));
    if (cfg.encoder_channels.empty())
        throw ConfigError("net.encoder_channels must list at least one hybrid axial block");
    if (cfg.encoder_strides.size() != cfg.encoder_channels.size())
        throw ConfigError("net.encoder_strides " + list_str(cfg.encoder_strides) +
                          " must have one entry per encoder block " + list_str(cfg.encoder_channels));
    if (cfg.decoder_channels.size() != kDecoderLayers)
        throw ConfigError("net.decoder_channels must have exactly 5 entries, got " + list_str(cfg.decoder_channels));
    for (auto c : cfg.stem_channels)
        if (c == 0)
            throw ConfigError("net.stem_channels entries must be positive");
    for (auto c : cfg.decoder_channels)
        if (c == 0)
            throw ConfigError("net.decoder_channels entries must be positive");
    for (auto c : cfg.encoder_channels)
        if (c == 0 || c % 2)
            throw ConfigError("net.encoder_channels entries must be positive and even (sinusoidal tables), got " +
                              list_str(cfg.encoder_channels));
    for (auto s : cfg.stem_strides)
        if (s != 1 && s != 2)
            throw ConfigError("net.stem_strides entries must be 1 or 2");
    for (auto s : cfg.encoder_strides)
        if (s != 1 && s != 2)
            throw ConfigError("net.encoder_strides entries must be 1 or 2");
    if (cfg.image_size == 0)
        throw ConfigError("net.image_size must be positive");
    if (cfg.decoder_kernel % 2 == 0)
        throw ConfigError("net.decoder_kernel must be odd, got " + std::to_string(cfg.decoder_kernel));

    std::size_t size = cfg.image_size;
    for (auto s : cfg.stem_strides) {
        if (size % s)
            throw ConfigError("net.image_size " + std::to_string(cfg.image_size) + " is not divisible by the stem strides");
        size /= s;
    }
    for (auto s : cfg.encoder_strides) {
        if (size % s)
            throw ConfigError("net.image_size " + std::to_string(cfg.image_size) +
                              " is not divisible by the encoder strides");
        size /= s;
    }
    const std::size_t ratio = cfg.image_size / size;
    std::size_t ups = 0;
    for (std::size_t r = ratio; r > 1; r /= 2)
        ++ups;
    if (ups > kDecoderLayers)
        throw ConfigError("total downsampling factor " + std::to_string(ratio) +
                          " needs more than 5 x2 decoder upsamplings");
}

void ConvBlock::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".norm.gamma", norm_gamma});
    out.push_back({prefix + ".norm.beta", norm_beta});
}

ConvBlock make_conv_block(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                          std::size_t padding, Rng& rng) {
    ConvBlock b;
    b.kernel = he_normal({c_out, c_in, kernel, kernel}, c_in * kernel * kernel, rng);
    b.norm_gamma = learnable(Tensor({c_out}, 1.0));
    b.norm_beta = learnable(Tensor({c_out}, 0.0));
    b.stride = stride;
    b.padding = padding;
    return b;
}

Tensor conv_block_forward(const Tensor& x, const ConvBlock& block) {
    return ops::relu(
        ops::channel_norm(ops::conv2d(x, block.kernel, Tensor{}, block.stride, block.padding), block.norm_gamma,
                          block.norm_beta));
}

void EncoderStage::collect(const std::string& prefix, ParamList& out) const {
    if (entry)
        entry->collect(prefix + ".entry", out);
    block.collect(prefix + ".haa", out);
}

void DecoderLayer::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".bias", bias});
    if (residual_proj.defined())
        out.push_back({prefix + ".residual_proj", residual_proj});
    if (skip_proj.defined())
        out.push_back({prefix + ".skip_proj", skip_proj});
}

Tensor decoder_layer_forward(const Tensor& f, const Tensor& skip, const DecoderLayer& layer) {
    const Tensor main = ops::relu(ops::bilinear_upsample(ops::conv2d(f, layer.kernel, layer.bias, 1, layer.kernel.dim(2) / 2), layer.factor));
    const Tensor res = layer.residual_proj.defined() ? ops::project_channels(f, layer.residual_proj) : f;
    Tensor out = ops::add(main, ops::bilinear_upsample(res, layer.factor));
    if (skip.defined()) {
        if (skip.rank() != 3 || skip.dim(1) != out.dim(1) || skip.dim(2) != out.dim(2))
            throw ShapeError("decoder skip " + shape_str(skip.shape()) + " does not match layer output " +
                             shape_str(out.shape()));
        out = ops::add(out, layer.skip_proj.defined() ? ops::project_channels(skip, layer.skip_proj) : skip);
    }
    return out;
}

ParamList HAANet::parameters() const {
    ParamList out;
    for (std::size_t i = 0; i < stem.size(); ++i)
        stem[i].collect("stem." + std::to_string(i), out);
    for (std::size_t i = 0; i < encoder.size(); ++i)
        encoder[i].collect("encoder." + std::to_string(i), out);
    for (std::size_t i = 0; i < decoder.size(); ++i)
        decoder[i].collect("decoder." + std::to_string(i), out);
    out.push_back({"head.kernel", head_kernel});
    out.push_back({"head.bias", head_bias});
    return out;
}

HAANet build_network(const NetConfig& cfg) {
    validate(cfg);
    Rng rng(derive_seed(cfg.seed, {0x6e6574}));
    HAANet net;
    net.config = cfg;

    std::vector<Feature> features;
    std::size_t channels = cfg.in_channels, size = cfg.image_size;
    for (std::size_t i = 0; i < cfg.stem_channels.size(); ++i) {
        const std::size_t stride = cfg.stem_strides[i];
        const std::size_t k = stride == 2 ? 4 : 3;
        net.stem.push_back(make_conv_block(channels, cfg.stem_channels[i], k, stride, 1, rng));
        channels = cfg.stem_channels[i];
        size /= stride;
        features.push_back({channels, size});
    }
    for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
        EncoderStage stage;
        if (cfg.encoder_channels[i] != channels)
            stage.entry = make_conv_block(channels, cfg.encoder_channels[i], 1, 1, 0, rng);
        channels = cfg.encoder_channels[i];
        HybridBlockConfig bc{.channels = channels, .height = size, .width = size,
                             .strategy = cfg.position_encoding, .k_clip = cfg.k_clip, .gate_init = cfg.gate_init,
                             .pool_stride = cfg.encoder_strides[i]};
        stage.block = make_hybrid_block(bc, rng);
        size /= cfg.encoder_strides[i];
        features.push_back({channels, size});
        net.encoder.push_back(std::move(stage));
    }

    // x2 upsamplings go to the last layers; skips pair with the deepest unused
    // encoder feature of equal resolution.
    std::size_t ups = 0;
    for (std::size_t r = cfg.image_size / size; r > 1; r /= 2)
        ++ups;
    std::vector<bool> used(features.size(), false);
    for (std::size_t i = 0; i < kDecoderLayers; ++i) {
        DecoderLayer layer;
        const std::size_t c_out = cfg.decoder_channels[i];
        layer.factor = i + ups >= kDecoderLayers ? 2 : 1;
        const std::size_t k = cfg.decoder_kernel;
        layer.kernel = he_normal({c_out, channels, k, k}, channels * k * k, rng, kDecoderGain);
        layer.bias = learnable(Tensor({c_out}, 0.0));
        if (c_out != channels)
            layer.residual_proj = projection(c_out, channels, rng, kDecoderGain);
        size *= layer.factor;
        for (std::size_t f = features.size() - 1; f-- > 0;) {
            if (!used[f] && features[f].size == size) {
                used[f] = true;
                layer.skip_source = static_cast<int>(f);
                if (features[f].channels != c_out)
                    layer.skip_proj = projection(c_out, features[f].channels, rng, kDecoderGain);
                break;
            }
        }
        channels = c_out;
        net.decoder.push_back(std::move(layer));
    }
    if (size != cfg.image_size)
        throw ConfigError("decoder does not restore the input resolution");

    net.head_kernel = learnable(normal_tensor({1, channels, 3, 3}, rng, kHeadGain / std::sqrt(channels * 9.0)));
    net.head_bias = learnable(Tensor({1}, 0.0));
    return net;
}

Tensor net_forward(const Tensor& image, const HAANet& net) {
    const auto& cfg = net.config;
    const std::size_t s = cfg.image_size;
    if (image.shape() != Shape{cfg.in_channels, s, s})
        throw ShapeError("network expects an input of shape " + shape_str({cfg.in_channels, s, s}) + " (S=" +
                         std::to_string(s) + "), got " + shape_str(image.shape()));

    std::vector<Tensor> features;
    Tensor x = image;
    for (const auto& block : net.stem) {
        x = conv_block_forward(x, block);
        features.push_back(x);
    }
    for (const auto& stage : net.encoder) {
        if (stage.entry)
            x = conv_block_forward(x, *stage.entry);
        x = hybrid_block_forward(x, stage.block);
        features.push_back(x);
    }
    for (const auto& layer : net.decoder) {
        const Tensor skip = layer.skip_source >= 0 ? features[static_cast<std::size_t>(layer.skip_source)] : Tensor{};
        x = decoder_layer_forward(x, skip, layer);
    }
    return ops::sigmoid(ops::conv2d(x, net.head_kernel, net.head_bias, 1, 1));
}

namespace {

std::string module_of(const std::string& name) {
    const auto first = name.find('.');
    if (name.compare(0, first, "head") == 0)
        return "head";
    const auto second = name.find('.', first + 1);
    return name.substr(0, second);
}

// Multiply-accumulate accounting, walking the same structure as net_forward.
struct MacWalker {
    std::uint64_t macs = 0;

    void conv(std::uint64_t c_in, std::uint64_t c_out, std::uint64_t k, std::uint64_t h_out, std::uint64_t w_out) {
        macs += c_out * c_in * k * k * h_out * w_out;
    }
    void elementwise(std::uint64_t c, std::uint64_t h, std::uint64_t w, std::uint64_t per = 1) { macs += per * c * h * w; }
    void attention(std::uint64_t c, std::uint64_t h, std::uint64_t w, Axis axis) {
        conv(c, 3 * c, 1, h, w); // q, k, v projections
        const MacCount m = mac_count(h, w, c);
        const std::uint64_t logits = axis == Axis::Height ? m.height_axis_macs : m.width_axis_macs;
        macs += 2 * logits; // similarities + weighted value sum
    }
};

} // namespace

ParamReport count_params(const HAANet& net) {
    ParamReport r;
    for (const auto& p : net.parameters()) {
        r.per_module_params[module_of(p.name)] += p.tensor.numel();
        r.total_params += p.tensor.numel();
    }
    r.total_macs_per_forward = count_macs(net, net.config.image_size);
    return r;
}

std::uint64_t count_params(const ParamList& params) {
    std::uint64_t total = 0;
    for (const auto& p : params)
        total += p.tensor.numel();
    return total;
}

std::uint64_t count_macs(const HAANet& net, std::size_t image_size) {
    MacWalker m;
    std::uint64_t c = net.config.in_channels, s = image_size;
    for (const auto& b : net.stem) {
        const std::uint64_t k = b.kernel.dim(2), c_out = b.kernel.dim(0);
        s = (s + 2 * b.padding - k) / b.stride + 1;
        m.conv(c, c_out, k, s, s);
        m.elementwise(c_out, s, s); // norm affine
        c = c_out;
    }
    for (const auto& st : net.encoder) {
        if (st.entry) {
            const std::uint64_t c_out = st.entry->kernel.dim(0);
            m.conv(c, c_out, 1, s, s);
            m.elementwise(c_out, s, s);
            c = c_out;
        }
        const std::uint64_t stride = st.block.pool_stride, pool_k = stride == 1 ? 3 : 2;
        m.attention(c, s, s, Axis::Height);
        m.elementwise(c, s, s); // norm
        const std::uint64_t s2 = s / stride;
        m.elementwise(c, s2, s2, 2 * pool_k * pool_k); // both pooled branches
        m.elementwise(c, s2, s2);                      // gate
        s = s2;
        m.attention(c, s, s, Axis::Width);
        m.elementwise(c, s, s);
        m.elementwise(c, s, s, 2 * 9);
        m.elementwise(c, s, s);
    }
    for (const auto& l : net.decoder) {
        const std::uint64_t c_out = l.kernel.dim(0);
        m.conv(c, c_out, l.kernel.dim(2), s, s);
        const std::uint64_t s2 = s * l.factor;
        if (l.residual_proj.defined())
            m.conv(c, c_out, 1, s, s);
        if (l.factor > 1)
            m.elementwise(c_out, s2, s2, 2 * 4); // both branches interpolated
        if (l.skip_proj.defined())
            m.conv(l.skip_proj.dim(1), c_out, 1, s2, s2);
        s = s2;
        c = c_out;
    }
    m.conv(c, 1, 3, s, s);
    return m.macs;
}

} // namespace haaseg
