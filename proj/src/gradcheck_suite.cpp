#include "haaseg/gradcheck_suite.hpp"

#include "haaseg/axial_attention.hpp"
#include "haaseg/config.hpp"
#include "haaseg/network.hpp"
#include "haaseg/ops.hpp"
#include "haaseg/position_encoding.hpp"
#include "haaseg/rng.hpp"
#include "haaseg/training.hpp"

#include <cmath>
#include <cstdio>

namespace haaseg {

namespace {

using Names = std::vector<std::string>;

// Scalar probe of a tensor-valued output: sum(out * R) with fixed random R.
struct Probe {
    Tensor weights;

    Probe(const Shape& shape, Rng& rng) : weights(normal_tensor(shape, rng)) {}
    Tensor operator()(const Tensor& out) const { return ops::sum(ops::mul(out, weights)); }
};

// Values in +-[0.1, 1], away from the ReLU kink.
Tensor off_zero_tensor(Shape shape, Rng& rng) {
    Tensor t = uniform_tensor(std::move(shape), rng, 0.1, 1.0);
    for (double& v : t.mutable_data())
        if (rng.uniform() < 0.5)
            v = -v;
    return t;
}

GradCheckResult check(std::vector<Tensor> inputs, Names in_names, Names& names, const std::function<Tensor()>& f,
                      double eps, std::size_t max_coords = 0) {
    names = std::move(in_names);
    return finite_diff_check(f, inputs, eps, max_coords);
}

GradCheckResult check_params(const Tensor& x, const ParamList& params, Names& names,
                             const std::function<Tensor()>& f, double eps, std::size_t max_coords) {
    std::vector<Tensor> inputs{x};
    names = {"input"};
    for (const auto& p : params) {
        inputs.push_back(p.tensor);
        names.push_back(p.name);
    }
    return finite_diff_check(f, inputs, eps, max_coords);
}

NetConfig toy_net_config(std::size_t image_size, std::uint64_t seed) {
    NetConfig nc;
    nc.in_channels = 1;
    nc.stem_channels = {4, 8};
    nc.stem_strides = {1, 2};
    nc.encoder_channels = {8, 8};
    nc.encoder_strides = {1, 1};
    nc.decoder_channels = {8, 8, 8, 8, 4};
    nc.image_size = image_size;
    nc.position_encoding = EncodingStrategy::LPE_APE;
    nc.k_clip = 4;
    nc.seed = seed;
    return nc;
}

} // namespace

std::vector<GradcheckComponent> default_gradcheck_components(const GradcheckConfig& cfg) {
    const double eps = cfg.eps;
    const std::size_t max_coords = cfg.max_coords_per_input;
    std::vector<GradcheckComponent> out;
    auto add = [&](std::string name, auto fn) { out.push_back({std::move(name), fn}); };

    add("matmul", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor a = normal_tensor({3, 4}, rng), b = normal_tensor({4, 5}, rng);
        Probe p({3, 5}, rng);
        return check({a, b}, {"a", "b"}, names, [&] { return p(ops::matmul(a, b)); }, eps);
    });
    add("softmax_lastdim", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({3, 5}, rng);
        Probe p({3, 5}, rng);
        return check({x}, {"x"}, names, [&] { return p(ops::softmax_lastdim(x)); }, eps);
    });
    add("conv2d", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({2, 5, 5}, rng), k = normal_tensor({3, 2, 3, 3}, rng), b = normal_tensor({3}, rng);
        Probe p({3, 5, 5}, rng);
        return check({x, k, b}, {"x", "kernel", "bias"}, names, [&] { return p(ops::conv2d(x, k, b, 1, 1)); }, eps);
    });
    add("conv2d_stride2", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({2, 6, 6}, rng), k = normal_tensor({3, 2, 4, 4}, rng);
        Probe p({3, 3, 3}, rng);
        return check({x, k}, {"x", "kernel"}, names, [&] { return p(ops::conv2d(x, k, Tensor{}, 2, 1)); }, eps);
    });
    add("avg_pool2d", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({2, 6, 6}, rng);
        Probe p1({2, 6, 6}, rng), p2({2, 3, 3}, rng);
        return check({x}, {"x"}, names,
                     [&] { return ops::add(p1(ops::avg_pool2d(x, 3, 1, 1)), p2(ops::avg_pool2d(x, 2, 2, 0))); }, eps);
    });
    add("bilinear_upsample", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({2, 3, 4}, rng);
        Probe p({2, 6, 8}, rng);
        return check({x}, {"x"}, names, [&] { return p(ops::bilinear_upsample(x, 2)); }, eps);
    });
    add("channel_norm", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({3, 4, 4}, rng), g = normal_tensor({3}, rng), b = normal_tensor({3}, rng);
        Probe p({3, 4, 4}, rng);
        return check({x, g, b}, {"x", "gamma", "beta"}, names, [&] { return p(ops::channel_norm(x, g, b)); }, eps);
    });
    add("relu", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = off_zero_tensor({3, 4}, rng);
        Probe p({3, 4}, rng);
        return check({x}, {"x"}, names, [&] { return p(ops::relu(x)); }, eps);
    });
    add("sigmoid", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({3, 4}, rng, 2.0);
        Probe p({3, 4}, rng);
        return check({x}, {"x"}, names, [&] { return p(ops::sigmoid(x)); }, eps);
    });
    add("elementwise", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor a = normal_tensor({2, 3, 3}, rng), b = normal_tensor({2, 3, 3}, rng), s = normal_tensor({1}, rng);
        Probe p({2, 3, 3}, rng);
        return check({a, b, s}, {"a", "b", "s"}, names, [&] {
            Tensor t = ops::add(ops::mul(a, b), ops::sub(a, ops::scale(b, 0.7)));
            return p(ops::mul_scalar(t, s));
        }, eps);
    });
    add("permute_reshape_reduce", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({2, 3, 4}, rng);
        Probe p({4, 6}, rng);
        return check({x}, {"x"}, names, [&] {
            Tensor y = ops::reshape(ops::permute(x, {2, 0, 1}), {4, 6});
            return ops::add(p(y), ops::add(ops::scale(ops::sum(ops::mul(x, x)), 0.1), ops::mean(x)));
        }, eps);
    });
    add("project_channels", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({3, 4, 5}, rng), w = normal_tensor({2, 3}, rng);
        Probe p({2, 4, 5}, rng);
        return check({x, w}, {"x", "weight"}, names, [&] { return p(ops::project_channels(x, w)); }, eps);
    });
    add("bce_loss", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor y = uniform_tensor({1, 4, 4}, rng, 0.05, 0.95);
        Tensor g({1, 4, 4});
        for (double& v : g.mutable_data())
            v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        return check({y}, {"y"}, names, [&] { return bce_loss(y, g); }, eps);
    });
    add("add_axis_table", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor x = normal_tensor({3, 4, 5}, rng), th = normal_tensor({4, 3}, rng), tw = normal_tensor({5, 3}, rng);
        Probe p({3, 4, 5}, rng);
        return check({x, th, tw}, {"x", "height_table", "width_table"}, names, [&] {
            return p(add_axis_table(add_axis_table(x, th, Axis::Height), tw, Axis::Width));
        }, eps);
    });
    add("rpe_attention_1d", [eps](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        Tensor q = normal_tensor({6, 3}, rng), k = normal_tensor({6, 3}, rng), v = normal_tensor({6, 3}, rng);
        RelativeBiasParams rp = make_relative_params(EncodingStrategy::RPE, 3, 2, rng, 0.5);
        Probe p({6, 3}, rng);
        return check({q, k, v, rp.key_bias, rp.value_bias}, {"q", "k", "v", "key_bias", "value_bias"}, names,
                     [&] { return p(rpe_attention_1d(q, k, v, rp)); }, eps);
    });
    for (auto strategy : {EncodingStrategy::APE_RPE, EncodingStrategy::LPE_RPE}) {
        add("combined_attention_1d[" + std::string(to_string(strategy)) + "]",
            [eps, strategy](std::uint64_t seed, Names& names) {
                Rng rng(seed);
                const std::size_t len = 6, d = 4;
                Tensor x = normal_tensor({len, d}, rng);
                Tensor table = strategy == EncodingStrategy::APE_RPE ? build_sinusoidal(len, d).table
                                                                     : make_learnable_table(len, d, rng, 0.5).table;
                RelativeBiasParams rp = make_relative_params(strategy, d, 2, rng, 0.5);
                AttentionParams ap = make_attention_params(d, d, rng);
                Probe p({len, d}, rng);
                std::vector<Tensor> inputs{x, rp.query_term, rp.key_term, rp.value_term, ap.wq, ap.wk, ap.wv};
                Names in_names{"x", "query_term", "key_term", "value_term", "wq", "wk", "wv"};
                if (strategy == EncodingStrategy::LPE_RPE) {
                    inputs.push_back(table);
                    in_names.push_back("table");
                }
                return check(inputs, in_names, names, [&] {
                    return p(combined_ape_rpe_attention_1d(x, table, rp, ap.wq, ap.wk, ap.wv));
                }, eps);
            });
    }
    for (auto strategy : kAllEncodings) {
        add("axial_attention[" + std::string(to_string(strategy)) + "]",
            [eps, strategy](std::uint64_t seed, Names& names) {
                Rng rng(seed);
                const std::size_t c = 4, h = 5, w = 6;
                Tensor x = normal_tensor({c, h, w}, rng);
                AxialAttentionLayer lh = make_axial_layer(c, h, Axis::Height, strategy, 2, rng);
                AxialAttentionLayer lw = make_axial_layer(c, w, Axis::Width, strategy, 2, rng);
                ParamList params;
                lh.collect("height", params);
                lw.collect("width", params);
                Probe p({c, h, w}, rng);
                return check_params(x, params, names, [&] { return p(axial_attention(axial_attention(x, lh), lw)); },
                                    eps, 0);
            });
    }
    for (auto strategy : kAllEncodings) {
        add("hybrid_block[" + std::string(to_string(strategy)) + "]",
            [eps, strategy, max_coords](std::uint64_t seed, Names& names) {
                Rng rng(seed);
                HybridBlockConfig bc{.channels = 4, .height = 6, .width = 6, .strategy = strategy, .k_clip = 2,
                                     .gate_init = 1.0, .pool_stride = 1};
                HybridAxialBlock block = make_hybrid_block(bc, rng);
                Tensor x = normal_tensor({4, 6, 6}, rng);
                ParamList params;
                block.collect("block", params);
                Probe p({4, 6, 6}, rng);
                return check_params(x, params, names, [&] { return p(hybrid_block_forward(x, block)); }, eps,
                                    max_coords);
            });
    }
    add("hybrid_block[stride 2]", [eps, max_coords](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        HybridBlockConfig bc{.channels = 4, .height = 6, .width = 6, .strategy = EncodingStrategy::LPE_APE,
                             .k_clip = 2, .gate_init = 1.0, .pool_stride = 2};
        HybridAxialBlock block = make_hybrid_block(bc, rng);
        Tensor x = normal_tensor({4, 6, 6}, rng);
        ParamList params;
        block.collect("block", params);
        Probe p({4, 3, 3}, rng);
        return check_params(x, params, names, [&] { return p(hybrid_block_forward(x, block)); }, eps, max_coords);
    });
    add("conv_block", [eps, max_coords](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        ConvBlock block = make_conv_block(3, 4, 3, 1, 1, rng);
        Tensor x = normal_tensor({3, 6, 6}, rng);
        ParamList params;
        block.collect("block", params);
        Probe p({4, 6, 6}, rng);
        return check_params(x, params, names, [&] { return p(conv_block_forward(x, block)); }, eps, max_coords);
    });
    add("decoder_layer", [eps, max_coords](std::uint64_t seed, Names& names) {
        Rng rng(seed);
        DecoderLayer layer;
        auto learn = [](Tensor t) { return t.set_requires_grad(true), t; };
        layer.kernel = learn(normal_tensor({3, 4, 3, 3}, rng, 0.3));
        layer.bias = learn(normal_tensor({3}, rng, 0.3));
        layer.residual_proj = learn(normal_tensor({3, 4}, rng, 0.5));
        layer.factor = 2;
        layer.skip_source = 0;
        layer.skip_proj = learn(normal_tensor({3, 2}, rng, 0.5));
        Tensor f = normal_tensor({4, 3, 3}, rng);
        Tensor skip = normal_tensor({2, 6, 6}, rng);
        ParamList params;
        layer.collect("layer", params);
        params.push_back({"skip", skip});
        Probe p({3, 6, 6}, rng);
        return check_params(f, params, names, [&] { return p(decoder_layer_forward(f, skip, layer)); }, eps,
                            max_coords);
    });
    add("network[" + std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) + "]",
        [eps, max_coords, size = cfg.image_size](std::uint64_t seed, Names& names) {
            HAANet net = build_network(toy_net_config(size, seed));
            Rng rng(derive_seed(seed, {0x6763}));
            Tensor g({1, size, size});
            for (double& v : g.mutable_data())
                v = rng.uniform() < 0.3 ? 1.0 : 0.0;
            // Central differences are only meaningful away from ReLU kinks:
            // redraw the image until every ReLU input clears 10 eps.
            Tensor x;
            for (int attempt = 0;; ++attempt) {
                x = uniform_tensor({1, size, size}, rng, 0.0, 1.0);
                ops::ReluMarginMonitor monitor;
                predict(net, x);
                if (monitor.min_margin() > 10 * eps || attempt == 50)
                    break;
            }
            return check_params(x, net.parameters(), names, [&] { return bce_loss(net_forward(x, net), g); }, eps,
                                max_coords);
        });
    return out;
}

bool GradcheckReport::all_passed() const {
    for (const auto& r : rows)
        if (!r.passed)
            return false;
    return !rows.empty();
}

GradcheckReport run_gradcheck(const std::vector<GradcheckComponent>& components, std::uint64_t base_seed,
                              std::size_t seeds, double tolerance, std::ostream* progress) {
    GradcheckReport report;
    for (const auto& c : components) {
        GradcheckRow row;
        row.name = c.name;
        for (std::size_t s = 0; s < seeds; ++s) {
            const std::uint64_t seed = base_seed + s;
            Names names;
            const GradCheckResult r = c.run(seed, names);
            row.coordinates_checked += r.coordinates_checked;
            if (s == 0 || r.max_rel_error > row.max_rel_error || std::isnan(r.max_rel_error)) {
                row.max_rel_error = r.max_rel_error;
                row.worst_seed = seed;
                row.worst_input = r.input_index < names.size() ? names[r.input_index]
                                                                : "#" + std::to_string(r.input_index);
                row.worst_coordinate = r.coordinate;
                row.analytic = r.analytic;
                row.numeric = r.numeric;
            }
        }
        row.passed = row.max_rel_error < tolerance;
        if (progress)
            *progress << "  " << row.name << (row.passed ? " ok" : " FAILED") << '\n' << std::flush;
        report.rows.push_back(std::move(row));
    }
    return report;
}

void print_gradcheck_report(const GradcheckReport& report, double tolerance, std::ostream& out) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-36s %14s %8s  %s\n", "component", "max_rel_error", "coords", "status");
    out << buf;
    std::size_t failed = 0;
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%-36s %14.3e %8zu  %s\n", r.name.c_str(), r.max_rel_error,
                      r.coordinates_checked, r.passed ? "pass" : "FAIL");
        out << buf;
        if (!r.passed) {
            ++failed;
            std::snprintf(buf, sizeof buf, "    worst at seed %llu, input '%s', coordinate %zu: analytic %.9e, numeric %.9e\n",
                          static_cast<unsigned long long>(r.worst_seed), r.worst_input.c_str(), r.worst_coordinate,
                          r.analytic, r.numeric);
            out << buf;
        }
    }
    std::snprintf(buf, sizeof buf, "%zu components, %zu failed (tolerance %.1e)\n", report.rows.size(), failed,
                  tolerance);
    out << buf;
}

} // namespace haaseg
