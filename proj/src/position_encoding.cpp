#include "haaseg/position_encoding.hpp"

#include "haaseg/errors.hpp"
#include "haaseg/ops.hpp"

#include <algorithm>
#include <cmath>

namespace haaseg {

std::string_view to_string(EncodingStrategy s) {
    switch (s) {
    case EncodingStrategy::None: return "None";
    case EncodingStrategy::LPE: return "LPE";
    case EncodingStrategy::APE: return "APE";
    case EncodingStrategy::RPE: return "RPE";
    case EncodingStrategy::APE_RPE: return "APE+RPE";
    case EncodingStrategy::LPE_RPE: return "LPE+RPE";
    case EncodingStrategy::LPE_APE: return "LPE+APE";
    }
    return "?";
}

EncodingStrategy parse_encoding(std::string_view name) {
    for (auto s : kAllEncodings)
        if (to_string(s) == name)
            return s;
    std::string valid;
    for (auto s : kAllEncodings) {
        if (!valid.empty())
            valid += ", ";
        valid += to_string(s);
    }
    throw ConfigError("unknown position encoding '" + std::string(name) + "'; valid values: " + valid);
}

bool uses_learnable_table(EncodingStrategy s) {
    return s == EncodingStrategy::LPE || s == EncodingStrategy::LPE_RPE || s == EncodingStrategy::LPE_APE;
}

bool uses_sinusoidal_table(EncodingStrategy s) {
    return s == EncodingStrategy::APE || s == EncodingStrategy::APE_RPE || s == EncodingStrategy::LPE_APE;
}

bool uses_relative_bias(EncodingStrategy s) { return s == EncodingStrategy::RPE; }

bool uses_bias_terms(EncodingStrategy s) { return s == EncodingStrategy::APE_RPE || s == EncodingStrategy::LPE_RPE; }

SinusoidalTable build_sinusoidal(std::size_t length, std::size_t width) {
    if (width == 0 || width % 2 != 0)
        throw ContractError("sinusoidal table width must be even and positive, got " + std::to_string(width));
    if (length == 0)
        throw ContractError("sinusoidal table length must be >= 1");
    Tensor t({length, width});
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < length; ++i)
        for (std::size_t k = 0; k < width / 2; ++k) {
            const double angle =
                static_cast<double>(i) / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(width));
            d[i * width + 2 * k] = std::sin(angle);
            d[i * width + 2 * k + 1] = std::cos(angle);
        }
    return {t};
}

LearnableTable make_learnable_table(std::size_t length, std::size_t width, Rng& rng, double stddev) {
    Tensor t = normal_tensor({length, width}, rng, stddev);
    t.set_requires_grad(true);
    return {t};
}

RelativeBiasParams make_relative_params(EncodingStrategy s, std::size_t width, std::size_t k_clip, Rng& rng,
                                        double stddev) {
    RelativeBiasParams p;
    p.k_clip = k_clip;
    auto table = [&] {
        Tensor t = normal_tensor({2 * k_clip + 1, width}, rng, stddev);
        t.set_requires_grad(true);
        return t;
    };
    if (uses_relative_bias(s)) {
        p.key_bias = table();
        p.value_bias = table();
    }
    if (uses_bias_terms(s)) {
        p.query_term = table();
        p.key_term = table();
        p.value_term = table();
    }
    return p;
}

long clip_distance(long x, long k) { return std::max(-k, std::min(k, x)); }

Tensor apply_absolute(const Tensor& x, const Tensor& table) {
    if (x.rank() != 2 || table.rank() != 2 || x.dim(1) != table.dim(1))
        throw ShapeError("apply_absolute: expected matching [L,d] tensors, got " + shape_str(x.shape()) + " and " +
                         shape_str(table.shape()));
    if (x.dim(0) != table.dim(0))
        throw ShapeError("apply_absolute: sequence length L=" + std::to_string(x.dim(0)) +
                         " does not match table length L=" + std::to_string(table.dim(0)));
    return ops::add(x, table);
}

Tensor apply_adpe(const Tensor& f, const LearnableTable& pl, const SinusoidalTable& ps) {
    return ops::add(apply_absolute(f, pl.table), ps.table);
}

Tensor add_axis_table(const Tensor& x, const Tensor& table, Axis axis) {
    if (x.rank() != 3)
        throw ShapeError("add_axis_table: expected [C,H,W], got " + shape_str(x.shape()));
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t len = axis == Axis::Height ? h : w;
    if (table.shape() != Shape{len, c})
        throw ShapeError("add_axis_table: table " + shape_str(table.shape()) + " does not fit axis length " +
                         std::to_string(len) + " and " + std::to_string(c) + " channels");

    Tensor out(x.shape());
    auto xd = x.data(), td = table.data();
    auto od = out.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t pos = axis == Axis::Height ? i : j;
                const std::size_t idx = (ch * h + i) * w + j;
                od[idx] = xd[idx] + td[pos * c + ch];
            }
    if (wants_grad(out, {&x, &table})) {
        Tape::current()->record([xn = x.node_ptr(), tn = table.node_ptr(), on = out.node_ptr(), c, h, w, axis] {
            if (on->grad.empty())
                return;
            if (xn->requires_grad) {
                auto g = grad_of(*xn);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += on->grad[i];
            }
            if (tn->requires_grad) {
                auto g = grad_of(*tn);
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < h; ++i)
                        for (std::size_t j = 0; j < w; ++j) {
                            const std::size_t pos = axis == Axis::Height ? i : j;
                            g[pos * c + ch] += on->grad[(ch * h + i) * w + j];
                        }
            }
        });
    }
    return out;
}

Tensor rpe_attention_1d(const Tensor& q, const Tensor& k, const Tensor& v, const RelativeBiasParams& params) {
    RelativeTerms terms{.query_bias = params.key_bias, .key_bias = {}, .value_bias = params.value_bias,
                        .k_clip = params.k_clip};
    return sliced_attention(q, k, v, SliceLayout::sequence(q.shape()), terms);
}

Tensor combined_ape_rpe_attention_1d(const Tensor& x, const Tensor& table, const RelativeBiasParams& params,
                                     const Tensor& wq, const Tensor& wk, const Tensor& wv) {
    const Tensor xa = table.defined() ? apply_absolute(x, table) : x;
    auto project = [&](const Tensor& w) { return ops::matmul(xa, ops::permute(w, {1, 0})); };
    RelativeTerms terms{.query_bias = params.query_term, .key_bias = params.key_term,
                        .value_bias = params.value_term, .k_clip = params.k_clip};
    const Tensor q = project(wq);
    return sliced_attention(q, project(wk), project(wv), SliceLayout::sequence(q.shape()), terms);
}

} // namespace haaseg
