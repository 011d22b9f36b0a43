#include "haaseg/axial_attention.hpp"
#include "haaseg/errors.hpp"
#include "haaseg/gradcheck.hpp"
#include "haaseg/ops.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace haaseg;
using testing::max_abs_diff;

namespace {

// Attention over an explicit list of flat positions of a [C,H,W] map.
Tensor brute_group_attention(const Tensor& x, const AttentionParams& p,
                             const std::vector<std::vector<std::size_t>>& groups) {
    const std::size_t c_in = x.dim(0), hw = x.dim(1) * x.dim(2), d = p.wq.dim(0);
    Tensor out({d, x.dim(1), x.dim(2)});
    auto o = out.mutable_data();
    auto project = [&](const Tensor& w, std::size_t pos, std::size_t row) {
        double s = 0;
        for (std::size_t c = 0; c < c_in; ++c)
            s += w.at({row, c}) * x.data()[c * hw + pos];
        return s;
    };
    for (const auto& g : groups)
        for (std::size_t a : g) {
            std::vector<double> logits;
            for (std::size_t b : g) {
                double l = 0;
                for (std::size_t r = 0; r < d; ++r)
                    l += project(p.wq, a, r) * project(p.wk, b, r);
                logits.push_back(l);
            }
            const double m = *std::max_element(logits.begin(), logits.end());
            double z = 0;
            for (double& l : logits)
                z += l = std::exp(l - m);
            for (std::size_t r = 0; r < d; ++r) {
                double acc = 0;
                for (std::size_t t = 0; t < g.size(); ++t)
                    acc += logits[t] / z * project(p.wv, g[t], r);
                o[r * hw + a] = acc;
            }
        }
    return out;
}

std::vector<std::vector<std::size_t>> all_positions(std::size_t h, std::size_t w) {
    std::vector<std::size_t> g(h * w);
    std::iota(g.begin(), g.end(), 0);
    return {g};
}

std::vector<std::vector<std::size_t>> columns(std::size_t h, std::size_t w) {
    std::vector<std::vector<std::size_t>> out(w);
    for (std::size_t j = 0; j < w; ++j)
        for (std::size_t i = 0; i < h; ++i)
            out[j].push_back(i * w + j);
    return out;
}

Tensor permute_axis(const Tensor& x, const std::vector<std::size_t>& perm, Axis axis) {
    Tensor out(x.shape());
    auto o = out.mutable_data();
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                o[(k * h + i) * w + j] = axis == Axis::Height ? x.at({k, perm[i], j}) : x.at({k, i, perm[j]});
    return out;
}

} // namespace

TEST_SUITE("axial_attention") {

TEST_CASE("full self-attention") {
    Rng rng(1);
    const AttentionParams p = make_attention_params(3, 2, rng);
    SUBCASE("single position returns the value projection") {
        const Tensor x = normal_tensor({3, 1, 1}, rng);
        const Tensor y = full_self_attention(x, p);
        const Tensor v = ops::project_channels(x, p.wv);
        CHECK(max_abs_diff(y, v) < 1e-15);
    }
    SUBCASE("uniform input gives uniform output") {
        const Tensor y = full_self_attention(Tensor({3, 3, 4}, 0.7), p);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < 12; ++k)
                CHECK(y.data()[c * 12 + k] == doctest::Approx(y.data()[c * 12]).epsilon(1e-14));
    }
    SUBCASE("2x2 grid matches enumeration") {
        const Tensor x = normal_tensor({3, 2, 2}, rng);
        CHECK(max_abs_diff(full_self_attention(x, p), brute_group_attention(x, p, all_positions(2, 2))) < 1e-13);
    }
}

TEST_CASE("axial attention against references") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(seed);
        SUBCASE("height axis with W = 1 equals full attention") {
            const auto layer = make_axial_layer(4, 7, Axis::Height, EncodingStrategy::None, 8, rng);
            const Tensor x = normal_tensor({4, 7, 1}, rng);
            CHECK(max_abs_diff(axial_attention(x, layer), full_self_attention(x, layer.proj)) < 1e-10);
        }
        SUBCASE("width axis with H = 1 equals full attention") {
            const auto layer = make_axial_layer(4, 6, Axis::Width, EncodingStrategy::None, 8, rng);
            const Tensor x = normal_tensor({4, 1, 6}, rng);
            CHECK(max_abs_diff(axial_attention(x, layer), full_self_attention(x, layer.proj)) < 1e-10);
        }
        SUBCASE("per-column enumeration") {
            const auto layer = make_axial_layer(1, 3, Axis::Height, EncodingStrategy::None, 8, rng);
            const Tensor x = normal_tensor({1, 3, 2}, rng);
            CHECK(max_abs_diff(axial_attention(x, layer), brute_group_attention(x, layer.proj, columns(3, 2))) <
                  1e-13);
        }
    }
}

TEST_CASE("axial attention rejects a mismatched table length") {
    Rng rng(2);
    const auto layer = make_axial_layer(4, 5, Axis::Height, EncodingStrategy::APE, 8, rng);
    CHECK_THROWS_AS(axial_attention(normal_tensor({4, 6, 3}, rng), layer), ShapeError);
}

TEST_CASE("permutation equivariance") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(100 + seed);
        const std::size_t c = 4, h = 6, w = 5;
        for (Axis axis : {Axis::Height, Axis::Width}) {
            const std::size_t len = axis == Axis::Height ? h : w;
            std::vector<std::size_t> perm(len);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng.engine());
            if (std::is_sorted(perm.begin(), perm.end()))
                std::swap(perm[0], perm[1]);
            const Tensor x = normal_tensor({c, h, w}, rng);
            const Tensor xp = permute_axis(x, perm, axis);

            const auto none = make_axial_layer(c, len, axis, EncodingStrategy::None, 8, rng);
            CHECK(max_abs_diff(axial_attention(xp, none), permute_axis(axial_attention(x, none), perm, axis)) < 1e-12);

            for (auto s : {EncodingStrategy::APE, EncodingStrategy::LPE_APE}) {
                const auto layer = make_axial_layer(c, len, axis, s, 8, rng);
                CHECK(max_abs_diff(axial_attention(xp, layer), permute_axis(axial_attention(x, layer), perm, axis)) >
                      1e-3);
            }
        }
    }
}

TEST_CASE("hybrid block") {
    Rng rng(7);
    HybridBlockConfig cfg;
    cfg.channels = 4;
    cfg.height = cfg.width = 6;
    SUBCASE("closed gates give the pooled path exactly") {
        for (std::size_t stride : {1u, 2u})
            for (auto s : kAllEncodings) {
                cfg.pool_stride = stride;
                cfg.strategy = s;
                HybridAxialBlock b = make_hybrid_block(cfg, rng);
                b.gamma1.mutable_data()[0] = 0.0;
                b.gamma2.mutable_data()[0] = 0.0;
                const Tensor x = normal_tensor({4, 6, 6}, rng);
                const Tensor want = gate_pool(gate_pool(x, stride), 1);
                CHECK(testing::bit_equal(hybrid_block_forward(x, b), want));
            }
    }
    SUBCASE("zero input with zero learnable table stays finite") {
        cfg.strategy = EncodingStrategy::LPE_APE;
        HybridAxialBlock b = make_hybrid_block(cfg, rng);
        for (auto* t : {&b.height_attn.learnable.table, &b.width_attn.learnable.table})
            for (double& v : t->mutable_data())
                v = 0.0;
        for (double v : testing::values(hybrid_block_forward(Tensor::zeros({4, 6, 6}), b)))
            CHECK(std::isfinite(v));
    }
    SUBCASE("gradient through the block") {
        cfg.strategy = EncodingStrategy::LPE_APE;
        const HybridAxialBlock b = make_hybrid_block(cfg, rng);
        const Tensor r = normal_tensor({4, 6, 6}, rng);
        const auto res = finite_diff_check(
            [&](const Tensor& x) { return ops::sum(ops::mul(hybrid_block_forward(x, b), r)); },
            normal_tensor({4, 6, 6}, rng));
        CHECK(res.max_rel_error < 1e-4);
    }
    SUBCASE("stride 2 halves the extent") {
        cfg.pool_stride = 2;
        const HybridAxialBlock b = make_hybrid_block(cfg, rng);
        CHECK(hybrid_block_forward(normal_tensor({4, 6, 6}, rng), b).shape() == Shape{4, 3, 3});
    }
}

TEST_CASE("mac_count closed forms") {
    const MacCount m = mac_count(8, 8, 4);
    CHECK(m.full_attention_macs == 16384);
    CHECK(m.height_axis_macs == 2048);
    CHECK(m.width_axis_macs == 2048);
    const MacCount one = mac_count(1, 1, 5);
    CHECK(one.full_attention_macs == 5);
    CHECK(one.height_axis_macs == 5);
    CHECK(one.width_axis_macs == 5);

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto h = static_cast<std::uint64_t>(rng.integer(1, 64));
        const auto w = static_cast<std::uint64_t>(rng.integer(1, 64));
        const auto d = static_cast<std::uint64_t>(rng.integer(1, 128));
        const MacCount a = mac_count(h, w, d), b = mac_count(h, 2 * w, d);
        CHECK(b.height_axis_macs == 2 * a.height_axis_macs);
        CHECK(b.full_attention_macs == 4 * a.full_attention_macs);
    }
}

} // TEST_SUITE
