#include "haaseg/errors.hpp"
#include "haaseg/gradcheck.hpp"
#include "haaseg/ops.hpp"
#include "haaseg/training.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace haaseg;

namespace {

NetConfig tiny_net() {
    NetConfig c;
    c.stem_channels = {8};
    c.stem_strides = {1};
    c.encoder_channels = {8};
    c.encoder_strides = {1};
    c.decoder_channels = {8, 8, 8, 8, 8};
    c.image_size = 16;
    c.k_clip = 4;
    return c;
}

SynthConfig tiny_data(std::size_t n) {
    SynthConfig s;
    s.image_size = 16;
    s.n_samples = n;
    return s;
}

} // namespace

TEST_SUITE("training") {

TEST_CASE("bce values") {
    const Tensor g({1, 2, 2}, {1, 0, 0, 1});
    CHECK(bce_loss(Tensor({1, 2, 2}, 0.5), g).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::abs(bce_loss(Tensor({1, 2, 2}, 0.5), g).item() - std::log(2.0)) < 1e-12);
    CHECK(bce_loss(Tensor({1}, 0.25), Tensor({1}, 1.0)).item() == doctest::Approx(-std::log(0.25)).epsilon(1e-15));
    CHECK(bce_loss(g, g).item() < 1e-6);
    CHECK(std::isfinite(bce_loss(Tensor({1}, 0.0), Tensor({1}, 1.0)).item()));
    CHECK_THROWS_AS(bce_loss(Tensor({2}, 0.5), Tensor({2}, {0.0, 0.3})), ContractError);
    CHECK_THROWS_AS(bce_loss(Tensor({2}, 0.5), Tensor({3}, 0.0)), ShapeError);
}

TEST_CASE("bce gradient") {
    Rng rng(1);
    const Tensor g = testing::random_mask({1, 4, 4}, rng);
    Tensor y = uniform_tensor({1, 4, 4}, rng, 0.05, 0.95);
    y.set_requires_grad(true);
    {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(bce_loss(y, g));
    }
    for (std::size_t i = 0; i < 16; ++i) {
        const double yi = y.data()[i], gi = g.data()[i];
        CHECK(y.grad()[i] == doctest::Approx((yi - gi) / (yi * (1 - yi)) / 16.0).epsilon(1e-12));
    }
    const auto res = finite_diff_check([&](const Tensor& p) { return bce_loss(p, g); },
                                       uniform_tensor({1, 4, 4}, rng, 0.05, 0.95));
    CHECK(res.max_rel_error < 1e-7);
}

TEST_CASE("adam") {
    TrainConfig cfg;
    SUBCASE("zero gradient without decay leaves parameters alone") {
        cfg.weight_decay = 0.0;
        Tensor p({3}, {1.0, -2.0, 0.5});
        p.set_requires_grad(true);
        p.zero_grad();
        const ParamList params{{"p", p}};
        AdamState st = make_adam_state(params);
        adam_step(params, st, cfg);
        CHECK(p.data()[0] == 1.0);
        CHECK(p.data()[1] == -2.0);
        CHECK(p.data()[2] == 0.5);
    }
    SUBCASE("first step moves by lr against the gradient sign") {
        cfg.weight_decay = 0.0;
        Tensor p({3}, 0.0);
        p.set_requires_grad(true);
        auto g = p.mutable_grad();
        g[0] = 0.7;
        g[1] = -3.0;
        g[2] = 1e-3;
        const ParamList params{{"p", p}};
        AdamState st = make_adam_state(params);
        adam_step(params, st, cfg);
        CHECK(p.data()[0] == doctest::Approx(-cfg.lr).epsilon(1e-6));
        CHECK(p.data()[1] == doctest::Approx(cfg.lr).epsilon(1e-6));
        CHECK(p.data()[2] == doctest::Approx(-cfg.lr).epsilon(1e-4));
    }
    SUBCASE("matches a scalar reference over several steps") {
        cfg.weight_decay = 0.01;
        Tensor p({2}, {0.3, -1.1});
        p.set_requires_grad(true);
        const ParamList params{{"p", p}};
        AdamState st = make_adam_state(params);
        double ref[2] = {0.3, -1.1}, m[2] = {0, 0}, v[2] = {0, 0};
        Rng rng(2);
        for (int t = 1; t <= 5; ++t) {
            auto g = p.mutable_grad();
            for (int i = 0; i < 2; ++i) {
                g[i] = rng.normal();
                ref[i] *= 1 - cfg.lr * cfg.weight_decay;
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
                ref[i] -= cfg.lr * mh / (std::sqrt(vh) + 1e-8);
            }
            adam_step(params, st, cfg);
            CHECK(p.data()[0] == doctest::Approx(ref[0]).epsilon(1e-13));
            CHECK(p.data()[1] == doctest::Approx(ref[1]).epsilon(1e-13));
        }
    }
    SUBCASE("state mismatch") {
        const ParamList a{{"a", Tensor({2})}};
        const ParamList b{{"a", Tensor({3})}};
        AdamState st = make_adam_state(a);
        CHECK_THROWS_AS(adam_step(b, st, cfg), ContractError);
    }
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.lr = -1;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.beta1 = 1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.clamp_eps = 0.6;
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("fit") {
    const auto data = generate_dataset(tiny_data(6));
    TrainConfig cfg;
    cfg.epochs = 2;

    SUBCASE("deterministic") {
        HAANet a = build_network(tiny_net()), b = build_network(tiny_net());
        const FitResult ra = fit(a, data, {}, cfg), rb = fit(b, data, {}, cfg);
        CHECK(ra.step_losses == rb.step_losses);
        const auto pa = a.parameters(), pb = b.parameters();
        for (std::size_t i = 0; i < pa.size(); ++i)
            CHECK(testing::bit_equal(pa[i].tensor, pb[i].tensor));
        CHECK(ra.step_losses.size() == 12);
        for (double l : ra.step_losses)
            CHECK(std::isfinite(l));
    }
    SUBCASE("zero learning rate changes nothing") {
        cfg.lr = 0.0;
        HAANet net = build_network(tiny_net());
        const auto before = net.parameters()[0].tensor.clone();
        const std::vector<SegSample> one{data[0]};
        const FitResult r = fit(net, one, {}, cfg);
        CHECK(testing::bit_equal(net.parameters()[0].tensor, before));
        CHECK(r.step_losses[0] == r.step_losses[1]);
    }
    SUBCASE("epoch log") {
        HAANet net = build_network(tiny_net());
        std::size_t calls = 0;
        const FitResult r = fit(net, data, {data[0]}, cfg, [&](const EpochLog&) { ++calls; });
        CHECK(calls == 2);
        REQUIRE(r.epochs.size() == 2);
        CHECK(r.epochs[1].val_dice.has_value());
        const std::string csv = training_log_csv(r.epochs);
        CHECK(csv.rfind("epoch,mean_loss,val_dice,gamma1_mean,gamma2_mean\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    }
    SUBCASE("empty training set") {
        HAANet net = build_network(tiny_net());
        CHECK_THROWS_AS(fit(net, {}, {}, cfg), ConfigError);
    }
}

TEST_CASE("single-sample overfit") {
    const auto data = generate_dataset(tiny_data(1));
    TrainConfig cfg;
    cfg.epochs = 200;
    HAANet net = build_network(tiny_net());
    const FitResult r = fit(net, data, {}, cfg);
    CHECK(r.step_losses.back() < 0.05);
    CHECK(evaluate_dataset(net, data).dice > 95.0);
}

} // TEST_SUITE
