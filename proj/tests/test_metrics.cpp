#include "haaseg/errors.hpp"
#include "haaseg/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <vector>

using namespace haaseg;

namespace {

struct Counts {
    double tp = 0, fp = 0, tn = 0, fn = 0;
};

Counts count(const Tensor& p, const Tensor& g) {
    Counts c;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const bool pp = p.data()[i] >= 0.5, gg = g.data()[i] >= 0.5;
        (pp ? (gg ? c.tp : c.fp) : (gg ? c.fn : c.tn)) += 1;
    }
    return c;
}

double brute_auc(std::span<const double> s, std::span<const double> g) {
    double won = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (g[i] == 1.0 && g[j] == 0.0) {
                pairs += 1;
                won += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
    return 100.0 * won / pairs;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion counts") {
    const Tensor g({4}, {1, 0, 1, 0});
    const auto c = confusion(Tensor({4}, {1, 1, 0, 0}), g);
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 1);
    const auto same = confusion(g, g);
    CHECK(same.fp + same.fn == 0);
    const auto inv = confusion(Tensor({4}, {0, 1, 0, 1}), g);
    CHECK(inv.tp + inv.tn == 0);
    CHECK_THROWS_AS(confusion(Tensor({3}), g), ShapeError);
}

TEST_CASE("overlap rates") {
    const ConfusionCounts perfect{5, 0, 7, 0};
    CHECK(dice(perfect) == 100.0);
    CHECK(jaccard(perfect) == 100.0);
    CHECK(sensitivity(perfect) == 100.0);
    CHECK(specificity(perfect) == 100.0);
    const ConfusionCounts hand{2, 2, 10, 2};
    CHECK(dice(hand) == doctest::Approx(50.0));
    CHECK(jaccard(hand) == doctest::Approx(100.0 / 3.0));
    const double d = dice(hand) / 100.0;
    CHECK(jaccard(hand) / 100.0 == doctest::Approx(d / (2 - d)).epsilon(1e-14));
    const ConfusionCounts disjoint{0, 3, 5, 4};
    CHECK(dice(disjoint) == 0.0);
    CHECK(jaccard(disjoint) == 0.0);
    const ConfusionCounts empty{0, 0, 9, 0};
    CHECK(dice(empty) == 100.0);
}

TEST_CASE("weighted F and overlap ratio") {
    const ConfusionCounts perfect{4, 0, 4, 0};
    CHECK(weighted_f(perfect) == 100.0);
    CHECK(or_score(perfect) == 100.0);
    // precision 0.5, recall 1
    const ConfusionCounts half{2, 2, 4, 0};
    const double p = 0.5, r = 1.0, b2 = 0.3;
    CHECK(weighted_f(half) == doctest::Approx(100.0 * (1 + b2) * p * r / (b2 * p + r)).epsilon(1e-14));
    CHECK(or_score(half) == doctest::Approx(jaccard(half)));
    const ConfusionCounts disjoint{0, 3, 5, 4};
    CHECK(weighted_f(disjoint) == 0.0);
    CHECK(or_score(disjoint) == 0.0);
}

TEST_CASE("mae") {
    const std::vector<double> g{0, 1, 1, 0};
    CHECK(mae(g, g) == 0.0);
    const std::vector<double> half(4, 0.5);
    CHECK(mae(half, g) == doctest::Approx(50.0));
    const std::vector<double> p{0.2, 0.9}, gt{0, 1};
    CHECK(mae(p, gt) == doctest::Approx(15.0));
}

TEST_CASE("auc") {
    const std::vector<double> g{1, 1, 0, 0};
    CHECK(*auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, g) == 100.0);
    CHECK(*auc(std::vector<double>(4, 0.3), g) == 50.0);
    CHECK(*auc(std::vector<double>{0.9, 0.4, 0.6, 0.1}, g) == doctest::Approx(75.0));
    CHECK_FALSE(auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}).has_value());
}

TEST_CASE("random mask pairs against brute force") {
    Rng rng(11);
    std::vector<Tensor> preds, gts;
    double sums[6] = {};
    double auc_sum = 0;
    std::size_t auc_n = 0;
    for (int n = 0; n < 1000; ++n) {
        const Tensor g = testing::random_mask({1, 16, 16}, rng, rng.uniform(0.05, 0.6));
        Tensor p(Shape{1, 16, 16});
        for (std::size_t i = 0; i < p.numel(); ++i)
            p.mutable_data()[i] = std::floor(rng.uniform() * 20.0) / 19.0 * 0.98 + 0.01;

        const ConfusionCounts cc = confusion(p, g);
        const double D = dice(cc) / 100.0, J = jaccard(cc) / 100.0;
        CHECK(std::abs(J - D / (2.0 - D)) < 1e-12);

        const Counts c = count(p, g);
        sums[0] += 100.0 * 2 * c.tp / (2 * c.tp + c.fp + c.fn);
        sums[1] += 100.0 * c.tp / (c.tp + c.fp + c.fn);
        sums[2] += 100.0 * c.tp / (c.tp + c.fn);
        sums[3] += 100.0 * c.tn / (c.tn + c.fp);
        double m = 0;
        for (std::size_t i = 0; i < p.numel(); ++i)
            m += std::abs(p.data()[i] - g.data()[i]);
        sums[4] += 100.0 * m / static_cast<double>(p.numel());
        const double want_auc = brute_auc(p.data(), g.data());
        CHECK(std::abs(*auc(p.data(), g.data()) - want_auc) < 1e-9);
        auc_sum += want_auc;
        ++auc_n;
        preds.push_back(p);
        gts.push_back(g);
    }
    const MetricReport r = evaluate_predictions(preds, gts);
    CHECK(std::abs(r.dice - sums[0] / 1000) < 1e-9);
    CHECK(std::abs(r.jaccard - sums[1] / 1000) < 1e-9);
    CHECK(std::abs(r.sensitivity - sums[2] / 1000) < 1e-9);
    CHECK(std::abs(r.specificity - sums[3] / 1000) < 1e-9);
    CHECK(std::abs(r.mae - sums[4] / 1000) < 1e-9);
    CHECK(std::abs(r.auc - auc_sum / static_cast<double>(auc_n)) < 1e-9);
    CHECK(r.images == 1000);
}

TEST_CASE("report aggregation") {
    Rng rng(3);
    const Tensor g = testing::random_mask({1, 8, 8}, rng);
    const std::vector<Tensor> one{g}, gts{g};
    const MetricReport perfect = evaluate_predictions(one, gts);
    CHECK(perfect.dice == 100.0);
    CHECK(perfect.jaccard == 100.0);
    CHECK(perfect.sensitivity == 100.0);
    CHECK(perfect.specificity == 100.0);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.auc == 100.0);

    const Tensor p = uniform_tensor({1, 8, 8}, rng, 0.0, 1.0);
    const std::vector<Tensor> single{p}, double_list{p, p}, g1{g}, g2{g, g};
    const auto a = metric_values(evaluate_predictions(single, g1));
    const auto b = metric_values(evaluate_predictions(double_list, g2));
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));

    CHECK_THROWS_AS(evaluate_predictions(std::vector<Tensor>{}, std::vector<Tensor>{}), ConfigError);

    const std::vector<Tensor> blank{Tensor::zeros({1, 4, 4})};
    const MetricReport skipped = evaluate_predictions(blank, blank);
    CHECK(skipped.auc_skipped == 1);
    CHECK(std::isnan(skipped.auc));
    const auto j = nlohmann::json::parse(report_json(skipped));
    CHECK(j["auc"].is_null());
    CHECK(j["dice"].get<double>() == 100.0);
    CHECK(report_csv_header().rfind("auc,mae,wf,or_score,dice", 0) == 0);
}

} // TEST_SUITE
