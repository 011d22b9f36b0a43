#include "haaseg/metrics.hpp"

#include "haaseg/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace haaseg {

namespace {

void require_binary(std::span<const double> gt) {
    for (double g : gt)
        if (g != 0.0 && g != 1.0)
            throw ContractError("ground truth must be binary, found value " + std::to_string(g));
}

double ratio(std::uint64_t num, std::uint64_t den, bool both_empty) {
    if (den == 0)
        return both_empty ? 100.0 : 0.0;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

ConfusionCounts confusion(std::span<const double> pred_prob, std::span<const double> gt, double threshold) {
    if (pred_prob.size() != gt.size())
        throw ShapeError("confusion: prediction has " + std::to_string(pred_prob.size()) + " pixels, ground truth " +
                         std::to_string(gt.size()));
    require_binary(gt);
    ConfusionCounts c;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool p = pred_prob[i] >= threshold;
        const bool g = gt[i] == 1.0;
        if (p && g)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

ConfusionCounts confusion(const Tensor& pred_prob, const Tensor& gt, double threshold) {
    if (pred_prob.shape() != gt.shape())
        throw ShapeError("confusion: shapes " + shape_str(pred_prob.shape()) + " and " + shape_str(gt.shape()));
    return confusion(pred_prob.data(), gt.data(), threshold);
}

double dice(const ConfusionCounts& c) {
    const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
    return ratio(2 * c.tp, den, true);
}

double jaccard(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn, true); }

double sensitivity(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn, c.fp == 0); }

double specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp, c.fn == 0); }

double precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp, c.fn == 0); }

double weighted_f(const ConfusionCounts& c) {
    if (c.tp + c.fp + c.fn == 0)
        return 100.0;
    const double p = precision(c) / 100.0, r = sensitivity(c) / 100.0;
    const double den = kFBetaSquared * p + r;
    if (den == 0.0)
        return 0.0;
    return 100.0 * (1.0 + kFBetaSquared) * p * r / den;
}

double or_score(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn, true); }

double mae(std::span<const double> pred_prob, std::span<const double> gt) {
    if (pred_prob.size() != gt.size() || gt.empty())
        throw ShapeError("mae: prediction and ground truth sizes differ or are empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        acc += std::abs(pred_prob[i] - gt[i]);
    return 100.0 * acc / static_cast<double>(gt.size());
}

std::optional<double> auc(std::span<const double> scores, std::span<const double> gt) {
    if (scores.size() != gt.size())
        throw ShapeError("auc: score and ground truth sizes differ");
    require_binary(gt);
    const std::size_t n = gt.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of midranks (1-based) over positives.
    double pos_rank_sum = 0.0;
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]])
            ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (gt[order[k]] == 1.0) {
                pos_rank_sum += midrank;
                ++pos;
            }
        i = j;
    }
    const std::uint64_t neg = n - pos;
    if (pos == 0 || neg == 0)
        return std::nullopt;
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    return 100.0 * (pos_rank_sum - p * (p + 1) / 2.0) / (p * q);
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {"auc",     "mae",         "wf",          "or_score",
                                                   "dice",    "jaccard",     "sensitivity", "specificity",
                                                   "params_m", "macs_g"};
    return names;
}

std::vector<double> metric_values(const MetricReport& r) {
    return {r.auc, r.mae, r.wf, r.or_score, r.dice, r.jaccard, r.sensitivity, r.specificity, r.params_m, r.macs_g};
}

MetricReport evaluate_predictions(std::span<const Tensor> preds, std::span<const Tensor> gts) {
    if (preds.empty())
        throw ConfigError("evaluation needs at least one sample");
    if (preds.size() != gts.size())
        throw ShapeError("evaluation: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(gts.size()) + " ground-truth masks");
    MetricReport r;
    double auc_sum = 0.0;
    std::size_t auc_n = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto c = confusion(preds[i], gts[i]);
        r.dice += dice(c);
        r.jaccard += jaccard(c);
        r.sensitivity += sensitivity(c);
        r.specificity += specificity(c);
        r.wf += weighted_f(c);
        r.or_score += or_score(c);
        r.mae += mae(preds[i].data(), gts[i].data());
        if (auto a = auc(preds[i].data(), gts[i].data())) {
            auc_sum += *a;
            ++auc_n;
        } else {
            ++r.auc_skipped;
        }
    }
    const double n = static_cast<double>(preds.size());
    r.images = preds.size();
    for (double* f : {&r.dice, &r.jaccard, &r.sensitivity, &r.specificity, &r.wf, &r.or_score, &r.mae})
        *f /= n;
    r.auc = auc_n ? auc_sum / static_cast<double>(auc_n) : std::nan("");
    return r;
}

std::string report_csv_header() {
    std::string s;
    for (const auto& n : metric_names())
        s += (s.empty() ? "" : ",") + n;
    return s;
}

std::string report_csv_row(const MetricReport& r) {
    std::string s;
    char buf[64];
    for (double v : metric_values(r)) {
        if (std::isnan(v))
            std::snprintf(buf, sizeof buf, "nan");
        else
            std::snprintf(buf, sizeof buf, "%.6f", v);
        s += (s.empty() ? "" : ",") + std::string(buf);
    }
    return s;
}

std::string report_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    const auto values = metric_values(r);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i]))
            j[metric_names()[i]] = nullptr;
        else
            j[metric_names()[i]] = values[i];
    }
    j["images"] = r.images;
    j["auc_skipped"] = r.auc_skipped;
    return j.dump(2);
}

} // namespace haaseg
