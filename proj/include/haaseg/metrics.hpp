#pragma once

// Segmentation indicators. Rates are percentages in [0, 100]; predictions are
// binarized with `>= threshold` where a metric needs hard masks.

#include "haaseg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace haaseg {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(std::span<const double> pred_prob, std::span<const double> gt, double threshold = 0.5);
ConfusionCounts confusion(const Tensor& pred_prob, const Tensor& gt, double threshold = 0.5);

// Empty denominators give 100 when prediction and ground truth agree on the
// empty set, 0 otherwise.
double dice(const ConfusionCounts& c);
double jaccard(const ConfusionCounts& c);
double sensitivity(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);

inline constexpr double kFBetaSquared = 0.3;

/// F-beta with beta^2 = 0.3 on binarized masks.
double weighted_f(const ConfusionCounts& c);
/// Overlap ratio, intersection over union.
double or_score(const ConfusionCounts& c);

/// 100 * mean |pred - gt| on the soft map.
double mae(std::span<const double> pred_prob, std::span<const double> gt);

/// Pixelwise ROC-AUC via the Mann-Whitney statistic, ties counted 1/2.
/// Empty when gt lacks either class.
std::optional<double> auc(std::span<const double> scores, std::span<const double> gt);

struct MetricReport {
    double auc = 0, mae = 0, wf = 0, or_score = 0, dice = 0, jaccard = 0, sensitivity = 0, specificity = 0;
    double params_m = 0; // millions of parameters
    double macs_g = 0;   // giga multiply-accumulates per forward
    std::size_t images = 0;
    std::size_t auc_skipped = 0; // images whose gt has a single class
};

/// Field order used by CSV and structured output.
const std::vector<std::string>& metric_names();
std::vector<double> metric_values(const MetricReport& r);

/// Macro average over images. Throws ConfigError on an empty list.
MetricReport evaluate_predictions(std::span<const Tensor> preds, std::span<const Tensor> gts);

std::string report_csv_header();
std::string report_csv_row(const MetricReport& r);
/// JSON object keyed by metric name; a missing AUC is null.
std::string report_json(const MetricReport& r);

} // namespace haaseg
