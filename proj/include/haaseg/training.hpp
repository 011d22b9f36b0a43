#pragma once

// Pixelwise BCE loss, Adam with decoupled weight decay, and the epoch loop.

#include "haaseg/axial_attention.hpp"
#include "haaseg/metrics.hpp"
#include "haaseg/network.hpp"
#include "haaseg/synth.hpp"
#include "haaseg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace haaseg {

struct TrainConfig {
    double lr = 0.003;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::size_t epochs = 15;
    std::uint64_t seed = 0;
    double clamp_eps = 1e-7;
};

void validate(const TrainConfig& cfg);

/// -(1/n) sum[G log Y + (1-G) log(1-Y)] with Y clamped to [eps, 1-eps].
/// Returns a [1] tensor. Throws ContractError if G is not binary.
Tensor bce_loss(const Tensor& y, const Tensor& g, double clamp_eps = 1e-7);

struct AdamState {
    std::vector<Tensor> m, v;
    std::uint64_t t = 0;
};

AdamState make_adam_state(const ParamList& params);

/// One update from the gradients stored on `params` (absent gradients count
/// as zero). Throws ContractError when the state does not match the params.
void adam_step(const ParamList& params, AdamState& state, const TrainConfig& cfg);

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0;
    std::optional<double> val_dice;
    double gamma1_mean = 0, gamma2_mean = 0;
};

struct FitResult {
    std::vector<EpochLog> epochs;
    std::vector<double> step_losses;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Batch size 1, seeded shuffle per epoch. Throws ConfigError for an empty
/// training set.
FitResult fit(HAANet& net, const std::vector<SegSample>& train, const std::vector<SegSample>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

std::string training_log_csv(const std::vector<EpochLog>& log);

/// Forward pass without recording; returns the [1, S, S] probability map.
Tensor predict(const HAANet& net, const Tensor& image);

/// Macro-averaged report over samples, with parameter and MAC counts filled
/// in from the network. Throws ConfigError for an empty list.
MetricReport evaluate_dataset(const HAANet& net, const std::vector<SegSample>& samples);

} // namespace haaseg
