#pragma once

// Implementations behind the CLI subcommands. Each returns a process exit
// code: 0 success, 3 when an acceptance check fails. Configuration problems
// surface as ConfigError and runtime failures as other exceptions; the CLI
// maps those to exit codes 1 and 2.

#include "haaseg/config.hpp"
#include "haaseg/gradcheck_suite.hpp"
#include "haaseg/metrics.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace haaseg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitCheckFailed = 3;

/// HAASEG_THREADS when `requested` is 0; at least 1.
std::size_t resolve_threads(std::size_t requested);

struct TrainOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> data_dir; // train split of a dataset directory; synthetic otherwise
};

/// Writes checkpoint.bin, train_log.csv and resolved_config.json to out_dir.
int cmd_train(const RunConfig& cfg, const TrainOptions& opts, std::ostream& log);

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path data_dir;
    std::string split = "test"; // manifest split name, or "all"
    std::optional<std::filesystem::path> out_dir;  // metrics.csv and metrics.json
    std::optional<std::filesystem::path> pred_dir; // predicted masks as PGM
};

int cmd_eval(const RunConfig& cfg, const EvalOptions& opts, std::ostream& out);

/// Falls back to resolved_config.json beside the checkpoint, then defaults.
RunConfig config_for_checkpoint(const std::filesystem::path& checkpoint);

struct AblationRow {
    EncodingStrategy variant = EncodingStrategy::None;
    std::uint64_t seed = 0;
    MetricReport report;
};

struct AblationResult {
    std::vector<EncodingStrategy> variants;
    std::size_t seeds = 0;
    std::vector<AblationRow> rows; // ordered by (variant, seed)

    /// Mean and sample standard deviation of one metric over a variant's seeds.
    std::pair<double, double> summary(EncodingStrategy variant, std::size_t metric_index) const;
};

/// Trains every (variant, seed) cell on one shared dataset. Cells run on up
/// to `threads` workers; the result does not depend on the thread count.
AblationResult run_ablation(const RunConfig& cfg, std::size_t threads, std::ostream* progress = nullptr);

std::string ablation_csv(const AblationResult& r);
std::string ablation_json(const AblationResult& r);

struct AblationCheck {
    std::string description;
    bool passed = false;
};

/// Directional checks over whichever of None, APE, LPE and LPE+APE are present.
std::vector<AblationCheck> check_ablation(const AblationResult& r);

struct AblateOptions {
    std::filesystem::path out_dir; // ablation.csv and ablation.json
    std::size_t threads = 1;
    bool check = false; // exit 3 when a directional check fails
};

int cmd_ablate(const RunConfig& cfg, const AblateOptions& opts, std::ostream& out);

/// `extra` components are appended to the default suite.
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, const std::vector<GradcheckComponent>& extra = {});

int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out);

} // namespace haaseg
