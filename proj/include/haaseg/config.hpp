#pragma once

// Run configuration shared by every CLI command, stored as JSON:
//
//   { "seed": 0, "net": {...}, "train": {...}, "data": {...},
//     "ablate": {...}, "gradcheck": {...} }
//
// Every field is optional on input and falls back to its default; unknown
// keys are rejected. The serialized form always lists every field.

#include "haaseg/network.hpp"
#include "haaseg/position_encoding.hpp"
#include "haaseg/synth.hpp"
#include "haaseg/training.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace haaseg {

struct AblateConfig {
    std::vector<EncodingStrategy> variants{EncodingStrategy::None, EncodingStrategy::LPE, EncodingStrategy::APE,
                                           EncodingStrategy::LPE_APE};
    std::size_t seeds = 3;
};

struct GradcheckConfig {
    std::size_t seeds = 3;
    double eps = 1e-5;
    double tolerance = 1e-4;
    std::size_t image_size = 16;            // full-network check
    std::size_t max_coords_per_input = 16;  // 0 checks every coordinate
};

struct RunConfig {
    std::uint64_t seed = 0; // drives net.seed, train.seed and data.seed
    NetConfig net;
    TrainConfig train;
    SynthConfig data;
    SplitFractions split;
    AblateConfig ablate;
    GradcheckConfig gradcheck;
};

/// Copies `seed` into the per-module seeds and checks every section.
void finalize(RunConfig& cfg);

/// Throws ConfigError naming the offending key, e.g. "train.lr".
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

} // namespace haaseg
