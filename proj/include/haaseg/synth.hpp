#pragma once

// Deterministic synthetic lesion-segmentation data.
//
// Each image is a low-frequency textured background with 1-3 soft-edged
// elliptical lesions plus Gaussian noise. Lesion centres are confined to
// lesion zones; distractor blobs with identical appearance sit in distractor
// zones and are not part of the mask, so telling them apart needs position
// information.

#include "haaseg/tensor.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace haaseg {

struct SynthConfig {
    std::size_t image_size = 32;
    std::size_t n_samples = 500;
    std::array<std::size_t, 2> lesion_count_range{1, 3};
    std::array<double, 2> lesion_radius_range{0.1, 0.3}; // fraction of image_size
    std::array<std::size_t, 2> distractor_count_range{1, 2};
    // Blob centres are drawn from a uniformly chosen zone, then uniformly
    // inside it. Zones are [x0, x1, y0, y1] in fractions of image_size
    // (x = column, y = row).
    std::vector<std::array<double, 4>> lesion_zones{{0.15, 0.4, 0.15, 0.85}};
    std::vector<std::array<double, 4>> distractor_zones{{0.6, 0.85, 0.15, 0.85}};
    double lesion_contrast = 0.35;
    double edge_softness = 0.15; // width of the soft edge, in units of the blob radius
    double noise_std = 0.1;
    double background_texture_scale = 0.1;
    std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct SegSample {
    Tensor image; // [1, S, S] in [0, 1]
    Tensor mask;  // [1, S, S] in {0, 1}
    std::string id;
};

/// Fully determined by (seed, idx); the generation order never matters.
SegSample generate_sample(std::uint64_t seed, std::size_t idx, const SynthConfig& cfg);
std::vector<SegSample> generate_dataset(const SynthConfig& cfg);

struct SplitFractions {
    double train = 0.8, val = 0.0, test = 0.2;
};

struct DatasetSplit {
    std::vector<SegSample> train, val, test;
};

/// Seeded shuffle, then contiguous cuts. Throws ConfigError for negative
/// fractions or fractions that do not sum to 1.
DatasetSplit split(const std::vector<SegSample>& samples, const SplitFractions& fractions, std::uint64_t seed);

// Dataset directory: <root>/images/<id>.pgm, <root>/masks/<id>.pgm and
// <root>/manifest.csv with header "id,split".
void write_dataset(const std::filesystem::path& root, const DatasetSplit& data);

struct LoadedDataset {
    std::vector<SegSample> samples;
    std::vector<std::string> splits; // parallel to samples
    std::vector<SegSample> select(const std::string& split_name) const;
};

LoadedDataset read_dataset(const std::filesystem::path& root);

} // namespace haaseg
