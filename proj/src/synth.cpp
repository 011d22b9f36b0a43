#include "haaseg/synth.hpp"

#include "haaseg/errors.hpp"
#include "haaseg/pgm.hpp"
#include "haaseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace haaseg {

namespace {

struct Blob {
    double cx, cy, a, b, theta;
};

// Normalized elliptical distance; 1 on the blob boundary.
double blob_distance(const Blob& blob, double x, double y) {
    const double dx = x - blob.cx, dy = y - blob.cy;
    const double c = std::cos(blob.theta), s = std::sin(blob.theta);
    const double u = (dx * c + dy * s) / blob.a;
    const double v = (-dx * s + dy * c) / blob.b;
    return std::sqrt(u * u + v * v);
}

// Linear soft edge centred on the boundary: 0.5 exactly where distance is 1.
double blob_profile(double rho, double softness) {
    return std::clamp(0.5 + (1.0 - rho) / (2.0 * softness), 0.0, 1.0);
}

Blob draw_blob(Rng& rng, const SynthConfig& cfg, const std::vector<std::array<double, 4>>& zones) {
    const double s = static_cast<double>(cfg.image_size);
    const auto& z = zones[static_cast<std::size_t>(rng.integer(0, static_cast<long>(zones.size()) - 1))];
    Blob b;
    b.cx = rng.uniform(z[0], z[1]) * s;
    b.cy = rng.uniform(z[2], z[3]) * s;
    const double r = rng.uniform(cfg.lesion_radius_range[0], cfg.lesion_radius_range[1]) * s;
    b.a = r;
    b.b = r * rng.uniform(0.6, 1.0);
    b.theta = rng.uniform(0.0, std::numbers::pi);
    return b;
}

std::size_t draw_count(Rng& rng, const std::array<std::size_t, 2>& range) {
    return static_cast<std::size_t>(rng.integer(static_cast<long>(range[0]), static_cast<long>(range[1])));
}

void check_zones(const std::vector<std::array<double, 4>>& zones, const char* name) {
    for (const auto& z : zones)
        if (!(z[0] >= 0.0 && z[0] <= z[1] && z[1] <= 1.0 && z[2] >= 0.0 && z[2] <= z[3] && z[3] <= 1.0))
            throw ConfigError(std::string("data.") + name + " entries must be [x0, x1, y0, y1] with 0 <= lo <= hi <= 1");
}

} // namespace

void validate(const SynthConfig& cfg) {
    if (cfg.image_size < 4)
        throw ConfigError("data.image_size must be at least 4");
    if (cfg.n_samples == 0)
        throw ConfigError("data.n_samples must be positive");
    if (cfg.lesion_count_range[0] < 1 || cfg.lesion_count_range[0] > cfg.lesion_count_range[1])
        throw ConfigError("data.lesion_count_range must satisfy 1 <= lo <= hi");
    if (cfg.distractor_count_range[0] > cfg.distractor_count_range[1])
        throw ConfigError("data.distractor_count_range must satisfy lo <= hi");
    if (!(cfg.lesion_radius_range[0] > 0.0 && cfg.lesion_radius_range[0] <= cfg.lesion_radius_range[1] &&
          cfg.lesion_radius_range[1] <= 0.5))
        throw ConfigError("data.lesion_radius_range must satisfy 0 < lo <= hi <= 0.5");
    if (cfg.lesion_zones.empty())
        throw ConfigError("data.lesion_zones must not be empty");
    if (cfg.distractor_zones.empty() && cfg.distractor_count_range[1] > 0)
        throw ConfigError("data.distractor_zones must not be empty when distractors are drawn");
    check_zones(cfg.lesion_zones, "lesion_zones");
    check_zones(cfg.distractor_zones, "distractor_zones");
    if (!(cfg.lesion_contrast > 0.0 && cfg.lesion_contrast <= 1.0))
        throw ConfigError("data.lesion_contrast must lie in (0, 1]");
    if (!(cfg.edge_softness > 0.0))
        throw ConfigError("data.edge_softness must be positive");
    if (!(cfg.noise_std >= 0.0))
        throw ConfigError("data.noise_std must be nonnegative");
    if (!(cfg.background_texture_scale >= 0.0))
        throw ConfigError("data.background_texture_scale must be nonnegative");
}

SegSample generate_sample(std::uint64_t seed, std::size_t idx, const SynthConfig& cfg) {
    validate(cfg);
    const std::size_t n = cfg.image_size;
    const double s = static_cast<double>(n);
    Rng rng(derive_seed(seed, {0x73796e, idx}));

    std::vector<Blob> lesions, distractors;
    std::vector<double> mask(n * n);
    constexpr int kMaxAttempts = 1000;
    int attempt = 0;
    for (;; ++attempt) {
        if (attempt == kMaxAttempts)
            throw ContractError("could not draw a lesion layout with mask fraction in (0, 0.5)");
        lesions.assign(draw_count(rng, cfg.lesion_count_range), Blob{});
        for (auto& b : lesions)
            b = draw_blob(rng, cfg, cfg.lesion_zones);
        std::size_t fg = 0;
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                bool inside = false;
                for (const auto& b : lesions)
                    inside = inside || blob_distance(b, static_cast<double>(x), static_cast<double>(y)) <= 1.0;
                mask[y * n + x] = inside ? 1.0 : 0.0;
                fg += inside;
            }
        if (fg > 0 && 2 * fg < n * n)
            break;
    }
    distractors.assign(draw_count(rng, cfg.distractor_count_range), Blob{});
    for (auto& b : distractors)
        b = draw_blob(rng, cfg, cfg.distractor_zones);

    struct Wave {
        double amp, fx, fy, phase;
    };
    std::vector<Wave> waves(3);
    for (auto& w : waves) {
        w.amp = rng.uniform(-1.0, 1.0) / 3.0;
        w.fx = rng.uniform(-2.0, 2.0);
        w.fy = rng.uniform(-2.0, 2.0);
        w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }

    SegSample out;
    out.image = Tensor({1, n, n});
    out.mask = Tensor({1, n, n}, mask);
    auto img = out.image.mutable_data();
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            double texture = 0.0;
            for (const auto& w : waves)
                texture += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * fx + w.fy * fy) / s + w.phase);
            double blob = 0.0;
            for (const auto* set : {&lesions, &distractors})
                for (const auto& b : *set)
                    blob = std::max(blob, blob_profile(blob_distance(b, fx, fy), cfg.edge_softness));
            double v = 0.35 + cfg.background_texture_scale * texture + cfg.lesion_contrast * blob;
            if (cfg.noise_std > 0.0)
                v += rng.normal(0.0, cfg.noise_std);
            img[y * n + x] = std::clamp(v, 0.0, 1.0);
        }

    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", idx);
    out.id = id;
    return out;
}

std::vector<SegSample> generate_dataset(const SynthConfig& cfg) {
    validate(cfg);
    std::vector<SegSample> out;
    out.reserve(cfg.n_samples);
    for (std::size_t i = 0; i < cfg.n_samples; ++i)
        out.push_back(generate_sample(cfg.seed, i, cfg));
    return out;
}

DatasetSplit split(const std::vector<SegSample>& samples, const SplitFractions& f, std::uint64_t seed) {
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
        throw ConfigError("split fractions must be nonnegative and sum to 1");
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    Rng rng(derive_seed(seed, {0x73706c}));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<long>(i) - 1))]);

    const double n = static_cast<double>(samples.size());
    const auto n_train = std::min(samples.size(), static_cast<std::size_t>(std::llround(f.train * n)));
    const auto n_val = std::min(samples.size() - n_train, static_cast<std::size_t>(std::llround(f.val * n)));
    DatasetSplit out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto& dst = i < n_train ? out.train : i < n_train + n_val ? out.val : out.test;
        dst.push_back(samples[order[i]]);
    }
    return out;
}

void write_dataset(const std::filesystem::path& root, const DatasetSplit& data) {
    std::filesystem::create_directories(root / "images");
    std::filesystem::create_directories(root / "masks");
    std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
    if (!manifest)
        throw std::runtime_error("cannot write " + (root / "manifest.csv").string());
    manifest << "id,split\n";
    const std::pair<const char*, const std::vector<SegSample>*> parts[] = {
        {"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
    for (const auto& [name, list] : parts)
        for (const auto& s : *list) {
            write_pgm(s.image, root / "images" / (s.id + ".pgm"));
            write_pgm(s.mask, root / "masks" / (s.id + ".pgm"));
            manifest << s.id << ',' << name << '\n';
        }
}

std::vector<SegSample> LoadedDataset::select(const std::string& split_name) const {
    std::vector<SegSample> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (splits[i] == split_name)
            out.push_back(samples[i]);
    return out;
}

LoadedDataset read_dataset(const std::filesystem::path& root) {
    const auto manifest_path = root / "manifest.csv";
    std::ifstream manifest(manifest_path);
    if (!manifest)
        throw ConfigError("dataset directory " + root.string() + " has no manifest.csv");
    std::string line;
    if (!std::getline(manifest, line) || line != "id,split")
        throw ConfigError(manifest_path.string() + ": expected header 'id,split'");
    LoadedDataset out;
    std::size_t line_no = 1;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || comma == 0)
            throw ConfigError(manifest_path.string() + ":" + std::to_string(line_no) + ": expected 'id,split'");
        SegSample s;
        s.id = line.substr(0, comma);
        s.image = read_pgm(root / "images" / (s.id + ".pgm"));
        s.mask = read_pgm(root / "masks" / (s.id + ".pgm"));
        if (s.image.shape() != s.mask.shape())
            throw ConfigError("sample " + s.id + ": image and mask sizes differ");
        for (double v : s.mask.data())
            if (v != 0.0 && v != 1.0)
                throw ConfigError("sample " + s.id + ": mask is not binary");
        out.samples.push_back(std::move(s));
        out.splits.push_back(line.substr(comma + 1));
    }
    if (out.samples.empty())
        throw ConfigError("dataset directory " + root.string() + " lists no samples");
    return out;
}

} // namespace haaseg
