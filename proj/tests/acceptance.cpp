// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// `--only 2,5` restricts the run to selected criteria.

#include "haaseg/axial_attention.hpp"
#include "haaseg/checkpoint.hpp"
#include "haaseg/commands.hpp"
#include "haaseg/metrics.hpp"
#include "haaseg/ops.hpp"
#include "haaseg/pgm.hpp"
#include "haaseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

using namespace haaseg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
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

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

Outcome gradient_suite() {
    RunConfig cfg;
    finalize(cfg);
    const auto t0 = Clock::now();
    const auto components = default_gradcheck_components(cfg.gradcheck);
    const GradcheckReport r = run_gradcheck(components, cfg.seed, cfg.gradcheck.seeds, cfg.gradcheck.tolerance);
    const double secs = seconds_since(t0);
    double worst = 0;
    std::string worst_name, failed;
    for (const auto& row : r.rows) {
        if (row.max_rel_error > worst) {
            worst = row.max_rel_error;
            worst_name = row.name;
        }
        if (!row.passed)
            failed += " " + row.name;
    }
    std::set<std::string> strategies_seen;
    for (const auto& row : r.rows)
        for (auto s : kAllEncodings)
            if (row.name == "hybrid_block[" + std::string(to_string(s)) + "]")
                strategies_seen.insert(std::string(to_string(s)));
    const bool has_net = std::any_of(r.rows.begin(), r.rows.end(), [](const auto& row) {
        return row.name.rfind("network", 0) == 0;
    });
    Outcome o;
    o.passed = r.all_passed() && secs < 300 && strategies_seen.size() == kAllEncodings.size() && has_net &&
               r.rows.size() >= 10;
    o.detail = std::to_string(r.rows.size()) + " components x " + std::to_string(cfg.gradcheck.seeds) +
               " seeds, max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.0f", secs) + " s" +
               (failed.empty() ? "" : ", failed:" + failed);
    return o;
}

Outcome axial_vs_full() {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(derive_seed(seed, {2}));
        const auto h_layer = make_axial_layer(6, 9, Axis::Height, EncodingStrategy::None, 8, rng);
        const Tensor xh = normal_tensor({6, 9, 1}, rng);
        worst = std::max(worst, max_abs_diff(axial_attention(xh, h_layer), full_self_attention(xh, h_layer.proj)));
        const auto w_layer = make_axial_layer(6, 11, Axis::Width, EncodingStrategy::None, 8, rng);
        const Tensor xw = normal_tensor({6, 1, 11}, rng);
        worst = std::max(worst, max_abs_diff(axial_attention(xw, w_layer), full_self_attention(xw, w_layer.proj)));
    }
    return {worst < 1e-10, "W=1 and H=1, 3 seeds, max abs diff " + fmt("%.2e", worst)};
}

Outcome permutation() {
    double none_worst = 0, encoded_min = 1e300;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(derive_seed(seed, {3}));
        for (Axis axis : {Axis::Height, Axis::Width}) {
            const std::size_t c = 8, h = 7, w = 6, len = axis == Axis::Height ? h : w;
            std::vector<std::size_t> perm(len);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng.engine());
            if (std::is_sorted(perm.begin(), perm.end()))
                std::swap(perm[0], perm[1]);
            const Tensor x = normal_tensor({c, h, w}, rng);
            const Tensor xp = permute_axis(x, perm, axis);
            auto gap = [&](EncodingStrategy s) {
                const auto layer = make_axial_layer(c, len, axis, s, 8, rng);
                return max_abs_diff(axial_attention(xp, layer), permute_axis(axial_attention(x, layer), perm, axis));
            };
            none_worst = std::max(none_worst, gap(EncodingStrategy::None));
            encoded_min = std::min({encoded_min, gap(EncodingStrategy::APE), gap(EncodingStrategy::LPE_APE)});
        }
    }
    return {none_worst < 1e-12 && encoded_min > 1e-3,
            "None max diff " + fmt("%.2e", none_worst) + ", APE and LPE+APE min change " + fmt("%.3f", encoded_min)};
}

Outcome gate_off() {
    bool all = true;
    std::size_t cases = 0;
    Rng rng(4);
    for (std::size_t stride : {1u, 2u})
        for (auto s : kAllEncodings) {
            HybridBlockConfig cfg;
            cfg.channels = 8;
            cfg.height = cfg.width = 8;
            cfg.strategy = s;
            cfg.pool_stride = stride;
            HybridAxialBlock b = make_hybrid_block(cfg, rng);
            b.gamma1.mutable_data()[0] = 0.0;
            b.gamma2.mutable_data()[0] = 0.0;
            const Tensor x = normal_tensor({8, 8, 8}, rng);
            all = all && bit_equal(hybrid_block_forward(x, b), gate_pool(gate_pool(x, stride), 1));
            ++cases;
        }
    return {all, std::to_string(cases) + " blocks (7 strategies x 2 pool strides) bit-exact"};
}

Outcome complexity() {
    Rng rng(5);
    bool ok = true;
    for (int i = 0; i < 50; ++i) {
        const auto h = static_cast<std::uint64_t>(rng.integer(1, 128));
        const auto w = static_cast<std::uint64_t>(rng.integer(1, 128));
        const auto d = static_cast<std::uint64_t>(rng.integer(1, 256));
        const MacCount m = mac_count(h, w, d);
        ok = ok && m.full_attention_macs == h * w * h * w * d && m.height_axis_macs == h * h * w * d &&
             m.width_axis_macs == h * w * w * d;
    }
    const MacCount m = mac_count(64, 64, 16);
    const std::uint64_t axial = m.height_axis_macs + m.width_axis_macs;
    const bool ratio = axial * 32 == m.full_attention_macs;
    return {ok && ratio, "50 random triples exact; H=W=64 axial/full = " + std::to_string(axial) + "/" +
                             std::to_string(m.full_attention_macs) + (ratio ? " = 1/32" : " != 1/32")};
}

Outcome ablation() {
    const std::string path = std::string(HAASEG_SOURCE_DIR) + "/configs/ablation.json";
    const RunConfig cfg = load_run_config(path);
    const auto t0 = Clock::now();
    const AblationResult r = run_ablation(cfg, resolve_threads(0), &std::cout);
    const double secs = seconds_since(t0);
    std::cout << ablation_csv(r);
    const auto checks = check_ablation(r);
    bool ok = checks.size() == 3 && secs < 45 * 60;
    std::string detail;
    for (const auto& c : checks) {
        ok = ok && c.passed;
        detail += (c.passed ? "" : "NOT ") + c.description + "; ";
    }
    return {ok, detail + fmt("%.0f", secs) + " s"};
}

Outcome overfit() {
    SynthConfig sc;
    sc.n_samples = 1;
    const std::vector<SegSample> one = generate_dataset(sc);
    TrainConfig tc;
    tc.epochs = 200;
    HAANet net = build_network(NetConfig{});
    const FitResult r = fit(net, one, {}, tc);
    std::size_t first_below = 0;
    for (std::size_t i = 0; i < r.step_losses.size() && !first_below; ++i)
        if (r.step_losses[i] < 0.05)
            first_below = i + 1;
    const double dice = evaluate_dataset(net, one).dice;
    return {first_below > 0 && r.step_losses.back() < 0.05 && dice > 95.0,
            "BCE < 0.05 from step " + std::to_string(first_below) + ", final " + fmt("%.5f", r.step_losses.back()) +
                ", Dice " + fmt("%.2f", dice)};
}

Outcome metric_oracles() {
    Rng rng(8);
    double jd_worst = 0, auc_worst = 0;
    for (int n = 0; n < 1000; ++n) {
        Tensor p({1, 16, 16}), g({1, 16, 16});
        const double fg = rng.uniform(0.05, 0.6);
        for (std::size_t i = 0; i < 256; ++i) {
            g.mutable_data()[i] = rng.uniform() < fg ? 1.0 : 0.0;
            p.mutable_data()[i] = std::round(rng.uniform() * 16.0) / 16.0;
        }
        const ConfusionCounts c = confusion(p, g);
        const double d = dice(c) / 100.0, j = jaccard(c) / 100.0;
        jd_worst = std::max(jd_worst, std::abs(j - d / (2.0 - d)));
        double won = 0, pairs = 0;
        for (std::size_t a = 0; a < 256; ++a)
            for (std::size_t b = 0; b < 256; ++b)
                if (g.data()[a] == 1.0 && g.data()[b] == 0.0) {
                    pairs += 1;
                    won += p.data()[a] > p.data()[b] ? 1.0 : p.data()[a] == p.data()[b] ? 0.5 : 0.0;
                }
        if (const auto a = auc(p.data(), g.data()))
            auc_worst = std::max(auc_worst, std::abs(*a - 100.0 * won / pairs));
        else
            auc_worst = 1e300;
    }
    Tensor g({1, 16, 16});
    for (std::size_t i = 0; i < 256; ++i)
        g.mutable_data()[i] = static_cast<double>(i % 3 == 0);
    const double bce_gap = std::abs(bce_loss(Tensor({1, 16, 16}, 0.5), g).item() - std::log(2.0));
    return {jd_worst < 1e-12 && auc_worst < 1e-9 && bce_gap < 1e-12,
            "|J - D/(2-D)| " + fmt("%.1e", jd_worst) + ", AUC vs pairs " + fmt("%.1e", auc_worst) +
                ", |BCE(0.5) - ln 2| " + fmt("%.1e", bce_gap)};
}

Outcome parameters() {
    const ParamReport r = count_params(build_network(NetConfig{}));
    return {r.total_params < 2'000'000, "default network has " + std::to_string(r.total_params) + " parameters (" +
                                            fmt("%.3f", r.total_params / 1e6) + " M)"};
}

Outcome persistence() {
    RunConfig cfg;
    cfg.net.stem_channels = {8};
    cfg.net.stem_strides = {1};
    cfg.net.encoder_channels = {8};
    cfg.net.encoder_strides = {1};
    cfg.net.decoder_channels = {8, 8, 8, 8, 8};
    cfg.net.image_size = 16;
    cfg.data.image_size = 16;
    cfg.data.n_samples = 8;
    cfg.train.epochs = 2;
    finalize(cfg);

    auto train_once = [&] {
        HAANet net = build_network(cfg.net);
        fit(net, generate_dataset(cfg.data), {}, cfg.train);
        return std::make_pair(net, encode_checkpoint(net.parameters()));
    };
    const auto [net_a, bytes_a] = train_once();
    const auto [net_b, bytes_b] = train_once();
    const bool identical = bytes_a == bytes_b;

    const ParamList back = decode_checkpoint(bytes_a);
    const ParamList orig = net_a.parameters();
    bool round_trip = back.size() == orig.size();
    for (std::size_t i = 0; round_trip && i < back.size(); ++i)
        round_trip = back[i].name == orig[i].name && bit_equal(back[i].tensor, orig[i].tensor);
    round_trip = round_trip && encode_checkpoint(back) == bytes_a;

    bool pgm = true;
    for (const auto& s : generate_dataset(cfg.data))
        pgm = pgm && bit_equal(decode_pgm(encode_pgm(s.mask)), s.mask);

    return {identical && round_trip && pgm,
            std::string("checkpoints ") + (identical ? "byte-identical" : "DIFFER") + " (" +
                std::to_string(bytes_a.size()) + " bytes), round-trip " + (round_trip ? "bit-exact" : "BROKEN") +
                ", PGM masks " + (pgm ? "bit-exact" : "BROKEN")};
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::strcmp(argv[i], "--only") == 0) {
            std::stringstream ss(argv[i + 1]);
            std::string item;
            while (std::getline(ss, item, ','))
                only.insert(std::stoi(item));
        }

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient suite", gradient_suite},
        {"axial equals full attention on a single row or column", axial_vs_full},
        {"permutation equivariance without encoding", permutation},
        {"closed gates reduce to the pooled path", gate_off},
        {"MAC closed forms", complexity},
        {"position-encoding ablation ordering", ablation},
        {"single-sample overfit", overfit},
        {"metric oracles", metric_oracles},
        {"parameter budget", parameters},
        {"determinism and persistence", persistence},
    };

    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(id))
            continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        all = all && o.passed;
        std::cout << "criterion " << id << " " << (o.passed ? "PASS" : "FAIL") << ": " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    return all ? 0 : 1;
}
