#include "haaseg/commands.hpp"

#include "haaseg/checkpoint.hpp"
#include "haaseg/errors.hpp"
#include "haaseg/network.hpp"
#include "haaseg/pgm.hpp"
#include "haaseg/synth.hpp"
#include "haaseg/training.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

namespace haaseg {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f)
        throw std::runtime_error("failed writing " + path.string());
}

std::string fmt(const char* pattern, double v) {
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

constexpr std::size_t kDiceIndex = 4;

} // namespace

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("HAASEG_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError(std::string("HAASEG_THREADS must be a positive integer, got '") + env + "'");
        return static_cast<std::size_t>(v);
    }
    return 1;
}

int cmd_train(const RunConfig& cfg, const TrainOptions& opts, std::ostream& log) {
    std::vector<SegSample> train, val;
    if (opts.data_dir) {
        const LoadedDataset data = read_dataset(*opts.data_dir);
        train = data.select("train");
        val = data.select("val");
    } else {
        const DatasetSplit parts = split(generate_dataset(cfg.data), cfg.split, cfg.seed);
        train = parts.train;
        val = parts.val;
    }
    if (train.empty())
        throw ConfigError("training split is empty");

    fs::create_directories(opts.out_dir);
    HAANet net = build_network(cfg.net);
    log << "training on " << train.size() << " samples, " << cfg.train.epochs << " epochs, "
        << count_params(net).total_params << " parameters\n";
    const FitResult result = fit(net, train, val, cfg.train, [&](const EpochLog& e) {
        log << "epoch " << e.epoch << " loss " << fmt("%.6f", e.mean_loss);
        if (e.val_dice)
            log << " val_dice " << fmt("%.2f", *e.val_dice);
        log << '\n' << std::flush;
    });

    save_checkpoint(opts.out_dir / "checkpoint.bin", net.parameters());
    write_text(opts.out_dir / "train_log.csv", training_log_csv(result.epochs));
    write_text(opts.out_dir / "resolved_config.json", dump_run_config(cfg));
    log << "wrote " << (opts.out_dir / "checkpoint.bin").string() << '\n';
    return kExitOk;
}

RunConfig config_for_checkpoint(const fs::path& checkpoint) {
    const fs::path beside = checkpoint.parent_path() / "resolved_config.json";
    if (fs::exists(beside))
        return load_run_config(beside);
    RunConfig cfg;
    finalize(cfg);
    return cfg;
}

int cmd_eval(const RunConfig& cfg, const EvalOptions& opts, std::ostream& out) {
    HAANet net = build_network(cfg.net);
    apply_checkpoint(net, load_checkpoint(opts.checkpoint));

    const LoadedDataset data = read_dataset(opts.data_dir);
    const std::vector<SegSample> samples = opts.split == "all" ? data.samples : data.select(opts.split);
    if (samples.empty())
        throw ConfigError("dataset " + opts.data_dir.string() + " has no samples in split '" + opts.split + "'");
    const Shape want{cfg.net.in_channels, cfg.net.image_size, cfg.net.image_size};
    for (const auto& s : samples)
        if (s.image.shape() != want)
            throw ConfigError("sample " + s.id + " has shape " + shape_str(s.image.shape()) +
                              ", the network expects " + shape_str(want));

    std::vector<Tensor> preds, gts;
    for (const auto& s : samples) {
        preds.push_back(predict(net, s.image));
        gts.push_back(s.mask);
    }
    MetricReport report = evaluate_predictions(preds, gts);
    const ParamReport pr = count_params(net);
    report.params_m = static_cast<double>(pr.total_params) / 1e6;
    report.macs_g = static_cast<double>(pr.total_macs_per_forward) / 1e9;

    if (opts.pred_dir) {
        fs::create_directories(*opts.pred_dir);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            Tensor mask(preds[i].shape());
            auto md = mask.mutable_data();
            const auto pd = preds[i].data();
            for (std::size_t j = 0; j < md.size(); ++j)
                md[j] = pd[j] >= 0.5 ? 1.0 : 0.0;
            write_pgm(mask, *opts.pred_dir / (samples[i].id + ".pgm"));
        }
    }

    const std::string csv = report_csv_header() + "\n" + report_csv_row(report) + "\n";
    const std::string json = report_json(report) + "\n";
    if (opts.out_dir) {
        fs::create_directories(*opts.out_dir);
        write_text(*opts.out_dir / "metrics.csv", csv);
        write_text(*opts.out_dir / "metrics.json", json);
    }
    out << csv << json;
    return kExitOk;
}

std::pair<double, double> AblationResult::summary(EncodingStrategy variant, std::size_t metric_index) const {
    std::vector<double> v;
    for (const auto& row : rows)
        if (row.variant == variant)
            v.push_back(metric_values(row.report)[metric_index]);
    if (v.empty())
        return {std::nan(""), std::nan("")};
    double mean = 0.0;
    for (double x : v)
        mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v)
        var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return {mean, sd};
}

AblationResult run_ablation(const RunConfig& cfg, std::size_t threads, std::ostream* progress) {
    const DatasetSplit parts = split(generate_dataset(cfg.data), cfg.split, cfg.seed);
    if (parts.train.empty() || parts.test.empty())
        throw ConfigError("ablation needs nonempty train and test splits");

    AblationResult result;
    result.variants = cfg.ablate.variants;
    result.seeds = cfg.ablate.seeds;
    for (auto v : result.variants)
        for (std::size_t s = 0; s < result.seeds; ++s)
            result.rows.push_back({v, cfg.seed + s, {}});

    std::mutex progress_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < result.rows.size(); i = next++) {
            AblationRow& row = result.rows[i];
            const auto t0 = std::chrono::steady_clock::now();
            NetConfig nc = cfg.net;
            nc.position_encoding = row.variant;
            nc.seed = row.seed;
            TrainConfig tc = cfg.train;
            tc.seed = row.seed;
            HAANet net = build_network(nc);
            fit(net, parts.train, {}, tc);
            row.report = evaluate_dataset(net, parts.test);
            if (progress) {
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                std::lock_guard lock(progress_mutex);
                *progress << "  " << to_string(row.variant) << " seed " << row.seed << ": dice "
                          << fmt("%.2f", row.report.dice) << " (" << fmt("%.0f", secs) << " s)\n"
                          << std::flush;
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, result.rows.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    return result;
}

std::string ablation_csv(const AblationResult& r) {
    std::string out = "variant,seed," + report_csv_header() + "\n";
    for (const auto& row : r.rows)
        out += std::string(to_string(row.variant)) + "," + std::to_string(row.seed) + "," +
               report_csv_row(row.report) + "\n";
    const std::size_t n_metrics = metric_names().size();
    for (auto v : r.variants) {
        out += std::string(to_string(v)) + ",mean±std";
        for (std::size_t m = 0; m < n_metrics; ++m) {
            const auto [mean, sd] = r.summary(v, m);
            out += "," + fmt("%.4f", mean) + "±" + fmt("%.4f", sd);
        }
        out += "\n";
    }
    return out;
}

std::string ablation_json(const AblationResult& r) {
    using json = nlohmann::ordered_json;
    auto metric_object = [](const std::vector<double>& values) {
        json o;
        for (std::size_t i = 0; i < values.size(); ++i)
            o[metric_names()[i]] = std::isnan(values[i]) ? json(nullptr) : json(values[i]);
        return o;
    };
    json j;
    j["seeds"] = r.seeds;
    j["rows"] = json::array();
    for (const auto& row : r.rows)
        j["rows"].push_back({{"variant", to_string(row.variant)},
                             {"seed", row.seed},
                             {"metrics", metric_object(metric_values(row.report))}});
    j["summary"] = json::array();
    for (auto v : r.variants) {
        std::vector<double> means, sds;
        for (std::size_t m = 0; m < metric_names().size(); ++m) {
            const auto [mean, sd] = r.summary(v, m);
            means.push_back(mean);
            sds.push_back(sd);
        }
        j["summary"].push_back({{"variant", to_string(v)}, {"mean", metric_object(means)}, {"std", metric_object(sds)}});
    }
    return j.dump(2) + "\n";
}

std::vector<AblationCheck> check_ablation(const AblationResult& r) {
    auto has = [&](EncodingStrategy s) {
        return std::find(r.variants.begin(), r.variants.end(), s) != r.variants.end();
    };
    auto dice = [&](EncodingStrategy s) { return r.summary(s, kDiceIndex).first; };
    std::vector<AblationCheck> out;
    using E = EncodingStrategy;
    if (has(E::None) && has(E::LPE_APE))
        out.push_back({"mean Dice(LPE+APE) " + fmt("%.2f", dice(E::LPE_APE)) + " > mean Dice(None) " +
                           fmt("%.2f", dice(E::None)) + " + 5",
                       dice(E::LPE_APE) > dice(E::None) + 5.0});
    if (has(E::None) && has(E::APE))
        out.push_back({"mean Dice(APE) " + fmt("%.2f", dice(E::APE)) + " > mean Dice(None) " +
                           fmt("%.2f", dice(E::None)) + " + 5",
                       dice(E::APE) > dice(E::None) + 5.0});
    if (has(E::LPE) && has(E::LPE_APE))
        out.push_back({"mean Dice(LPE) " + fmt("%.2f", dice(E::LPE)) + " <= mean Dice(LPE+APE) " +
                           fmt("%.2f", dice(E::LPE_APE)),
                       dice(E::LPE) <= dice(E::LPE_APE)});
    return out;
}

int cmd_ablate(const RunConfig& cfg, const AblateOptions& opts, std::ostream& out) {
    out << "ablation: " << cfg.ablate.variants.size() << " variants x " << cfg.ablate.seeds << " seeds, "
        << cfg.train.epochs << " epochs each\n";
    const AblationResult result = run_ablation(cfg, opts.threads, &out);
    const std::string csv = ablation_csv(result);
    fs::create_directories(opts.out_dir);
    write_text(opts.out_dir / "ablation.csv", csv);
    write_text(opts.out_dir / "ablation.json", ablation_json(result));
    out << csv;
    bool ok = true;
    for (const auto& c : check_ablation(result)) {
        out << (c.passed ? "PASS " : "FAIL ") << c.description << '\n';
        ok = ok && c.passed;
    }
    return opts.check && !ok ? kExitCheckFailed : kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, const std::vector<GradcheckComponent>& extra) {
    auto components = default_gradcheck_components(cfg.gradcheck);
    components.insert(components.end(), extra.begin(), extra.end());
    const GradcheckReport report =
        run_gradcheck(components, cfg.seed, cfg.gradcheck.seeds, cfg.gradcheck.tolerance);
    print_gradcheck_report(report, cfg.gradcheck.tolerance, out);
    return report.all_passed() ? kExitOk : kExitCheckFailed;
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
    const DatasetSplit parts = split(generate_dataset(cfg.data), cfg.split, cfg.seed);
    write_dataset(out_dir, parts);
    out << "wrote " << parts.train.size() << " train, " << parts.val.size() << " val, " << parts.test.size()
        << " test samples to " << out_dir.string() << '\n';
    return kExitOk;
}

} // namespace haaseg
