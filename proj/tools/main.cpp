#include "haaseg/commands.hpp"
#include "haaseg/errors.hpp"
#include "haaseg/position_encoding.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

using namespace haaseg;

namespace {

std::vector<EncodingStrategy> parse_variants(const std::string& list) {
    std::vector<EncodingStrategy> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(parse_encoding(item));
    if (out.empty())
        throw ConfigError("--variants is empty");
    return out;
}

std::filesystem::path require_out(const std::string& out, const char* command) {
    if (out.empty())
        throw ConfigError(std::string(command) + " needs --out DIR");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid axial-attention segmentation: train, evaluate, ablate and gradient-check"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory");
    app.add_option("--seed", seed, "overrides the configured seed");
    app.add_option("--threads", threads, "worker threads (HAASEG_THREADS when unset)");

    auto* train = app.add_subcommand("train", "train a network and write checkpoint.bin, train_log.csv, resolved_config.json");
    std::string train_data;
    std::optional<std::size_t> epochs;
    train->add_option("--data", train_data, "dataset directory (synthetic data from the config when unset)");
    train->add_option("--epochs", epochs, "overrides train.epochs");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
    EvalOptions eval_opts;
    std::string pred_dir;
    eval->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
    eval->add_option("--data", eval_opts.data_dir, "dataset directory")->required();
    eval->add_option("--split", eval_opts.split, "manifest split, or 'all'")->capture_default_str();
    eval->add_option("--pred-dir", pred_dir, "write thresholded predictions as PGM");

    auto* ablate = app.add_subcommand("ablate", "train every (encoding, seed) cell and tabulate metrics");
    std::string variants;
    std::optional<std::size_t> ablate_seeds;
    bool check = false;
    ablate->add_option("--variants", variants, "comma-separated encoding strategies");
    ablate->add_option("--seeds", ablate_seeds, "seeds per variant");
    ablate->add_flag("--check", check, "exit 3 when a directional check fails");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every component");
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty())
            cfg = load_run_config(config_path);
        else if (eval->parsed())
            cfg = config_for_checkpoint(eval_opts.checkpoint);
        if (seed)
            cfg.seed = *seed;
        if (epochs)
            cfg.train.epochs = *epochs;
        if (!variants.empty())
            cfg.ablate.variants = parse_variants(variants);
        if (ablate_seeds)
            cfg.ablate.seeds = *ablate_seeds;
        finalize(cfg);

        if (train->parsed()) {
            TrainOptions opts{require_out(out, "train"), std::nullopt};
            if (!train_data.empty())
                opts.data_dir = train_data;
            return cmd_train(cfg, opts, std::cout);
        }
        if (eval->parsed()) {
            if (!out.empty())
                eval_opts.out_dir = out;
            if (!pred_dir.empty())
                eval_opts.pred_dir = pred_dir;
            return cmd_eval(cfg, eval_opts, std::cout);
        }
        if (ablate->parsed()) {
            AblateOptions opts{require_out(out, "ablate"), resolve_threads(threads), check};
            return cmd_ablate(cfg, opts, std::cout);
        }
        if (gradcheck->parsed())
            return cmd_gradcheck(cfg, std::cout);
        if (gen->parsed())
            return cmd_gen_data(cfg, require_out(out, "gen-data"), std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
