#include "haaseg/config.hpp"

#include "haaseg/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace haaseg {

namespace {

using json = nlohmann::ordered_json;

// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object())
            throw ConfigError(label("") + " must be an object");
    }

    template <typename T>
    void field(const std::string& key, T& dst) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end())
            return;
        try {
            read(*it, dst);
        } catch (const ConfigError& e) {
            throw ConfigError(label(key) + ": " + e.what());
        } catch (const json::exception&) {
            throw ConfigError(label(key) + ": wrong type");
        }
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return Section(it == obj_.end() ? empty() : *it, label(key));
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (!seen_.count(key))
                throw ConfigError("unknown configuration key '" + label(key) + "'");
    }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }

    std::string label(const std::string& key) const {
        if (path_.empty())
            return key;
        return key.empty() ? path_ : path_ + "." + key;
    }

    static void read(const json& j, double& dst) {
        if (!j.is_number())
            throw ConfigError("expected a number");
        dst = j.get<double>();
    }
    static void read(const json& j, std::size_t& dst) {
        if (!j.is_number_integer() || j.get<long long>() < 0)
            throw ConfigError("expected a nonnegative integer");
        dst = j.get<std::size_t>();
    }
    static void read(const json& j, EncodingStrategy& dst) {
        if (!j.is_string())
            throw ConfigError("expected a string");
        dst = parse_encoding(j.get<std::string>());
    }
    template <typename T>
    static void read(const json& j, std::vector<T>& dst) {
        if (!j.is_array())
            throw ConfigError("expected an array");
        std::vector<T> out(j.size());
        for (std::size_t i = 0; i < j.size(); ++i)
            read(j[i], out[i]);
        dst = std::move(out);
    }
    template <typename T, std::size_t N>
    static void read(const json& j, std::array<T, N>& dst) {
        if (!j.is_array() || j.size() != N)
            throw ConfigError("expected an array of " + std::to_string(N) + " values");
        for (std::size_t i = 0; i < N; ++i)
            read(j[i], dst[i]);
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

json strategies_json(const std::vector<EncodingStrategy>& v) {
    json a = json::array();
    for (auto s : v)
        a.push_back(to_string(s));
    return a;
}

} // namespace

void finalize(RunConfig& cfg) {
    cfg.net.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.data.seed = cfg.seed;
    validate(cfg.net);
    validate(cfg.train);
    validate(cfg.data);
    if (cfg.net.image_size != cfg.data.image_size)
        throw ConfigError("net.image_size (" + std::to_string(cfg.net.image_size) + ") must equal data.image_size (" +
                          std::to_string(cfg.data.image_size) + ")");
    const auto& s = cfg.split;
    if (s.train < 0 || s.val < 0 || s.test < 0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9)
        throw ConfigError("data.split fractions must be nonnegative and sum to 1");
    if (cfg.ablate.variants.empty())
        throw ConfigError("ablate.variants must not be empty");
    if (cfg.ablate.seeds == 0)
        throw ConfigError("ablate.seeds must be positive");
    if (cfg.gradcheck.seeds == 0)
        throw ConfigError("gradcheck.seeds must be positive");
    if (!(cfg.gradcheck.eps > 0.0))
        throw ConfigError("gradcheck.eps must be positive");
    if (!(cfg.gradcheck.tolerance > 0.0))
        throw ConfigError("gradcheck.tolerance must be positive");
    if (cfg.gradcheck.image_size < 8 || cfg.gradcheck.image_size % 4 != 0)
        throw ConfigError("gradcheck.image_size must be a multiple of 4 and at least 8");
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    Section top(root, "");
    top.field("seed", cfg.seed);

    Section net = top.child("net");
    net.field("in_channels", cfg.net.in_channels);
    net.field("stem_channels", cfg.net.stem_channels);
    net.field("stem_strides", cfg.net.stem_strides);
    net.field("encoder_channels", cfg.net.encoder_channels);
    net.field("encoder_strides", cfg.net.encoder_strides);
    net.field("decoder_channels", cfg.net.decoder_channels);
    net.field("decoder_kernel", cfg.net.decoder_kernel);
    net.field("image_size", cfg.net.image_size);
    net.field("position_encoding", cfg.net.position_encoding);
    net.field("k_clip", cfg.net.k_clip);
    net.field("gate_init", cfg.net.gate_init);
    net.finish();

    Section train = top.child("train");
    train.field("lr", cfg.train.lr);
    train.field("weight_decay", cfg.train.weight_decay);
    train.field("beta1", cfg.train.beta1);
    train.field("beta2", cfg.train.beta2);
    train.field("eps_adam", cfg.train.eps_adam);
    train.field("epochs", cfg.train.epochs);
    train.field("clamp_eps", cfg.train.clamp_eps);
    train.finish();

    Section data = top.child("data");
    data.field("image_size", cfg.data.image_size);
    data.field("n_samples", cfg.data.n_samples);
    data.field("lesion_count_range", cfg.data.lesion_count_range);
    data.field("lesion_radius_range", cfg.data.lesion_radius_range);
    data.field("distractor_count_range", cfg.data.distractor_count_range);
    data.field("lesion_zones", cfg.data.lesion_zones);
    data.field("distractor_zones", cfg.data.distractor_zones);
    data.field("lesion_contrast", cfg.data.lesion_contrast);
    data.field("edge_softness", cfg.data.edge_softness);
    data.field("noise_std", cfg.data.noise_std);
    data.field("background_texture_scale", cfg.data.background_texture_scale);
    Section split = data.child("split");
    split.field("train", cfg.split.train);
    split.field("val", cfg.split.val);
    split.field("test", cfg.split.test);
    split.finish();
    data.finish();

    Section ablate = top.child("ablate");
    ablate.field("variants", cfg.ablate.variants);
    ablate.field("seeds", cfg.ablate.seeds);
    ablate.finish();

    Section gc = top.child("gradcheck");
    gc.field("seeds", cfg.gradcheck.seeds);
    gc.field("eps", cfg.gradcheck.eps);
    gc.field("tolerance", cfg.gradcheck.tolerance);
    gc.field("image_size", cfg.gradcheck.image_size);
    gc.field("max_coords_per_input", cfg.gradcheck.max_coords_per_input);
    gc.finish();

    top.finish();
    finalize(cfg);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot read configuration file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["net"] = {{"in_channels", cfg.net.in_channels},
                {"stem_channels", cfg.net.stem_channels},
                {"stem_strides", cfg.net.stem_strides},
                {"encoder_channels", cfg.net.encoder_channels},
                {"encoder_strides", cfg.net.encoder_strides},
                {"decoder_channels", cfg.net.decoder_channels},
                {"decoder_kernel", cfg.net.decoder_kernel},
                {"image_size", cfg.net.image_size},
                {"position_encoding", to_string(cfg.net.position_encoding)},
                {"k_clip", cfg.net.k_clip},
                {"gate_init", cfg.net.gate_init}};
    j["train"] = {{"lr", cfg.train.lr},
                  {"weight_decay", cfg.train.weight_decay},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"eps_adam", cfg.train.eps_adam},
                  {"epochs", cfg.train.epochs},
                  {"clamp_eps", cfg.train.clamp_eps}};
    j["data"] = {{"image_size", cfg.data.image_size},
                 {"n_samples", cfg.data.n_samples},
                 {"lesion_count_range", cfg.data.lesion_count_range},
                 {"lesion_radius_range", cfg.data.lesion_radius_range},
                 {"distractor_count_range", cfg.data.distractor_count_range},
                 {"lesion_zones", cfg.data.lesion_zones},
                 {"distractor_zones", cfg.data.distractor_zones},
                 {"lesion_contrast", cfg.data.lesion_contrast},
                 {"edge_softness", cfg.data.edge_softness},
                 {"noise_std", cfg.data.noise_std},
                 {"background_texture_scale", cfg.data.background_texture_scale},
                 {"split", {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}}}};
    j["ablate"] = {{"variants", strategies_json(cfg.ablate.variants)}, {"seeds", cfg.ablate.seeds}};
    j["gradcheck"] = {{"seeds", cfg.gradcheck.seeds},
                      {"eps", cfg.gradcheck.eps},
                      {"tolerance", cfg.gradcheck.tolerance},
                      {"image_size", cfg.gradcheck.image_size},
                      {"max_coords_per_input", cfg.gradcheck.max_coords_per_input}};
    return j.dump(2) + "\n";
}

} // namespace haaseg
