#include "haaseg/axial_attention.hpp"
#include "haaseg/checkpoint.hpp"
#include "haaseg/commands.hpp"
#include "haaseg/config.hpp"
#include "haaseg/errors.hpp"
#include "haaseg/gradcheck_suite.hpp"
#include "haaseg/metrics.hpp"
#include "haaseg/pgm.hpp"
#include "haaseg/training.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

namespace py = pybind11;
using namespace haaseg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// 2-D arrays are taken as a single channel.
Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    if (shape.size() == 2)
        shape.insert(shape.begin(), 1);
    if (shape.size() != 3)
        throw ShapeError("expected a [C,H,W] or [H,W] array, got rank " + std::to_string(a.ndim()));
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

RunConfig resolve(const std::string& json_text) {
    RunConfig cfg = json_text.empty() ? RunConfig{} : parse_run_config(json_text);
    finalize(cfg);
    return cfg;
}

std::vector<SegSample> to_samples(const std::vector<Array>& images, const std::vector<Array>& masks) {
    if (images.size() != masks.size())
        throw ConfigError("images and masks differ in length");
    std::vector<SegSample> out;
    for (std::size_t i = 0; i < images.size(); ++i)
        out.push_back({to_tensor(images[i]), to_tensor(masks[i]), "py" + std::to_string(i)});
    return out;
}

py::dict report_dict(const MetricReport& r) {
    py::dict d;
    const auto values = metric_values(r);
    const auto& names = metric_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        d[py::str(names[i])] = values[i];
    if (r.auc_skipped == r.images)
        d["auc"] = py::none();
    d["images"] = r.images;
    return d;
}

class Network {
public:
    explicit Network(const std::string& config_json) : cfg_(resolve(config_json)), net_(build_network(cfg_.net)) {}

    Array forward(const Array& image) const { return to_array(predict(net_, to_tensor(image))); }

    py::list fit(const std::vector<Array>& images, const std::vector<Array>& masks) {
        const FitResult r = haaseg::fit(net_, to_samples(images, masks), {}, cfg_.train);
        py::list epochs;
        for (const auto& e : r.epochs) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["mean_loss"] = e.mean_loss;
            d["gamma1_mean"] = e.gamma1_mean;
            d["gamma2_mean"] = e.gamma2_mean;
            epochs.append(d);
        }
        return epochs;
    }

    py::dict evaluate(const std::vector<Array>& images, const std::vector<Array>& masks) const {
        return report_dict(evaluate_dataset(net_, to_samples(images, masks)));
    }

    py::bytes checkpoint() const {
        const auto bytes = encode_checkpoint(net_.parameters());
        return py::bytes(bytes.data(), bytes.size());
    }

    void load(const py::bytes& data) {
        const std::string s = data;
        apply_checkpoint(net_, decode_checkpoint(std::vector<char>(s.begin(), s.end())));
    }

    std::uint64_t param_count() const { return count_params(net_).total_params; }
    std::uint64_t macs() const { return count_macs(net_, cfg_.net.image_size); }
    std::string config() const { return dump_run_config(cfg_); }

private:
    RunConfig cfg_;
    HAANet net_;
};

} // namespace

PYBIND11_MODULE(_haaseg, m) {
    m.doc() = "Hybrid axial-attention segmentation core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<IncompatibleCheckpoint>(m, "IncompatibleCheckpoint", PyExc_RuntimeError);

    m.def("encodings", [] {
        std::vector<std::string> out;
        for (auto s : kAllEncodings)
            out.emplace_back(to_string(s));
        return out;
    });
    m.def("resolve_config", [](const std::string& j) { return dump_run_config(resolve(j)); }, py::arg("config_json") = "");

    m.def("mac_count", [](std::uint64_t h, std::uint64_t w, std::uint64_t d) {
        const MacCount c = mac_count(h, w, d);
        py::dict out;
        out["full_attention_macs"] = c.full_attention_macs;
        out["height_axis_macs"] = c.height_axis_macs;
        out["width_axis_macs"] = c.width_axis_macs;
        return out;
    }, py::arg("h"), py::arg("w"), py::arg("d"));

    m.def("generate_dataset", [](const std::string& j) {
        py::list out;
        for (const auto& s : generate_dataset(resolve(j).data))
            out.append(py::make_tuple(s.id, to_array(s.image), to_array(s.mask)));
        return out;
    }, py::arg("config_json") = "");

    m.def("evaluate", [](const std::vector<Array>& preds, const std::vector<Array>& gts) {
        std::vector<Tensor> p, g;
        for (const auto& a : preds)
            p.push_back(to_tensor(a));
        for (const auto& a : gts)
            g.push_back(to_tensor(a));
        return report_dict(evaluate_predictions(p, g));
    }, py::arg("preds"), py::arg("gts"));

    m.def("bce", [](const Array& y, const Array& g) { return bce_loss(to_tensor(y), to_tensor(g)).item(); });

    m.def("encode_pgm", [](const Array& map) { return py::bytes(encode_pgm(to_tensor(map))); });
    m.def("decode_pgm", [](const py::bytes& b) { return to_array(decode_pgm(std::string(b))); });

    m.def("gradcheck", [](const std::string& j) {
        const RunConfig cfg = resolve(j);
        const GradcheckReport r = run_gradcheck(default_gradcheck_components(cfg.gradcheck), cfg.seed,
                                                cfg.gradcheck.seeds, cfg.gradcheck.tolerance);
        py::list out;
        for (const auto& row : r.rows) {
            py::dict d;
            d["name"] = row.name;
            d["max_rel_error"] = row.max_rel_error;
            d["passed"] = row.passed;
            out.append(d);
        }
        return out;
    }, py::arg("config_json") = "");

    m.def("ablate", [](const std::string& j, std::size_t threads) {
        const AblationResult r = run_ablation(resolve(j), resolve_threads(threads));
        return ablation_json(r);
    }, py::arg("config_json") = "", py::arg("threads") = 0);

    py::class_<Network>(m, "Network")
        .def(py::init<const std::string&>(), py::arg("config_json") = "")
        .def("forward", &Network::forward, py::arg("image"))
        .def("fit", &Network::fit, py::arg("images"), py::arg("masks"))
        .def("evaluate", &Network::evaluate, py::arg("images"), py::arg("masks"))
        .def("checkpoint", &Network::checkpoint)
        .def("load", &Network::load, py::arg("data"))
        .def_property_readonly("param_count", &Network::param_count)
        .def_property_readonly("macs", &Network::macs)
        .def_property_readonly("config", &Network::config);
}
