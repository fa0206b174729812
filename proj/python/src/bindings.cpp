#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "pgrecon/checkpoint.hpp"
#include "pgrecon/evaluate.hpp"
#include "pgrecon/gradcheck.hpp"
#include "pgrecon/grid.hpp"
#include "pgrecon/synth.hpp"
#include "pgrecon/tsk_io.hpp"

namespace py = pybind11;
using namespace pgrecon;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

// Arrays are (C, H, W), which is the tensor's own channel-major layout.
Tensor3 to_tensor(const FloatArray& a, Unit unit = Unit::kelvin) {
    if (a.ndim() != 3) throw PreconditionError("expected a (C, H, W) array");
    Tensor3 t(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)), static_cast<int>(a.shape(0)), 0.0f, unit);
    std::memcpy(t.data(), a.data(), t.size() * sizeof(float));
    return t;
}

Tensor3 to_tensor_or_empty(const std::optional<FloatArray>& a, Unit unit) {
    return a ? to_tensor(*a, unit) : Tensor3{};
}

py::array_t<float> to_array(const Tensor3& t) {
    py::array_t<float> out({t.channels(), t.height(), t.width()});
    std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(float));
    return out;
}

Mask3 to_mask(const BoolArray& a) {
    if (a.ndim() != 3) throw PreconditionError("expected a (C, H, W) mask");
    Mask3 m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)), static_cast<int>(a.shape(0)));
    const bool* p = a.data();
    for (std::size_t k = 0; k < m.size(); ++k) m.set(k, p[k]);
    return m;
}

py::array_t<bool> to_array(const Mask3& m) {
    py::array_t<bool> out({m.channels(), m.height(), m.width()});
    bool* p = out.mutable_data();
    for (std::size_t k = 0; k < m.size(); ++k) p[k] = m[k];
    return out;
}

TimeAxis to_axis(const std::vector<double>& days, double period) {
    TimeAxis t{days, period};
    t.validate();
    return t;
}

py::dict scene_dict(const SynthScene& s) {
    py::dict d;
    d["obs"] = to_array(s.obs);
    d["truth"] = to_array(s.truth);
    d["tc_coarse"] = to_array(s.tc_coarse);
    d["tc_fine"] = to_array(s.tc_fine);
    d["features"] = to_array(s.features);
    d["residual"] = to_array(s.residual);
    d["atc_a"] = to_array(s.atc.a);
    d["atc_b"] = to_array(s.atc.b);
    d["atc_phase"] = to_array(s.atc.phase);
    d["amp_w"] = to_array(s.amp.w);
    d["probe_truth"] = to_array(s.probe_truth());
    d["times"] = s.times.days;
    d["period"] = s.times.period;
    d["config"] = synth_config_json(s.cfg);
    return d;
}

py::dict history_dict(const LossHistory& h) {
    py::dict d;
    d["initial_train"] = h.initial_train;
    d["initial_test"] = h.initial_test;
    d["train"] = h.train;
    d["test"] = h.test;
    return d;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["mae"] = r.mae;
    d["rmse"] = r.rmse;
    d["bias"] = r.bias;
    d["n"] = r.n;
    d["label"] = r.label;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gap filling of gridded temperature stacks: annual cycle + amplified driver + residual net.";

    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<LoadError>(m, "LoadError", PyExc_IOError);
    py::register_exception<InitError>(m, "InitError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<ModelState>(m, "Model")
        .def_property_readonly("kind", [](const ModelState& s) { return std::string(model_kind_name(s.kind)); })
        .def_property_readonly("shape", [](const ModelState& s) {
            return py::make_tuple(s.channels(), s.height(), s.width());
        })
        .def_property_readonly("center_driver", [](const ModelState& s) { return s.center_driver; })
        .def_property_readonly("times", [](const ModelState& s) { return s.times.days; })
        .def_property_readonly("atc_a", [](const ModelState& s) { return to_array(s.params.atc.a); })
        .def_property_readonly("atc_b", [](const ModelState& s) { return to_array(s.params.atc.b); })
        .def_property_readonly("atc_phase", [](const ModelState& s) { return to_array(s.params.atc.phase); })
        .def_property_readonly("amp_w", [](const ModelState& s) { return to_array(s.params.amp.w); })
        .def("to_bytes", [](const ModelState& s) {
            const auto b = encode_checkpoint(s);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def_static("from_bytes", [](const py::bytes& b) {
            const std::string s = b;
            return decode_checkpoint(std::vector<std::uint8_t>(s.begin(), s.end()));
        })
        .def("save", [](const ModelState& s, const std::filesystem::path& p) { save_checkpoint(s, p); })
        .def_static("load", &load_checkpoint)
        .def(
            "reconstruct",
            [](const ModelState& s, std::optional<FloatArray> tc_fine, std::optional<FloatArray> features) {
                return to_array(reconstruct(s, s.times, to_tensor_or_empty(tc_fine, Unit::kelvin),
                                            to_tensor_or_empty(features, Unit::dimensionless)));
            },
            py::arg("tc_fine") = py::none(), py::arg("features") = py::none(),
            "Gapless (C, H, W) reconstruction on the model's own time axis.");

    m.def(
        "gen_scene",
        [](const std::string& config_json, std::optional<std::uint64_t> seed) {
            SynthConfig cfg = parse_synth_config(config_json);
            if (seed) cfg.seed = *seed;
            return scene_dict(gen_scene(cfg));
        },
        py::arg("config_json"), py::arg("seed") = py::none(),
        "Synthetic scene from a JSON config. Arrays are (C, H, W) float32, obs has NaN where cloudy.");
    m.def("save_scene", [](const std::string& config_json, const std::filesystem::path& dir) {
        save_scene(dir, gen_scene(parse_synth_config(config_json)));
    });
    m.def("load_scene", [](const std::filesystem::path& dir) { return scene_dict(load_scene(dir)); });

    m.def(
        "holdout_split",
        [](const BoolArray& observed, double fraction, std::uint64_t seed) {
            const auto s = holdout_split(to_mask(observed), fraction, seed);
            return py::make_tuple(to_array(s.train), to_array(s.test));
        },
        py::arg("observed"), py::arg("fraction") = 0.2, py::arg("seed") = 0);

    m.def(
        "fit",
        [](const FloatArray& obs, const BoolArray& train, const std::vector<double>& times,
           std::optional<FloatArray> tc_fine, std::optional<FloatArray> features, const std::string& model,
           int epochs, double lr, std::uint64_t seed, bool center_driver, int base_width,
           std::map<std::string, double> lr_override, std::optional<BoolArray> test, double period, int threads) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.lr = lr;
            cfg.seed = seed;
            cfg.center_driver = center_driver;
            cfg.base_width = base_width;
            for (const auto& [group, value] : lr_override) {
                cfg.lr_override[static_cast<int>(parse_group(group))] = value;
            }
            const Tensor3 o = to_tensor(obs);
            const TimeAxis axis = to_axis(times, period);
            const Tensor3 tc = to_tensor_or_empty(tc_fine, Unit::kelvin);
            const Tensor3 x = to_tensor_or_empty(features, Unit::dimensionless);
            const Mask3 tr = to_mask(train);
            std::optional<Mask3> te;
            if (test) te = to_mask(*test);
            if (threads > 0) set_num_threads(threads);
            FitResult r;
            {
                py::gil_scoped_release release;
                r = fit_model(parse_model_kind(model), FitData{o, axis, tc, x}, tr, cfg, te ? &*te : nullptr);
            }
            return py::make_tuple(r.model, history_dict(r.history));
        },
        py::arg("obs"), py::arg("train"), py::arg("times"), py::arg("tc_fine") = py::none(),
        py::arg("features") = py::none(), py::arg("model") = "full", py::arg("epochs") = 500, py::arg("lr") = 0.1,
        py::arg("seed") = 0, py::arg("center_driver") = false, py::arg("base_width") = 16,
        py::arg("lr_override") = std::map<std::string, double>{}, py::arg("test") = py::none(),
        py::arg("period") = 365.0, py::arg("threads") = 0,
        "Joint masked-L1 training. Returns (Model, history).");

    m.def(
        "evaluate",
        [](const FloatArray& pred, const FloatArray& obs, const BoolArray& mask, const std::string& label) {
            return report_dict(evaluate(to_tensor(pred), to_tensor(obs), to_mask(mask), label));
        },
        py::arg("pred"), py::arg("obs"), py::arg("mask"), py::arg("label") = "test");

    m.def("resample_bilinear", [](const FloatArray& coarse, int height, int width) {
        return to_array(resample_bilinear(to_tensor(coarse), height, width));
    });

    m.def("read_tsk", [](const std::filesystem::path& p) { return to_array(read_tsk(p)); });
    m.def(
        "write_tsk",
        [](const std::filesystem::path& p, const FloatArray& a, const std::string& unit) {
            Unit u = Unit::dimensionless;
            if (unit == "kelvin") {
                u = Unit::kelvin;
            } else if (unit == "reflectance") {
                u = Unit::reflectance;
            } else if (unit != "dimensionless") {
                throw PreconditionError("unknown unit '" + unit + "'");
            }
            write_tsk(p, to_tensor(a, u));
        },
        py::arg("path"), py::arg("array"), py::arg("unit") = "kelvin");

    m.def(
        "gradcheck",
        [](bool flip_amp_sign) {
            GradcheckOptions opts;
            opts.flip_amp_sign = flip_amp_sign;
            const auto rep = run_gradcheck(opts);
            py::dict groups;
            for (const auto& g : rep.groups) groups[py::str(g.group)] = py::make_tuple(g.worst_rel_err, g.pass);
            return py::make_tuple(rep.pass, groups);
        },
        py::arg("flip_amp_sign") = false, "Returns (passed, {group: (worst relative error, passed)}).");

    m.def("set_num_threads", &set_num_threads);
}
