#include "hetcav/bands.hpp"
#include "hetcav/cavity.hpp"
#include "hetcav/config.hpp"
#include "hetcav/error.hpp"
#include "hetcav/geometry.hpp"
#include "hetcav/oracles.hpp"
#include "hetcav/resonance.hpp"
#include "hetcav/selftest.hpp"

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace hetcav;

namespace {

LayerStack make_stack(const std::vector<std::pair<double, double>>& layers, double n_in, double n_out)
{
    LayerStack s;
    s.n_in = n_in;
    s.n_out = n_out;
    for (const auto& [n, d] : layers) {
        s.layers.push_back({n, d});
    }
    return s;
}

py::dict result_dict(const CavityResult& r)
{
    py::dict d;
    d["found"] = r.found;
    d["error"] = r.error;
    d["freq"] = r.freq;
    d["Q"] = r.Q;
    d["Q_decay"] = r.Q_decay;
    d["q_consistent"] = r.q_consistent;
    d["in_gap"] = r.in_gap;
    d["V_norm"] = r.V_norm;
    d["dim"] = r.dim;
    d["damaged_fraction"] = r.damaged_fraction;
    d["field_max_in_core"] = r.field_max_in_core;
    d["gap"] = py::make_tuple(r.gap_lower, r.gap_upper);
    d["realized_length"] = r.realized_length;
    d["runtime_seconds"] = r.runtime_seconds;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Photonic crystal double-heterostructure cavity toolkit (C++ core)";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<LatticeSpec>(m, "LatticeSpec")
        .def(py::init<>())
        .def_readwrite("a", &LatticeSpec::a)
        .def_readwrite("radius", &LatticeSpec::radius)
        .def_readwrite("thickness", &LatticeSpec::thickness)
        .def_readwrite("n_slab", &LatticeSpec::n_slab)
        .def_readwrite("n_hole", &LatticeSpec::n_hole)
        .def_readwrite("periods_x", &LatticeSpec::periods_x)
        .def_readwrite("periods_z", &LatticeSpec::periods_z)
        .def_readwrite("w1_defect", &LatticeSpec::w1_defect)
        .def_readwrite("a_nm", &LatticeSpec::a_nm)
        .def("validate", &LatticeSpec::validate);

    py::class_<HeterostructureProfile>(m, "Profile")
        .def_static("step", &HeterostructureProfile::step, py::arg("delta_n"), py::arg("m"),
                    py::arg("delta_length") = 0.0)
        .def_static("gradual", &HeterostructureProfile::gradual, py::arg("l0"), py::arg("steps"),
                    py::arg("delta_n_step"))
        .def_static("uniform", &HeterostructureProfile::uniform)
        .def("total_length", &HeterostructureProfile::total_length)
        .def("core_length", &HeterostructureProfile::core_length)
        .def("outer_delta_n", &HeterostructureProfile::outer_delta_n);

    m.def("index_at", &index_at, py::arg("lattice"), py::arg("profile"), py::arg("x"),
          "Background index at position x (units of a).");

    m.def(
        "rasterize_2d",
        [](const LatticeSpec& spec, const HeterostructureProfile& profile, int resolution) {
            const auto g = rasterize(spec, profile, resolution, Dim::Two);
            py::array_t<double> out({g.dims[1], g.dims[0]});
            std::copy(g.eps.begin(), g.eps.end(), out.mutable_data());
            return py::make_tuple(out, py::make_tuple(g.origin[0], g.origin[1]), g.spacing[0]);
        },
        py::arg("lattice"), py::arg("profile"), py::arg("resolution"),
        "Permittivity map as (array[z, x], (x0, z0), cell).");

    m.def("effective_slab_index", py::overload_cast<const LatticeSpec&, double>(&effective_slab_index),
          py::arg("lattice"), py::arg("target_freq") = 0.333);

    m.def(
        "transfer_matrix",
        [](const std::vector<std::pair<double, double>>& layers, double freq, double n_in, double n_out) {
            const auto t = transfer_matrix(make_stack(layers, n_in, n_out), freq);
            return py::make_tuple(t.R, t.T);
        },
        py::arg("layers"), py::arg("freq"), py::arg("n_in") = 1.0, py::arg("n_out") = 1.0,
        "(R, T) of a stack given as [(index, thickness), ...].");

    m.def(
        "fabry_perot_q",
        [](const std::vector<std::pair<double, double>>& layers, double f_lo, double f_hi, double n_in,
           double n_out) {
            const auto r = fabry_perot_q(make_stack(layers, n_in, n_out), f_lo, f_hi);
            return py::make_tuple(r.freq, r.Q);
        },
        py::arg("layers"), py::arg("f_lo"), py::arg("f_hi"), py::arg("n_in") = 1.0, py::arg("n_out") = 1.0);

    m.def(
        "bragg_cavity",
        [](double n_high, double n_low, int pairs, double f0) {
            std::vector<std::pair<double, double>> out;
            for (const auto& l : bragg_cavity(n_high, n_low, pairs, f0).layers) {
                out.emplace_back(l.index, l.thickness);
            }
            return out;
        },
        py::arg("n_high"), py::arg("n_low"), py::arg("pairs"), py::arg("f0"));

    m.def(
        "bulk_bands",
        [](const LatticeSpec& spec, double background_index, const std::vector<std::pair<double, double>>& k,
           int n_planewaves, int n_bands) {
            std::vector<Vec2> ks;
            for (const auto& [kx, kz] : k) {
                ks.push_back({kx, kz});
            }
            LatticeSpec bulk = spec;
            bulk.w1_defect = false;
            return compute_bulk_bands(bulk, background_index, Polarization::TE, ks, n_planewaves, n_bands).bands;
        },
        py::arg("lattice"), py::arg("background_index"), py::arg("k_points"), py::arg("n_planewaves") = 441,
        py::arg("n_bands") = 8, "TE bands (a/lambda) per k point, k in units of 2 pi/a.");

    m.def(
        "harmonic_inversion",
        [](const std::vector<std::complex<double>>& samples, double dt, double f_lo, double f_hi) {
            const auto r = harmonic_inversion(samples, dt, f_lo, f_hi);
            py::list modes;
            for (const auto& md : r.modes) {
                py::dict d;
                d["freq"] = md.freq;
                d["Q"] = md.Q;
                d["amplitude"] = md.amplitude;
                d["phase"] = md.phase;
                modes.append(d);
            }
            return modes;
        },
        py::arg("samples"), py::arg("dt"), py::arg("f_lo"), py::arg("f_hi"),
        "Decaying modes inside [f_lo, f_hi], strongest first.");

    m.def(
        "config_json", [](const std::string& text) { return config_to_json(parse_config(text)); }, py::arg("text"),
        "Validates a YAML or JSON config and returns the full settings as JSON text.");

    m.def(
        "simulate",
        [](const std::string& config_text, std::optional<std::filesystem::path> artifact_dir) {
            const auto c = parse_config(config_text);
            CavityResult r;
            {
                py::gil_scoped_release release;
                r = simulate_cavity(c.base(), artifact_dir);
            }
            return result_dict(r);
        },
        py::arg("config_text"), py::arg("artifact_dir") = py::none(),
        "Runs the base cavity of a config and returns the extracted resonance.");

    m.def(
        "selftest",
        []() {
            std::vector<CheckResult> checks;
            {
                py::gil_scoped_release release;
                checks = run_selftest();
            }
            py::list out;
            for (const auto& c : checks) {
                out.append(py::make_tuple(c.name, c.passed, c.detail));
            }
            return out;
        },
        "Runs the oracle battery; returns [(name, passed, detail), ...].");
}
