#include "hetcav/config.hpp"

#include "hetcav/error.hpp"

#include "json.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace hetcav {

std::string_view sweep_axis_name(SweepAxis axis)
{
    switch (axis) {
    case SweepAxis::DeltaN: return "delta_n";
    case SweepAxis::CavityM: return "cavity_m";
    case SweepAxis::DeltaL: return "delta_L";
    case SweepAxis::GradualRows: return "gradual_rows";
    case SweepAxis::None: break;
    }
    return "none";
}

std::size_t SweepSpec::size() const
{
    return axis == SweepAxis::GradualRows ? rows.size() : axis == SweepAxis::None ? 0 : values.size();
}

namespace {

void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!node.IsMap()) {
        throw ConfigError(fmt::format("'{}' must be a mapping", where));
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!ok.contains(key)) {
            throw ConfigError(fmt::format("unknown key '{}' in '{}'", key, where));
        }
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where)
{
    if (const auto v = node[key]) {
        try {
            out = v.as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError(fmt::format("'{}.{}' has the wrong type", where, key));
        }
    }
}

std::vector<double> read_list(const YAML::Node& node, const std::string& where)
{
    if (!node.IsSequence()) {
        throw ConfigError(fmt::format("'{}' must be a list", where));
    }
    try {
        return node.as<std::vector<double>>();
    } catch (const YAML::Exception&) {
        throw ConfigError(fmt::format("'{}' must be a list of numbers", where));
    }
}

GradualRow read_row(const YAML::Node& node, const std::string& where)
{
    check_keys(node, where, {"l", "delta_n"});
    if (!node["l"] || !node["delta_n"]) {
        throw ConfigError(fmt::format("'{}' needs 'l' (l0, l1, ...) and 'delta_n'", where));
    }
    const auto l = read_list(node["l"], where + ".l");
    if (l.size() < 2) {
        throw ConfigError(fmt::format("'{}.l' needs l0 and at least one step", where));
    }
    GradualRow row;
    row.l0 = l.front();
    row.steps.assign(l.begin() + 1, l.end());
    read(node, "delta_n", row.delta_n_step, where);
    return row;
}

} // namespace

ExperimentConfig parse_config(const std::string& text)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& ex) {
        throw ConfigError(fmt::format("config parse error: {}", ex.what()));
    }
    ExperimentConfig c;
    if (!root || root.IsNull()) {
        c.validate();
        return c;
    }
    check_keys(root, "config", {"name", "seed", "output", "workers", "lattice", "profile", "solver", "sweep", "bands"});
    read(root, "name", c.name, "config");
    read(root, "seed", c.seed, "config");
    read(root, "workers", c.workers, "config");
    if (root["output"]) {
        c.output_dir = root["output"].as<std::string>();
    }

    if (const auto n = root["lattice"]) {
        check_keys(n, "lattice", {"a", "radius", "thickness", "n_slab", "n_hole", "periods_x", "periods_z",
                                  "w1_defect", "a_nm"});
        auto& L = c.lattice;
        read(n, "a", L.a, "lattice");
        read(n, "radius", L.radius, "lattice");
        read(n, "thickness", L.thickness, "lattice");
        read(n, "n_slab", L.n_slab, "lattice");
        read(n, "n_hole", L.n_hole, "lattice");
        read(n, "periods_x", L.periods_x, "lattice");
        read(n, "periods_z", L.periods_z, "lattice");
        read(n, "w1_defect", L.w1_defect, "lattice");
        read(n, "a_nm", L.a_nm, "lattice");
    }

    if (const auto n = root["profile"]) {
        check_keys(n, "profile", {"type", "delta_n", "m", "delta_length", "delta_length_nm", "l0", "steps",
                                  "delta_n_step", "n_center"});
        std::string type = "step";
        read(n, "type", type, "profile");
        if (type == "step") {
            StepProfile s;
            read(n, "delta_n", s.delta_n, "profile");
            read(n, "m", s.m, "profile");
            read(n, "delta_length", s.delta_length, "profile");
            if (n["delta_length_nm"]) {
                if (n["delta_length"]) {
                    throw ConfigError("give either 'profile.delta_length' or 'profile.delta_length_nm', not both");
                }
                double nm = 0.0;
                read(n, "delta_length_nm", nm, "profile");
                s.delta_length = nm / c.lattice.a_nm;
            }
            c.profile.shape = s;
        } else if (type == "gradual") {
            GradualProfile g;
            read(n, "l0", g.l0, "profile");
            if (n["steps"]) {
                g.steps = read_list(n["steps"], "profile.steps");
            }
            read(n, "delta_n_step", g.delta_n_step, "profile");
            c.profile.shape = g;
        } else {
            throw ConfigError(fmt::format("profile.type must be 'step' or 'gradual', got '{}'", type));
        }
        if (n["n_center"]) {
            double v = 0.0;
            read(n, "n_center", v, "profile");
            c.profile.n_center = v;
        }
    }

    if (const auto n = root["solver"]) {
        check_keys(n, "solver", {"resolution", "courant", "pml_cells", "ringdown_steps", "wait_widths",
                                 "min_bandwidth", "target_freq", "band_rows", "dim", "narrowband_recheck"});
        auto& s = c.solver;
        read(n, "resolution", s.resolution, "solver");
        read(n, "courant", s.courant, "solver");
        read(n, "pml_cells", s.pml_cells, "solver");
        read(n, "ringdown_steps", s.ringdown_steps, "solver");
        read(n, "wait_widths", s.wait_widths, "solver");
        read(n, "min_bandwidth", s.min_bandwidth, "solver");
        read(n, "target_freq", s.target_freq, "solver");
        read(n, "band_rows", s.band_rows, "solver");
        read(n, "narrowband_recheck", s.narrowband_recheck, "solver");
        int dim = 2;
        read(n, "dim", dim, "solver");
        if (dim != 2 && dim != 3) {
            throw ConfigError(fmt::format("solver.dim must be 2 or 3, got {}", dim));
        }
        s.dim = dim == 3 ? Dim::Three : Dim::Two;
    }

    if (const auto n = root["bands"]) {
        check_keys(n, "bands", {"kind", "polarization", "n_planewaves", "per_segment", "n_bands", "supercell_rows"});
        auto& b = c.bands;
        std::string kind = "bulk", pol = "TE";
        read(n, "kind", kind, "bands");
        read(n, "polarization", pol, "bands");
        if (kind != "bulk" && kind != "waveguide") {
            throw ConfigError(fmt::format("bands.kind must be 'bulk' or 'waveguide', got '{}'", kind));
        }
        if (pol != "TE" && pol != "TM") {
            throw ConfigError(fmt::format("bands.polarization must be 'TE' or 'TM', got '{}'", pol));
        }
        b.kind = kind == "bulk" ? BandsSettings::Kind::Bulk : BandsSettings::Kind::Waveguide;
        b.polarization = pol == "TE" ? Polarization::TE : Polarization::TM;
        read(n, "n_planewaves", b.n_planewaves, "bands");
        read(n, "per_segment", b.per_segment, "bands");
        read(n, "n_bands", b.n_bands, "bands");
        read(n, "supercell_rows", b.supercell_rows, "bands");
    }

    if (const auto n = root["sweep"]) {
        check_keys(n, "sweep", {"delta_n", "cavity_m", "delta_L", "gradual_rows"});
        if (n.size() != 1) {
            throw ConfigError(fmt::format("exactly one sweep axis may be active, found {}", n.size()));
        }
        auto& sw = c.sweep;
        if (n["delta_n"]) {
            sw.axis = SweepAxis::DeltaN;
            sw.values = read_list(n["delta_n"], "sweep.delta_n");
        } else if (n["cavity_m"]) {
            sw.axis = SweepAxis::CavityM;
            sw.values = read_list(n["cavity_m"], "sweep.cavity_m");
        } else if (n["delta_L"]) {
            sw.axis = SweepAxis::DeltaL;
            sw.values = read_list(n["delta_L"], "sweep.delta_L");
        } else {
            sw.axis = SweepAxis::GradualRows;
            const auto rows = n["gradual_rows"];
            if (!rows.IsSequence()) {
                throw ConfigError("'sweep.gradual_rows' must be a list");
            }
            for (std::size_t i = 0; i < rows.size(); ++i) {
                sw.rows.push_back(read_row(rows[i], fmt::format("sweep.gradual_rows[{}]", i)));
            }
        }
        if (sw.size() == 0) {
            throw ConfigError("the sweep axis has no values");
        }
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open config {}", path.string()));
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void ExperimentConfig::validate() const
{
    lattice.validate();
    profile.validate(lattice);
    solver.validate();
    if (workers < 1) {
        throw ConfigError("workers must be at least 1");
    }
    if (bands.n_planewaves < 1 || bands.per_segment < 1 || bands.n_bands < 1) {
        throw ConfigError("bands.n_planewaves, per_segment and n_bands must be positive");
    }
    switch (sweep.axis) {
    case SweepAxis::DeltaN:
        for (double v : sweep.values) {
            if (!(v >= 0.0 && v <= 0.1)) {
                throw ConfigError(fmt::format("sweep.delta_n value {} outside [0, 0.1]", v));
            }
        }
        break;
    case SweepAxis::CavityM:
        for (double v : sweep.values) {
            if (v < 1.0 || v != std::floor(v)) {
                throw ConfigError(fmt::format("sweep.cavity_m value {} must be an integer >= 1", v));
            }
        }
        break;
    case SweepAxis::DeltaL:
    case SweepAxis::GradualRows:
    case SweepAxis::None:
        break;
    }
    if ((sweep.axis == SweepAxis::DeltaN || sweep.axis == SweepAxis::CavityM || sweep.axis == SweepAxis::DeltaL) &&
        !profile.is_step()) {
        throw ConfigError(fmt::format("sweep.{} needs a step profile", sweep_axis_name(sweep.axis)));
    }
    // Every point must itself be a valid profile.
    for (std::size_t i = 0; i < point_count(); ++i) {
        point(i).profile.validate(lattice);
    }
}

CavitySetup ExperimentConfig::base() const
{
    return {lattice, profile, solver, seed};
}

CavitySetup ExperimentConfig::point(std::size_t i) const
{
    if (i >= point_count()) {
        throw ConfigError(fmt::format("sweep point {} out of range", i));
    }
    CavitySetup s = base();
    s.seed = seed + i;
    if (sweep.axis == SweepAxis::GradualRows) {
        const auto& r = sweep.rows[i];
        s.profile.shape = GradualProfile{r.l0, r.steps, r.delta_n_step};
        return s;
    }
    auto st = std::get<StepProfile>(profile.shape);
    const double v = sweep.values[i];
    switch (sweep.axis) {
    case SweepAxis::DeltaN: st.delta_n = v; break;
    case SweepAxis::CavityM: st.m = static_cast<int>(v); break;
    case SweepAxis::DeltaL: st.delta_length = v / lattice.a_nm; break;
    default: break;
    }
    s.profile.shape = st;
    return s;
}

std::string ExperimentConfig::point_label(std::size_t i) const
{
    if (sweep.axis == SweepAxis::GradualRows) {
        const auto& r = sweep.rows[i];
        std::string l = fmt::format("l={:g}", r.l0);
        for (double s : r.steps) {
            l += fmt::format(";{:g}", s);
        }
        return fmt::format("{} dn={:g}", l, r.delta_n_step);
    }
    return fmt::format("{:g}", sweep.values.at(i));
}

std::string config_to_json(const ExperimentConfig& c)
{
    using nlohmann::json;
    const auto& L = c.lattice;
    json j = {
        {"name", c.name},
        {"seed", c.seed},
        {"workers", c.workers},
        {"output", c.output_dir.string()},
        {"lattice",
         {{"a", L.a}, {"radius", L.radius}, {"thickness", L.thickness}, {"n_slab", L.n_slab}, {"n_hole", L.n_hole},
          {"periods_x", L.periods_x}, {"periods_z", L.periods_z}, {"w1_defect", L.w1_defect}, {"a_nm", L.a_nm}}},
    };
    json p;
    if (const auto* st = std::get_if<StepProfile>(&c.profile.shape)) {
        p = {{"type", "step"}, {"delta_n", st->delta_n}, {"m", st->m}, {"delta_length", st->delta_length}};
    } else {
        const auto& g = std::get<GradualProfile>(c.profile.shape);
        p = {{"type", "gradual"}, {"l0", g.l0}, {"steps", g.steps}, {"delta_n_step", g.delta_n_step}};
    }
    if (c.profile.n_center) {
        p["n_center"] = *c.profile.n_center;
    }
    j["profile"] = p;
    const auto& s = c.solver;
    j["solver"] = {{"resolution", s.resolution},       {"courant", s.courant},
                   {"pml_cells", s.pml_cells},         {"ringdown_steps", s.ringdown_steps},
                   {"wait_widths", s.wait_widths},     {"min_bandwidth", s.min_bandwidth},
                   {"target_freq", s.target_freq},     {"band_rows", s.band_rows},
                   {"dim", static_cast<int>(s.dim)},   {"narrowband_recheck", s.narrowband_recheck}};
    const auto& b = c.bands;
    j["bands"] = {{"kind", b.kind == BandsSettings::Kind::Bulk ? "bulk" : "waveguide"},
                  {"polarization", b.polarization == Polarization::TE ? "TE" : "TM"},
                  {"n_planewaves", b.n_planewaves},
                  {"per_segment", b.per_segment},
                  {"n_bands", b.n_bands},
                  {"supercell_rows", b.supercell_rows}};
    if (c.sweep.axis == SweepAxis::GradualRows) {
        json rows = json::array();
        for (const auto& r : c.sweep.rows) {
            std::vector<double> l{r.l0};
            l.insert(l.end(), r.steps.begin(), r.steps.end());
            rows.push_back({{"l", l}, {"delta_n", r.delta_n_step}});
        }
        j["sweep"] = {{"gradual_rows", rows}};
    } else if (c.sweep.axis != SweepAxis::None) {
        j["sweep"] = {{std::string(sweep_axis_name(c.sweep.axis)), c.sweep.values}};
    }
    return j.dump(2);
}

} // namespace hetcav
