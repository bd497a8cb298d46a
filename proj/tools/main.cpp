// hetcav: command-line driver for the heterostructure cavity toolkit.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include "hetcav/bands.hpp"
#include "hetcav/cavity.hpp"
#include "hetcav/config.hpp"
#include "hetcav/error.hpp"
#include "hetcav/geometry.hpp"
#include "hetcav/selftest.hpp"
#include "hetcav/sweep.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hetcav;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericalError = 2;

struct GlobalOptions {
    std::string config;
    std::string out;
    std::optional<int> resolution;
    std::optional<int> workers;
    std::optional<int> dim;
};

ExperimentConfig load(const GlobalOptions& g, bool required)
{
    if (g.config.empty() && required) {
        throw ConfigError("this subcommand needs --config PATH");
    }
    ExperimentConfig c = g.config.empty() ? parse_config("") : load_config(g.config);
    if (g.resolution) {
        c.solver.resolution = *g.resolution;
    }
    if (g.workers) {
        c.workers = *g.workers;
    }
    if (g.dim) {
        if (*g.dim != 2 && *g.dim != 3) {
            throw ConfigError(fmt::format("--dim must be 2 or 3, got {}", *g.dim));
        }
        c.solver.dim = *g.dim == 3 ? Dim::Three : Dim::Two;
    }
    if (!g.out.empty()) {
        c.output_dir = g.out;
    }
    c.validate();
    return c;
}

void print_result(const CavityResult& r)
{
    if (!r.found) {
        fmt::print("no resonance found: {}\n", r.error);
        return;
    }
    fmt::print("f = {:.6f} a/lambda, Q = {:.4g} (decay fit {:.4g}{}), V = {:.3f} (lambda/n)^{}\n", r.freq, r.Q,
               r.Q_decay, r.q_consistent ? "" : ", inconsistent", r.V_norm, r.dim);
    fmt::print("mode gap [{:.6f}, {:.6f}], in gap: {}, damaged fraction {:.3f}, field max in core: {}\n", r.gap_lower,
               r.gap_upper, r.in_gap ? "yes" : "no", r.damaged_fraction, r.field_max_in_core ? "yes" : "no");
    if (!r.error.empty()) {
        fmt::print("note: {}\n", r.error);
    }
}

int cmd_bands(const GlobalOptions& g)
{
    auto c = load(g, false);
    if (c.solver.dim != Dim::Two) {
        throw ConfigError("band structures are computed for the 2D effective-index model only (use --dim 2)");
    }
    const fs::path out = c.output_dir;
    const auto& b = c.bands;
    const double n_eff = effective_slab_index(c.lattice, c.solver.target_freq);
    LatticeSpec spec = c.lattice.normalized();
    fmt::print("effective index at a/lambda = {:g}: {:.6f}\n", c.solver.target_freq, n_eff);
    BandStructure bands;
    if (b.kind == BandsSettings::Kind::Bulk) {
        spec.w1_defect = false;
        bands = compute_bulk_bands(spec, n_eff, b.polarization, hexagonal_k_path(b.per_segment), b.n_planewaves,
                                   b.n_bands, c.workers);
        if (const auto gap = lowest_gap(bands)) {
            fmt::print("lowest gap: [{:.5f}, {:.5f}] above band {}\n", gap->lower, gap->upper, gap->below_band);
        } else {
            fmt::print("no complete gap\n");
        }
    } else {
        const int npw = default_waveguide_planewaves(b.supercell_rows);
        const auto wg = compute_waveguide_bands(spec, n_eff, b.supercell_rows, default_waveguide_k(), npw,
                                                std::max(b.n_bands, 14), c.workers);
        bands = wg.bands;
        fmt::print("bulk gap [{:.5f}, {:.5f}]\n", wg.bulk_gap.lower, wg.bulk_gap.upper);
        if (wg.design_band.back() >= 0) {
            fmt::print("design band edge at kx = 0.5: {:.6f}\n", bands.bands.back()[wg.design_band.back()]);
        }
    }
    write_bands_csv(out / "bands.csv", bands);
    std::vector<PlotSeries> series;
    const std::size_t nb = bands.bands.empty() ? 0 : bands.bands.front().size();
    for (std::size_t i = 0; i < nb; ++i) {
        PlotSeries s{fmt::format("band {}", i), {}, {}};
        for (std::size_t k = 0; k < bands.bands.size(); ++k) {
            s.x.push_back(static_cast<double>(k));
            s.y.push_back(bands.bands[k][i]);
        }
        series.push_back(std::move(s));
    }
    PlotSpec p;
    p.title = b.kind == BandsSettings::Kind::Bulk ? "Bulk bands (G-K-M-G)" : "W1 supercell bands, kx from 0.3 to 0.5";
    p.x_label = "k index";
    p.y_label = "frequency a/lambda";
    p.log_y = false;
    write_svg(out / "bands.svg", p, series);
    fmt::print("wrote {} and {}\n", (out / "bands.csv").string(), (out / "bands.svg").string());
    return kOk;
}

int cmd_simulate(const GlobalOptions& g)
{
    auto c = load(g, false);
    auto setup = c.base();
    setup.solver.workers = c.workers;
    const fs::path out = c.output_dir;
    const auto r = simulate_cavity(setup, out);
    print_result(r);
    write_analysis_csv(out / "analysis.csv", {{c.name, r}});
    {
        std::ofstream cfg(out / "config.json");
        cfg << config_to_json(c) << '\n';
    }
    fmt::print("artifacts in {} ({:.1f} s)\n", out.string(), r.runtime_seconds);
    return r.found ? kOk : kNumericalError;
}

int cmd_analyze(const GlobalOptions& g, const std::vector<std::string>& dirs)
{
    if (dirs.empty()) {
        throw ConfigError("analyze needs at least one run directory");
    }
    std::vector<std::pair<std::string, CavityResult>> runs;
    bool all = true;
    for (const auto& d : dirs) {
        const fs::path dir(d);
        auto r = analyze_directory(dir);
        all = all && r.found;
        fmt::print("{}: ", dir.filename().empty() ? d : dir.filename().string());
        print_result(r);
        runs.emplace_back(dir.filename().empty() ? d : dir.filename().string(), std::move(r));
    }
    const fs::path out = g.out.empty() ? fs::path("analysis.csv") : fs::path(g.out);
    write_analysis_csv(out, runs);
    fmt::print("wrote {}\n", out.string());
    return all ? kOk : kNumericalError;
}

int cmd_sweep(const GlobalOptions& g)
{
    auto c = load(g, true);
    if (c.sweep.axis == SweepAxis::None) {
        throw ConfigError("the config has no sweep section");
    }
    const fs::path out = c.output_dir;
    fmt::print("sweep '{}': {} points over {}, {} workers\n", c.name, c.point_count(), sweep_axis_name(c.sweep.axis),
               c.workers);
    const auto rows = run_sweep(c, c.workers, [&](const SweepRow& r) {
        fmt::print("  [{}] {} = {}: {}\n", r.index, sweep_axis_name(c.sweep.axis), r.label,
                   r.result.found ? fmt::format("f = {:.6f}, Q = {:.4g} ({:.0f} s)", r.result.freq, r.result.Q,
                                                r.result.runtime_seconds)
                                  : "failed: " + r.result.error);
        std::fflush(stdout);
    });
    write_sweep_csv(out / (c.name + ".csv"), c, rows);
    write_sweep_plot(out / (c.name + ".svg"), c, rows);
    {
        std::ofstream cfg(out / (c.name + ".config.json"));
        cfg << config_to_json(c) << '\n';
    }
    fmt::print("wrote {}\n", (out / (c.name + ".csv")).string());
    return kOk;
}

int cmd_replicate(const GlobalOptions& g, bool quick)
{
    auto c = load(g, false);
    if (c.solver.dim != Dim::Two) {
        throw ConfigError("the replication suite runs in 2D (use --dim 2)");
    }
    ReplicateOptions opt;
    opt.solver = c.solver;
    opt.lattice = c.lattice;
    opt.workers = c.workers;
    opt.seed = c.seed;
    opt.quick = quick;
    const fs::path out = g.out.empty() ? fs::path("replicate") : fs::path(g.out);
    replicate(out, opt, [](const SweepRow& r) {
        fmt::print("  {}: {}\n", r.label,
                   r.result.found ? fmt::format("f = {:.6f}, Q = {:.4g}", r.result.freq, r.result.Q)
                                  : "failed: " + r.result.error);
        std::fflush(stdout);
    });
    fmt::print("wrote {}\n", (out / "report.md").string());
    return kOk;
}

int cmd_selftest(const GlobalOptions& g)
{
    const auto checks = run_selftest(g.workers.value_or(1));
    fmt::print("{}", format_checks(checks));
    for (const auto& c : checks) {
        if (!c.passed) {
            return kNumericalError;
        }
    }
    return kOk;
}

int cmd_geometry_dump(const GlobalOptions& g)
{
    auto c = load(g, false);
    const auto& st = c.solver;
    const LatticeSpec lattice = c.lattice.normalized();
    RasterOptions ro;
    ro.pad_cells = st.pml_cells;
    DielectricGrid grid;
    nlohmann::json model;
    if (st.dim == Dim::Two) {
        const auto reduced = reduce_to_2d(lattice, c.profile, st.target_freq);
        grid = rasterize(reduced.spec, reduced.profile, st.resolution, Dim::Two, ro);
        model = {{"kind", "2d effective index"},
                 {"target_freq", st.target_freq},
                 {"n_center_effective", reduced.profile.center_index(reduced.spec)}};
    } else {
        grid = rasterize(lattice, c.profile, st.resolution, Dim::Three, ro);
        model = {{"kind", "3d slab"}};
    }
    const fs::path out = c.output_dir;
    fs::create_directories(out);
    const fs::path raw = out / "epsilon.f64";
    {
        std::ofstream f(raw, std::ios::binary);
        static_assert(std::endian::native == std::endian::little, "raw output assumes a little-endian host");
        f.write(reinterpret_cast<const char*>(grid.eps.data()),
                static_cast<std::streamsize>(grid.eps.size() * sizeof(double)));
        if (!f) {
            throw ConfigError(fmt::format("cannot write {}", raw.string()));
        }
    }
    nlohmann::json side = {
        {"file", raw.filename().string()},
        {"dtype", "float64 little-endian"},
        {"quantity", "relative permittivity"},
        {"order", "x fastest, then z, then y"},
        {"dims", grid.dims},
        {"resolution", grid.resolution},
        {"origin", grid.origin},
        {"spacing", grid.spacing},
        {"dim", static_cast<int>(grid.dim)},
        {"pad_cells", ro.pad_cells},
        {"model", model},
        {"spec", nlohmann::json::parse(config_to_json(c))},
    };
    std::ofstream(out / "epsilon.json") << side.dump(2) << '\n';
    fmt::print("wrote {} ({} x {} x {} cells) and its sidecar\n", raw.string(), grid.dims[0], grid.dims[1],
               grid.dims[2]);
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Double-heterostructure photonic crystal cavity toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions g;
    app.add_option("--config", g.config, "experiment config (YAML or JSON)");
    app.add_option("--out", g.out, "output directory (analyze: output CSV file)");
    app.add_option("--resolution", g.resolution, "grid cells per lattice period")->check(CLI::Range(8, 256));
    app.add_option("--workers", g.workers, "worker threads")->check(CLI::Range(1, 1024));
    app.add_option("--dim", g.dim, "2 (effective index) or 3 (slab)")->check(CLI::IsMember({2, 3}));

    auto* bands = app.add_subcommand("bands", "bulk or W1 band structure (plane waves)");
    auto* simulate = app.add_subcommand("simulate", "one cavity ringdown with artifacts");
    auto* analyze = app.add_subcommand("analyze", "re-run resonance analysis on simulate output");
    std::vector<std::string> dirs;
    analyze->add_option("runs", dirs, "run directories written by simulate")->required();
    auto* sweep = app.add_subcommand("sweep", "run the sweep in the config");
    auto* replicate_cmd = app.add_subcommand("replicate", "canonical 2D suite and markdown report");
    bool quick = false;
    replicate_cmd->add_flag("--quick", quick, "reduced suite for smoke runs");
    auto* selftest = app.add_subcommand("selftest", "oracle battery with a pass/fail table");
    auto* geometry = app.add_subcommand("geometry", "geometry tools");
    geometry->require_subcommand(1);
    auto* dump = geometry->add_subcommand("dump", "write the permittivity grid and a JSON sidecar");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (bands->parsed()) return cmd_bands(g);
        if (simulate->parsed()) return cmd_simulate(g);
        if (analyze->parsed()) return cmd_analyze(g, dirs);
        if (sweep->parsed()) return cmd_sweep(g);
        if (replicate_cmd->parsed()) return cmd_replicate(g, quick);
        if (selftest->parsed()) return cmd_selftest(g);
        if (dump->parsed()) return cmd_geometry_dump(g);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const NumericalError& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return kNumericalError;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kNumericalError;
    }
    return kConfigError;
}
