#include "hetcav/cavity.hpp"

#include "hetcav/error.hpp"

#include "json.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace hetcav {

namespace fs = std::filesystem;

void SolverSettings::validate() const
{
    if (resolution < kMinResolution) {
        throw ConfigError(fmt::format("resolution {} is below the minimum of {}", resolution, kMinResolution));
    }
    if (!(courant > 0.0 && courant < 1.0)) {
        throw ConfigError(fmt::format("courant factor {} must lie in (0, 1)", courant));
    }
    if (pml_cells < 8) {
        throw ConfigError(fmt::format("pml_cells {} is below the minimum of 8", pml_cells));
    }
    if (ringdown_steps < 1024) {
        throw ConfigError("ringdown_steps must be at least 1024");
    }
    if (!(wait_widths >= 0.0) || !(min_bandwidth > 0.0) || !(target_freq > 0.0)) {
        throw ConfigError("wait_widths must be >= 0; min_bandwidth and target_freq must be positive");
    }
    if (band_rows < 3 || band_rows % 2 == 0) {
        throw ConfigError(fmt::format("band_rows {} must be odd and at least 3", band_rows));
    }
    if (workers < 1) {
        throw ConfigError("workers must be at least 1");
    }
}

double fdtd_band_edge(const LatticeSpec& spec2d, double background_index, const SolverSettings& settings)
{
    BlochOptions opt;
    opt.resolution = settings.resolution;
    opt.rows = settings.band_rows;
    opt.symmetric_axis_source = true;
    opt.courant = settings.courant;
    opt.workers = settings.workers;
    opt.f_min = 0.75 * settings.target_freq;
    opt.f_max = 1.25 * settings.target_freq;
    const auto freqs = bloch_spectrum(spec2d, {0.5, 0.0}, background_index, opt);
    if (freqs.empty()) {
        throw NumericalError(fmt::format("no guided mode near a/lambda = {} at background index {}",
                                         settings.target_freq, background_index));
    }
    return *std::min_element(freqs.begin(), freqs.end(), [&](double a, double b) {
        return std::abs(a - settings.target_freq) < std::abs(b - settings.target_freq);
    });
}

BandEdges fdtd_mode_gap(const LatticeSpec& spec2d, double n_center, double n_outer, const SolverSettings& settings)
{
    BandEdges e;
    e.lower = fdtd_band_edge(spec2d, n_center, settings);
    e.upper = n_outer == n_center ? e.lower : fdtd_band_edge(spec2d, n_outer, settings);
    return e;
}

namespace {

double elapsed(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Sample index of the first probe sample at or after `step`.
long first_index(const ProbeRecord& rec, long step)
{
    return std::max(0L, (step + rec.stride - 1) / rec.stride - 1);
}

} // namespace

CavityResult analyze_ringdown(const RingdownData& data)
{
    CavityResult r;
    r.dim = static_cast<int>(data.grid.dim);
    r.gap_lower = data.gap_lower;
    r.gap_upper = data.gap_upper;

    // Primary probe: the one whose selected mode is strongest.
    const Mode* best = nullptr;
    HarmonicInversionResult best_hi;
    std::string diagnostics;
    for (const auto& rec : data.probes) {
        auto hi = harmonic_inversion(rec, data.f_lo, data.f_hi, first_index(rec, data.first_step));
        if (hi.empty()) {
            diagnostics += hi.diagnostic + "; ";
            continue;
        }
        const Mode* m = select_mode(hi, data.f_lo, data.f_hi);
        if (!best || m->amplitude > best->amplitude) {
            best_hi = std::move(hi);
            best = select_mode(best_hi, data.f_lo, data.f_hi);
        }
    }
    if (!best) {
        r.error = "no mode in gap: " + diagnostics;
        return r;
    }
    r.found = true;
    r.freq = best->freq;
    r.Q = best->Q;
    r.modes = best_hi.modes;
    r.hi_residual = best_hi.residual;
    r.ill_conditioned = best_hi.ill_conditioned;
    r.in_gap = r.freq >= data.gap_lower && r.freq <= data.gap_upper;

    std::vector<double> t, u;
    for (const auto& e : data.cavity_energy) {
        if (e.step >= data.first_step) {
            t.push_back(e.time);
            u.push_back(e.energy);
        }
    }
    try {
        const auto fit = q_from_decay(t, u, r.freq);
        r.Q_decay = fit.Q;
        r.decay_residual = fit.residual;
        r.q_consistent = std::isfinite(r.Q) && std::abs(fit.Q - r.Q) <= 0.1 * r.Q;
    } catch (const std::exception& ex) {
        r.error = std::string("decay fit: ") + ex.what();
    }

    if (data.peak) {
        try {
            r.V_norm = mode_volume(*data.peak, data.grid, r.freq, data.n_ref, data.pml_cells);
            const double half = data.core_half;
            r.damaged_fraction = energy_fraction_in_region(
                *data.peak, data.grid, [half](double x, double, double) { return std::abs(x) >= half; });
            const auto& ed = data.peak->energy_density;
            const auto imax = static_cast<std::size_t>(std::max_element(ed.begin(), ed.end()) - ed.begin());
            const int nx = data.grid.dims[0], nz = data.grid.dims[1];
            const auto c = data.grid.center(static_cast<int>(imax % nx), static_cast<int>((imax / nx) % nz),
                                            static_cast<int>(imax / (static_cast<std::size_t>(nx) * nz)));
            r.field_max_in_core = std::abs(c[0]) < half;
        } catch (const NumericalError& ex) {
            r.error = std::string("field analysis: ") + ex.what();
        }
    }
    return r;
}

namespace {

void write_run_json(const fs::path& dir, const RingdownData& d, const CavitySetup& setup, int n_probes)
{
    nlohmann::json j = {
        {"dim", static_cast<int>(d.grid.dim)},
        {"resolution", d.grid.resolution},
        {"dims", d.grid.dims},
        {"origin", d.grid.origin},
        {"spacing", d.grid.spacing},
        {"f_lo", d.f_lo},
        {"f_hi", d.f_hi},
        {"gap_lower", d.gap_lower},
        {"gap_upper", d.gap_upper},
        {"first_step", d.first_step},
        {"n_ref", d.n_ref},
        {"core_half", d.core_half},
        {"pml_cells", d.pml_cells},
        {"probes", n_probes},
        {"seed", setup.seed},
        {"peak_snapshot", d.peak ? "peak_energy_density.f64" : ""},
    };
    std::ofstream out(dir / "run.json");
    out << j.dump(2) << '\n';
    if (!out) {
        throw NumericalError(fmt::format("write failed for {}", (dir / "run.json").string()));
    }
}

std::vector<EnergySample> read_energy_csv(const fs::path& path, const std::string& region)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot read {}", path.string()));
    }
    std::vector<EnergySample> out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string step, time, name, energy;
        std::getline(ss, step, ',');
        std::getline(ss, time, ',');
        std::getline(ss, name, ',');
        std::getline(ss, energy, ',');
        if (name == region) {
            out.push_back({std::stol(step), std::stod(time), name, std::stod(energy)});
        }
    }
    return out;
}

} // namespace

CavityResult simulate_cavity(const CavitySetup& setup, const std::optional<fs::path>& artifact_dir)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto& st = setup.solver;
    st.validate();
    const LatticeSpec lattice = setup.lattice.normalized();
    lattice.validate();
    setup.profile.validate(lattice);

    CavityResult failed;
    failed.dim = static_cast<int>(st.dim);
    try {
        const Reduced2D reduced = reduce_to_2d(lattice, setup.profile, st.target_freq);
        const double n_c = reduced.profile.center_index(reduced.spec);
        const double n_o = n_c - reduced.profile.outer_delta_n();
        const BandEdges gap = fdtd_mode_gap(reduced.spec, n_c, n_o, st);

        RasterOptions ro;
        ro.pad_cells = st.pml_cells;
        const bool two_d = st.dim == Dim::Two;
        const DielectricGrid grid = two_d ? rasterize(reduced.spec, reduced.profile, st.resolution, Dim::Two, ro)
                                          : rasterize(lattice, setup.profile, st.resolution, Dim::Three, ro);
        auto dom = SimulationDomain::create(grid, st.courant, st.pml_cells);
        dom.workers = st.workers;

        const double core_half = 0.5 * snapped_length(setup.profile.core_length(), st.resolution);
        const double reach = 0.5 * setup.profile.total_length() + 2.0;
        const RegionMonitor cavity{"cavity", [reach](double x, double z, double y) {
                                       return std::abs(x) <= reach && std::abs(z) <= 2.0 && std::abs(y) <= 1.0;
                                   }};
        std::mt19937_64 rng(setup.seed);
        const double jitter = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
        const double x_src = 0.15 + jitter;
        std::vector<ProbeSpec> probes;
        for (double x : {x_src, -0.37 - jitter, 0.71}) {
            probes.push_back({{x, 0.0, 0.0}, Component::Ez, 1});
        }

        // Excite, wait, record the ringdown; returns the data with first_step set.
        auto excite = [&](double center, double bandwidth) {
            const SourceSpec src{{x_src, 0.0, 0.0}, Component::Ez, center, bandwidth};
            const long off = static_cast<long>(std::ceil(src.end_time() / dom.dt));
            const long wait = static_cast<long>(std::ceil(st.wait_widths * src.width() / dom.dt));
            const long first = off + wait;
            auto d = dom;
            d.total_steps = first + st.ringdown_steps;
            d.snapshot_every = 64;
            RunOptions opt;
            opt.peak_window = std::make_pair(first, first + static_cast<long>(std::ceil(1.0 / (center * dom.dt))) + 1);
            auto res = run(d, {src}, probes, {cavity}, opt);
            RingdownData data;
            data.probes = std::move(res.probes);
            data.cavity_energy = std::move(res.energy);
            data.peak = std::move(res.peak);
            data.first_step = first;
            return data;
        };

        // Pulse centred in the gap, wide enough to cover it with margin.
        const double bw = std::max(gap.width(), st.min_bandwidth);
        const double margin = two_d ? 0.5 * bw : 2.0 * bw;
        RingdownData data = excite(0.5 * (gap.lower + gap.upper), bw);
        data.grid = grid;
        data.f_lo = gap.lower - margin;
        data.f_hi = gap.upper + margin;
        data.gap_lower = gap.lower;
        data.gap_upper = gap.upper;
        data.n_ref = two_d ? n_c : setup.profile.center_index(lattice);
        data.core_half = core_half;
        data.pml_cells = st.pml_cells;

        auto result = analyze_ringdown(data);
        if (st.narrowband_recheck && result.found) {
            // Narrow enough that the nearest other mode in the window sits
            // more than four spectral widths away.
            double spacing = gap.width() > 0.0 ? gap.width() : bw;
            for (const auto& m : result.modes) {
                if (m.freq != result.freq) {
                    spacing = std::min(spacing, std::abs(m.freq - result.freq));
                }
            }
            auto narrow = excite(result.freq, 0.23 * spacing);
            narrow.grid = grid;
            narrow.f_lo = data.f_lo;
            narrow.f_hi = data.f_hi;
            narrow.gap_lower = gap.lower;
            narrow.gap_upper = gap.upper;
            narrow.n_ref = data.n_ref;
            narrow.core_half = core_half;
            narrow.pml_cells = st.pml_cells;
            const auto second = analyze_ringdown(narrow);
            result.Q_decay = second.Q_decay;
            result.decay_residual = second.decay_residual;
            result.q_consistent = second.Q_decay > 0.0 && std::abs(second.Q_decay - result.Q) <= 0.1 * result.Q;
            if (result.error.starts_with("decay fit")) {
                result.error = second.error;
            }
            data = std::move(narrow);
        }
        result.realized_length = snapped_length(setup.profile.total_length(), st.resolution);
        result.runtime_seconds = elapsed(t0);

        if (artifact_dir) {
            fs::create_directories(*artifact_dir);
            for (std::size_t p = 0; p < data.probes.size(); ++p) {
                write_probe_csv(*artifact_dir / fmt::format("probe_{}.csv", p), data.probes[p]);
            }
            write_energy_csv(*artifact_dir / "energy.csv", data.cavity_energy);
            if (data.peak) {
                write_snapshot(*data.peak, *artifact_dir, "peak");
            }
            write_run_json(*artifact_dir, data, setup, static_cast<int>(data.probes.size()));
        }
        return result;
    } catch (const NumericalError& ex) {
        failed.error = ex.what();
        failed.runtime_seconds = elapsed(t0);
        return failed;
    }
}

CavityResult analyze_directory(const fs::path& dir)
{
    std::ifstream in(dir / "run.json");
    if (!in) {
        throw ConfigError(fmt::format("{} has no run.json", dir.string()));
    }
    const auto j = nlohmann::json::parse(in);
    RingdownData d;
    d.grid.dim = j.at("dim").get<int>() == 3 ? Dim::Three : Dim::Two;
    d.grid.resolution = j.at("resolution").get<int>();
    d.grid.dims = j.at("dims").get<std::array<int, 3>>();
    d.grid.origin = j.at("origin").get<std::array<double, 3>>();
    d.grid.spacing = j.at("spacing").get<std::array<double, 3>>();
    d.f_lo = j.at("f_lo").get<double>();
    d.f_hi = j.at("f_hi").get<double>();
    d.gap_lower = j.at("gap_lower").get<double>();
    d.gap_upper = j.at("gap_upper").get<double>();
    d.first_step = j.at("first_step").get<long>();
    d.n_ref = j.at("n_ref").get<double>();
    d.core_half = j.at("core_half").get<double>();
    d.pml_cells = j.at("pml_cells").get<int>();
    for (int p = 0; p < j.at("probes").get<int>(); ++p) {
        d.probes.push_back(read_probe_csv(dir / fmt::format("probe_{}.csv", p)));
    }
    d.cavity_energy = read_energy_csv(dir / "energy.csv", "cavity");
    const auto snap_name = j.at("peak_snapshot").get<std::string>();
    if (!snap_name.empty()) {
        auto [density, dims] = read_snapshot_array(dir / snap_name);
        FieldSnapshot s;
        s.dims = dims;
        s.origin = d.grid.origin;
        s.spacing = d.grid.spacing;
        s.energy_density = std::move(density);
        d.peak = std::move(s);
    }
    auto r = analyze_ringdown(d);
    r.realized_length = 2.0 * d.core_half;
    return r;
}

void write_analysis_csv(const fs::path& path, const std::vector<std::pair<std::string, CavityResult>>& runs)
{
    auto out = fmt::output_file(path.string());
    out.print("run_id,freq_norm,Q,V_norm,dim,damaged_fraction,method,residual\n");
    for (const auto& [id, r] : runs) {
        if (!r.found) {
            continue;
        }
        for (const auto& m : r.modes) {
            const bool selected = m.freq == r.freq;
            out.print("{},{:.10g},{:.6g},{:.6g},{},{:.6g},harmonic-inversion,{:.3g}\n", id, m.freq, m.Q,
                      selected ? r.V_norm : 0.0, r.dim, selected ? r.damaged_fraction : 0.0, r.hi_residual);
        }
        if (r.Q_decay > 0.0) {
            out.print("{},{:.10g},{:.6g},{:.6g},{},{:.6g},decay-fit,{:.3g}\n", id, r.freq, r.Q_decay, r.V_norm,
                      r.dim, r.damaged_fraction, r.decay_residual);
        }
    }
}

} // namespace hetcav
