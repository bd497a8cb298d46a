#include "hetcav/selftest.hpp"

#include "hetcav/error.hpp"
#include "hetcav/fdtd.hpp"
#include "hetcav/geometry.hpp"
#include "hetcav/resonance.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

namespace hetcav {

namespace {

constexpr double kPi = std::numbers::pi;

std::complex<double> dft(const ProbeRecord& r, double f)
{
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < r.samples.size(); ++j) {
        acc += r.samples[j] * std::polar(1.0, -2.0 * kPi * f * r.time(j));
    }
    return acc;
}

SimulationDomain line_domain(const std::vector<double>& eps, double cell, int pml)
{
    auto dom = SimulationDomain::create(line_grid(eps, cell), 0.5, pml);
    dom.boundary = {Boundary::Pml, Boundary::Bloch, Boundary::Pec};
    return dom;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

} // namespace

double FresnelCheck::worst_relative_error() const
{
    double worst = 0.0;
    for (double r : R) {
        worst = std::max(worst, rel(r, exact));
    }
    return worst;
}

FresnelCheck fdtd_fresnel(double n1, double n2, int cells_per_wavelength)
{
    if (n1 < 1.0 || n2 < 1.0 || cells_per_wavelength < 10) {
        throw ConfigError("Fresnel check needs indices >= 1 and at least 10 cells per wavelength");
    }
    const double cell = 1.0 / (cells_per_wavelength * std::max(n1, n2));
    const int n = static_cast<int>(std::lround(16.0 / cell));
    const int interface = static_cast<int>(std::lround(10.0 / cell));
    std::vector<double> uniform(n, n1 * n1), step(n, n1 * n1);
    std::fill(step.begin() + interface, step.end(), n2 * n2);
    const SourceSpec src{{3.75, 0, 0}, Component::Ez, 1.0, 0.1};
    const ProbeSpec probe{{6.25, 0, 0}, Component::Ez, 1};
    auto ref = line_domain(uniform, cell, 20);
    ref.total_steps = static_cast<long>((src.end_time() + 25.0 * n1) / ref.dt);
    auto full = line_domain(step, cell, 20);
    full.total_steps = ref.total_steps;
    const auto a = run(ref, {src}, {probe});
    const auto b = run(full, {src}, {probe});
    ProbeRecord refl = b.probes[0];
    for (std::size_t j = 0; j < refl.samples.size(); ++j) {
        refl.samples[j] -= a.probes[0].samples[j];
    }
    FresnelCheck out;
    out.exact = std::pow((n1 - n2) / (n1 + n2), 2);
    for (double f : {0.9, 1.0, 1.1}) {
        out.freqs.push_back(f);
        out.R.push_back(std::norm(dft(refl, f) / dft(a.probes[0], f)));
    }
    return out;
}

double FabryPerotCheck::freq_error() const { return rel(freq, analytic.freq); }
double FabryPerotCheck::Q_error() const { return rel(Q, analytic.Q); }

FabryPerotCheck fdtd_fabry_perot(double n_high, double n_low, int pairs, int cells_per_wavelength)
{
    const double cell = 1.0 / (cells_per_wavelength * std::max(n_high, n_low));
    const auto stack = bragg_cavity(n_high, n_low, pairs, 1.0);
    const int pad = static_cast<int>(std::lround(3.0 / cell));
    std::vector<double> eps(pad, 1.0);
    for (const auto& l : stack.layers) {
        const int cells = static_cast<int>(std::lround(l.thickness / cell));
        eps.insert(eps.end(), cells, l.index * l.index);
    }
    eps.insert(eps.end(), pad, 1.0);
    const double centre = (pad + 0.5 * static_cast<double>(eps.size() - 2 * pad)) * cell;
    auto dom = line_domain(eps, cell, 20);
    // slightly off centre so that odd modes are excited too
    const SourceSpec src{{centre + 0.3 * cell, 0, 0}, Component::Ez, 1.0, 0.05};
    const long off = static_cast<long>(std::ceil(src.end_time() / dom.dt));
    dom.total_steps = off + (1 << 15);
    const auto res = run(dom, {src}, {{{centre + 0.3 * cell, 0, 0}, Component::Ez, 1}});
    FabryPerotCheck out;
    out.analytic = fabry_perot_q(stack, 0.9, 1.1);
    const auto hi = harmonic_inversion(res.probes[0], 0.9, 1.1, off);
    const Mode* m = select_mode(hi, 0.9, 1.1);
    if (!m) {
        throw NumericalError("no resonance in the Fabry-Perot ringdown");
    }
    out.freq = m->freq;
    out.Q = m->Q;
    return out;
}

std::vector<SyntheticQCheck> synthetic_q_battery(const std::vector<double>& q_values)
{
    const double f = 0.3317, dt = 0.37, phase = 1.1;
    const std::size_t n = 32768;
    std::vector<SyntheticQCheck> out;
    for (double Q : q_values) {
        std::vector<std::complex<double>> x(n);
        const double gamma = kPi * f / Q;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) * dt;
            x[i] = std::exp(-gamma * t) * std::cos(2 * kPi * f * t + phase);
        }
        const auto r = harmonic_inversion(x, dt, 0.30, 0.36);
        const Mode* m = select_mode(r, 0.30, 0.36);
        SyntheticQCheck c{Q, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        if (m) {
            c.freq_error = rel(m->freq, f);
            c.Q_error = rel(m->Q, Q);
        }
        out.push_back(c);
    }
    return out;
}

double BandComparison::worst_error(int count) const
{
    if (static_cast<int>(plane_wave.size()) < count || fdtd.empty()) {
        return std::numeric_limits<double>::infinity();
    }
    const auto nearest = [](const std::vector<double>& set, double f) {
        double best = std::numeric_limits<double>::infinity();
        for (double g : set) {
            best = std::min(best, rel(g, f));
        }
        return best;
    };
    // Both directions, so a missing band and a spurious FDTD mode both count.
    double worst = 0.0;
    for (int i = 0; i < count; ++i) {
        worst = std::max(worst, nearest(fdtd, plane_wave[i]));
    }
    const double top = plane_wave[count - 1] * 1.01;
    for (double f : fdtd) {
        if (f <= top) {
            worst = std::max(worst, nearest(plane_wave, f));
        }
    }
    return worst;
}

BandComparison compare_bulk_bands(const LatticeSpec& spec, double background_index, Vec2 k, int resolution,
                                  int workers)
{
    BlochOptions opt;
    opt.resolution = resolution;
    opt.workers = workers;
    const Vec2 folded{k.x, k.z + 1.0 / std::sqrt(3.0)};
    const auto pw = compute_bulk_bands(spec, background_index, Polarization::TE, {k, folded}, 441, 6, workers);
    BandComparison out;
    out.k = k;
    out.plane_wave = pw.bands[0];
    out.plane_wave.insert(out.plane_wave.end(), pw.bands[1].begin(), pw.bands[1].end());
    std::sort(out.plane_wave.begin(), out.plane_wave.end());
    // degenerate pairs appear once in the FDTD spectrum
    out.plane_wave.erase(std::unique(out.plane_wave.begin(), out.plane_wave.end(),
                                     [&](double x, double y) { return y - x < opt.merge_tolerance * x; }),
                         out.plane_wave.end());
    out.fdtd = bloch_spectrum(spec, k, background_index, opt);
    return out;
}

double pec_energy_drift(int dim, long steps)
{
    DielectricGrid g;
    std::mt19937 rng(dim == 3 ? 9 : 5);
    std::uniform_real_distribution<double> u(1.0, 5.0);
    SourceSpec src;
    if (dim == 3) {
        g.dim = Dim::Three;
        g.dims = {12, 10, 8};
        src = {{0.03, 0.02, 0.01}, Component::Ey, 0.5, 0.3, 3.0};
    } else {
        g.dims = {40, 30, 1};
        src = {{0.13, -0.21, 0.0}, Component::Ez, 0.4, 0.3, 3.0};
    }
    g.resolution = 10;
    g.spacing = {0.1, 0.1, dim == 3 ? 0.1 : 1.0};
    g.origin = {-0.05 * g.dims[0], -0.05 * g.dims[1], dim == 3 ? -0.05 * g.dims[2] : 0.0};
    g.eps.resize(static_cast<std::size_t>(g.dims[0]) * g.dims[1] * g.dims[2]);
    for (auto& e : g.eps) {
        e = u(rng);
    }
    auto dom = SimulationDomain::create(g, 0.5, 10);
    dom.boundary = {Boundary::Pec, Boundary::Pec, Boundary::Pec};
    auto solver = make_solver(dom, {src});
    const long off = static_cast<long>(std::ceil(src.end_time() / dom.dt)) + 1;
    for (long s = 0; s < off; ++s) {
        solver->step();
    }
    solver->track_discrete_energy(true);
    solver->step();
    const double e0 = solver->discrete_energy();
    for (long s = 0; s < steps; ++s) {
        solver->step();
    }
    return std::abs(solver->discrete_energy() - e0) / e0;
}

namespace {

CheckResult timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult c;
    c.name = name;
    try {
        auto [ok, detail] = body();
        c.passed = ok;
        c.detail = std::move(detail);
    } catch (const std::exception& e) {
        c.passed = false;
        c.detail = std::string("error: ") + e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

LayerStack random_stack(std::mt19937& rng)
{
    std::uniform_real_distribution<double> n(1.0, 4.0), d(0.01, 1.0);
    std::uniform_int_distribution<int> count(0, 12);
    LayerStack s;
    s.n_in = n(rng);
    s.n_out = n(rng);
    const int layers = count(rng);
    for (int i = 0; i < layers; ++i) {
        s.layers.push_back({n(rng), d(rng)});
    }
    return s;
}

} // namespace

std::vector<CheckResult> run_selftest(int workers)
{
    std::vector<CheckResult> out;

    out.push_back(timed("transfer matrix: R + T = 1 and reciprocity", [] {
        std::mt19937 rng(42);
        std::uniform_real_distribution<double> f(0.05, 2.0);
        double worst_sum = 0.0, worst_recip = 0.0;
        for (int i = 0; i < 500; ++i) {
            const auto s = random_stack(rng);
            const double fi = f(rng);
            const auto t = transfer_matrix(s, fi);
            worst_sum = std::max(worst_sum, std::abs(t.R + t.T - 1.0));
            worst_recip = std::max(worst_recip, std::abs(transfer_matrix(s.reversed(), fi).T - t.T));
        }
        return std::pair{worst_sum < 1e-12 && worst_recip < 1e-12,
                         fmt::format("max |R+T-1| = {:.1e}, max |dT| = {:.1e} over 500 stacks", worst_sum, worst_recip)};
    }));

    out.push_back(timed("transfer matrix: Fresnel interface", [] {
        LayerStack s;
        s.n_in = 1.0;
        s.n_out = 3.5;
        const double exact = std::pow(2.5 / 4.5, 2);
        const double err = std::abs(transfer_matrix(s, 0.3).R - exact);
        return std::pair{err < 1e-12, fmt::format("|R - R_exact| = {:.1e}", err)};
    }));

    out.push_back(timed("transfer matrix: quarter-wave stack closed form", [] {
        double worst = 0.0;
        for (int pairs : {1, 3, 6, 10}) {
            LayerStack s;
            s.n_out = 1.5;
            for (int p = 0; p < pairs; ++p) {
                s.layers.push_back({2.3, 0.25 / 2.3});
                s.layers.push_back({1.38, 0.25 / 1.38});
            }
            const double r = transfer_matrix(s, 1.0).R;
            worst = std::max(worst, std::abs(r - quarter_wave_reflectance(1.0, 2.3, 1.38, 1.5, pairs)));
        }
        return std::pair{worst < 1e-10, fmt::format("max |dR| = {:.1e}", worst)};
    }));

    out.push_back(timed("Fabry-Perot Q grows with mirror pairs", [] {
        std::vector<double> qs;
        for (int pairs = 1; pairs <= 6; ++pairs) {
            qs.push_back(fabry_perot_q(bragg_cavity(2.5, 1.25, pairs, 1.0), 0.9, 1.1).Q);
        }
        const bool ok = std::is_sorted(qs.begin(), qs.end()) && std::adjacent_find(qs.begin(), qs.end()) == qs.end();
        return std::pair{ok, fmt::format("Q(1..6 pairs) = {:.3g}", fmt::join(qs, ", "))};
    }));

    out.push_back(timed("1D FDTD Fresnel reflection (n 1 -> 2, 40 cells per wavelength)", [] {
        const auto c = fdtd_fresnel(1.0, 2.0, 40);
        const double e = c.worst_relative_error();
        return std::pair{e < 0.01, fmt::format("R = {:.5f} (exact {:.5f}), worst error {:.2f}%",
                                               fmt::join(c.R, "/"), c.exact, 100 * e)};
    }));

    out.push_back(timed("1D FDTD Bragg cavity vs transfer matrix", [] {
        const auto c = fdtd_fabry_perot(2.5, 1.25, 4, 40);
        return std::pair{c.freq_error() < 5e-3 && c.Q_error() < 0.05,
                         fmt::format("f {:.5f} vs {:.5f} ({:.3f}%), Q {:.1f} vs {:.1f} ({:.2f}%)", c.freq,
                                     c.analytic.freq, 100 * c.freq_error(), c.Q, c.analytic.Q, 100 * c.Q_error())};
    }));

    out.push_back(timed("harmonic inversion: synthetic Q 1e3 to 1e6", [] {
        bool ok = true;
        double wf = 0.0, wq = 0.0;
        for (const auto& c : synthetic_q_battery()) {
            ok = ok && c.freq_error <= 1e-4 && c.Q_error <= 1e-2;
            wf = std::max(wf, c.freq_error);
            wq = std::max(wq, c.Q_error);
        }
        return std::pair{ok, fmt::format("worst f error {:.1e}, worst Q error {:.1e}", wf, wq)};
    }));

    out.push_back(timed("energy decay fit on an exact exponential", [] {
        const double f = 0.33, Q = 2e4, tau = Q / (2 * kPi * f);
        std::vector<double> t, u;
        for (int i = 0; i < 300; ++i) {
            t.push_back(20.0 * i);
            u.push_back(std::exp(-t.back() / tau));
        }
        const double e = rel(q_from_decay(t, u, f).Q, Q);
        return std::pair{e < 1e-3, fmt::format("Q error {:.1e}", e)};
    }));

    out.push_back(timed("closed PEC box conserves leapfrog energy (2D, 3D)", [] {
        const double d2 = pec_energy_drift(2, 5000), d3 = pec_energy_drift(3, 2000);
        return std::pair{d2 < 1e-10 && d3 < 1e-10, fmt::format("drift {:.1e} (2D), {:.1e} (3D)", d2, d3)};
    }));

    out.push_back(timed("plane waves vs FDTD Bloch spectrum at k = (0.5, 0), lowest 4 bands", [workers] {
        LatticeSpec spec;
        const double n = effective_slab_index(spec, 0.333);
        const auto c = compare_bulk_bands(spec, n, {0.5, 0.0}, 32, workers);
        const double e = c.worst_error(4);
        return std::pair{e < 0.01, fmt::format("worst error {:.3f}%", 100 * e)};
    }));

    return out;
}

std::string format_checks(const std::vector<CheckResult>& checks)
{
    std::size_t w = 5;
    for (const auto& c : checks) {
        w = std::max(w, c.name.size());
    }
    std::string s = fmt::format("{:<{}}  {:<6} {:>8}  {}\n", "check", w, "result", "seconds", "detail");
    int passed = 0;
    for (const auto& c : checks) {
        s += fmt::format("{:<{}}  {:<6} {:>8.1f}  {}\n", c.name, w, c.passed ? "PASS" : "FAIL", c.seconds, c.detail);
        passed += c.passed ? 1 : 0;
    }
    s += fmt::format("{} of {} checks passed\n", passed, checks.size());
    return s;
}

} // namespace hetcav
