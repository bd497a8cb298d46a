#include "doctest.h"

#include "hetcav/error.hpp"
#include "hetcav/fdtd.hpp"
#include "hetcav/oracles.hpp"
#include "hetcav/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace hetcav;

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

DielectricGrid box_grid(int nx, int nz, double d, unsigned seed)
{
    DielectricGrid g;
    g.resolution = static_cast<int>(std::lround(1 / d));
    g.dims = {nx, nz, 1};
    g.spacing = {d, d, 1.0};
    g.origin = {-0.5 * nx * d, -0.5 * nz * d, 0.0};
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(1.0, 6.0);
    g.eps.resize(static_cast<std::size_t>(nx) * nz);
    for (auto& e : g.eps) {
        e = u(rng);
    }
    return g;
}

LatticeSpec small_w1()
{
    LatticeSpec spec;
    spec.n_slab = 2.13073097194161;
    spec.periods_x = 8;
    spec.periods_z = 7;
    return spec;
}

} // namespace

TEST_CASE("domain validation")
{
    auto grid = rasterize(small_w1(), HeterostructureProfile::uniform(), 12, Dim::Two, {12});
    auto dom = SimulationDomain::create(grid);
    dom.total_steps = 10;
    CHECK_NOTHROW(dom.validate());
    CHECK(dom.dt == doctest::Approx(0.5 / 12 / std::sqrt(2.0)));

    auto bad = dom;
    bad.pml_cells = 6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = SimulationDomain::create(grid, 1.0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = dom;
    bad.dt *= 1.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const SourceSpec in_pml{{dom.grid.origin[0] + 0.2, 0.0, 0.0}, Component::Ez, 0.3, 0.01};
    CHECK_THROWS_AS(make_solver(dom, {in_pml}), ConfigError);
    const SourceSpec hz{{0.3, 0.0, 0.0}, Component::Hz, 0.3, 0.01};
    CHECK_THROWS_AS(make_solver(dom, {hz}), ConfigError);
    CHECK_THROWS_AS(run(dom, {}, {}), ConfigError);
    CHECK(parse_component("ez") == Component::Ez);
    CHECK_THROWS_AS(parse_component("Ew"), ConfigError);
}

TEST_CASE("source pulse")
{
    const SourceSpec s{{0, 0, 0}, Component::Ez, 0.33, 0.01, 5.0, 2.0};
    CHECK(s.width() == doctest::Approx(1.0 / (2 * kPi * 0.01)));
    CHECK(s.end_time() == doctest::Approx(10 * s.width()));
    CHECK(s.value(-1.0) == 0.0);
    CHECK(s.value(s.end_time() + 1.0) == 0.0);
    CHECK(std::abs(s.value(s.peak_time() + 0.25 / 0.33)) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("no source gives identically zero fields")
{
    auto grid = rasterize(small_w1(), HeterostructureProfile::uniform(), 10, Dim::Two, {10});
    auto dom = SimulationDomain::create(grid);
    dom.total_steps = 300;
    const auto res = run(dom, {}, {{{0.3, 0.0, 0.0}, Component::Ez, 1}, {{0.1, 0.4, 0.0}, Component::Hy, 3}});
    CHECK(res.probes[0].samples.size() == 300);
    CHECK(res.probes[1].samples.size() == 100);
    for (const auto& p : res.probes) {
        for (const auto& v : p.samples) {
            CHECK(v == std::complex<double>(0.0));
        }
    }
}

TEST_CASE("vacuum dispersion follows the Yee relation")
{
    // 20 cells per wavelength at f = 1
    const double cell = 0.05;
    auto dom = line_domain(std::vector<double>(800, 1.0), cell, 20);
    const double f0 = 1.0;
    const SourceSpec src{{5.0, 0.0, 0.0}, Component::Ez, f0, 0.05};
    const double x1 = 12.0, x2 = 27.0;
    dom.total_steps = static_cast<long>((src.end_time() + 40.0) / dom.dt);
    const auto res = run(dom, {src}, {{{x1, 0, 0}, Component::Ez, 1}, {{x2, 0, 0}, Component::Ez, 1}});
    const auto a = dft(res.probes[0], f0);
    const auto b = dft(res.probes[1], f0);
    // phase delay over x2 - x1, unwrapped with the continuum estimate
    const double dphi = -std::arg(b / a);
    const double turns = std::round((2 * kPi * f0 * (x2 - x1) - dphi) / (2 * kPi));
    const double k_meas = (dphi + 2 * kPi * turns) / (x2 - x1);
    const double w = 2 * kPi * f0;
    const double k_yee = 2.0 / cell * std::asin(cell / dom.dt * std::sin(0.5 * w * dom.dt));
    const double v_meas = w / k_meas;
    const double v_yee = w / k_yee;
    MESSAGE("phase velocity measured " << v_meas << ", Yee " << v_yee);
    CHECK(std::abs(v_meas - v_yee) / v_yee < 5e-3);
    CHECK(std::abs(v_meas - v_yee) < 0.5 * std::abs(1.0 - v_yee));
}

TEST_CASE("Fresnel reflection at 40 cells per wavelength")
{
    // 40 cells per wavelength in the denser medium
    const double cell = 1.0 / 80;
    const int n = 1280;
    std::vector<double> uniform(n, 1.0), step(n, 1.0);
    for (int i = 800; i < n; ++i) {
        step[i] = 4.0;
    }
    const SourceSpec src{{300 * cell, 0, 0}, Component::Ez, 1.0, 0.1};
    const ProbeSpec probe{{500 * cell, 0, 0}, Component::Ez, 1};
    auto ref = line_domain(uniform, cell, 20);
    ref.total_steps = static_cast<long>((src.end_time() + 25.0) / ref.dt);
    auto full = line_domain(step, cell, 20);
    full.total_steps = ref.total_steps;
    const auto a = run(ref, {src}, {probe});
    const auto b = run(full, {src}, {probe});
    ProbeRecord refl = b.probes[0];
    for (std::size_t j = 0; j < refl.samples.size(); ++j) {
        refl.samples[j] -= a.probes[0].samples[j];
    }
    for (double f : {0.9, 1.0, 1.1}) {
        const double R = std::norm(dft(refl, f) / dft(a.probes[0], f));
        MESSAGE("f=" << f << " R=" << R);
        CHECK(std::abs(R - 1.0 / 9.0) / (1.0 / 9.0) < 0.01);
    }
}

TEST_CASE("Bragg Fabry-Perot ringdown matches the transfer matrix")
{
    // 40 cells per wavelength in the high-index layers
    const double cell = 1.0 / 100;
    const auto stack = bragg_cavity(2.5, 1.25, 4, 1.0);
    const int pad = 300;
    std::vector<double> eps(pad, 1.0);
    for (const auto& l : stack.layers) {
        const int cells = static_cast<int>(std::lround(l.thickness / cell));
        eps.insert(eps.end(), cells, l.index * l.index);
    }
    eps.insert(eps.end(), pad, 1.0);
    const double centre = (pad + 0.5 * (eps.size() - 2 * pad)) * cell;
    auto dom = line_domain(eps, cell, 20);
    const SourceSpec src{{centre + 0.3 * cell, 0, 0}, Component::Ez, 1.0, 0.05};
    const long off = static_cast<long>(std::ceil(src.end_time() / dom.dt));
    dom.total_steps = off + (1 << 15);
    const auto res = run(dom, {src}, {{{centre + 0.3 * cell, 0, 0}, Component::Ez, 1}});
    const auto hi = harmonic_inversion(res.probes[0], 0.9, 1.1, off);
    REQUIRE(!hi.empty());
    const auto fp = fabry_perot_q(stack, 0.9, 1.1);
    const auto& m = hi.modes.front();
    MESSAGE("FDTD f=" << m.freq << " Q=" << m.Q << "; transfer matrix f=" << fp.freq << " Q=" << fp.Q);
    CHECK(std::abs(m.freq - fp.freq) / fp.freq < 5e-3);
    CHECK(std::abs(m.Q - fp.Q) / fp.Q < 0.05);
}

TEST_CASE("closed PEC cavity conserves the leapfrog energy")
{
    SUBCASE("2D")
    {
        auto dom = SimulationDomain::create(box_grid(40, 30, 0.1, 5), 0.5, 10);
        dom.boundary = {Boundary::Pec, Boundary::Pec, Boundary::Pec};
        const SourceSpec src{{0.13, -0.21, 0.0}, Component::Ez, 0.4, 0.3, 3.0};
        auto solver = make_solver(dom, {src});
        const long off = static_cast<long>(std::ceil(src.end_time() / dom.dt)) + 1;
        for (long s = 0; s < off; ++s) {
            solver->step();
        }
        solver->track_discrete_energy(true);
        solver->step();
        const double e0 = solver->discrete_energy();
        CHECK(e0 > 0.0);
        for (int s = 0; s < 10000; ++s) {
            solver->step();
        }
        MESSAGE("relative drift over 1e4 steps: " << (solver->discrete_energy() - e0) / e0);
        CHECK(std::abs(solver->discrete_energy() - e0) / e0 < 1e-10);
    }
    SUBCASE("3D")
    {
        DielectricGrid g;
        g.dim = Dim::Three;
        g.resolution = 10;
        g.dims = {12, 10, 8};
        g.spacing = {0.1, 0.1, 0.1};
        g.origin = {-0.6, -0.5, -0.4};
        std::mt19937 rng(9);
        std::uniform_real_distribution<double> u(1.0, 5.0);
        g.eps.resize(12 * 10 * 8);
        for (auto& e : g.eps) {
            e = u(rng);
        }
        auto dom = SimulationDomain::create(g, 0.5, 10);
        dom.boundary = {Boundary::Pec, Boundary::Pec, Boundary::Pec};
        const SourceSpec src{{0.03, 0.02, 0.01}, Component::Ey, 0.5, 0.3, 3.0};
        auto solver = make_solver(dom, {src});
        const long off = static_cast<long>(std::ceil(src.end_time() / dom.dt)) + 1;
        for (long s = 0; s < off; ++s) {
            solver->step();
        }
        solver->track_discrete_energy(true);
        solver->step();
        const double e0 = solver->discrete_energy();
        CHECK(e0 > 0.0);
        for (int s = 0; s < 10000; ++s) {
            solver->step();
        }
        CHECK(std::abs(solver->discrete_energy() - e0) / e0 < 1e-10);
    }
}

TEST_CASE("linearity, determinism and mirror symmetry")
{
    const auto grid = rasterize(small_w1(), HeterostructureProfile::step(0.02, 2), 12, Dim::Two, {10});
    auto dom = SimulationDomain::create(grid);
    dom.total_steps = 600;
    const SourceSpec src{{0.3, 0.0, 0.0}, Component::Ez, 0.33, 0.05, 3.0};
    const std::vector<ProbeSpec> probes{{{0.7, 0.0, 0}, Component::Ez, 1},
                                        {{-0.4, 0.9, 0}, Component::Ex, 1},
                                        {{-0.4, 0.9, 0}, Component::Hy, 2}};
    RunOptions opt;
    opt.keep_snapshots = true;
    dom.snapshot_every = 600;

    const auto base = run(dom, {src}, probes, {}, opt);

    SUBCASE("doubling the source doubles every sample")
    {
        auto src2 = src;
        src2.amplitude = 2.0;
        const auto twice = run(dom, {src2}, probes, {}, opt);
        for (std::size_t p = 0; p < probes.size(); ++p) {
            double peak = 0.0, err = 0.0;
            for (std::size_t j = 0; j < base.probes[p].samples.size(); ++j) {
                peak = std::max(peak, std::abs(base.probes[p].samples[j]));
                err = std::max(err, std::abs(twice.probes[p].samples[j] - 2.0 * base.probes[p].samples[j]));
            }
            CHECK(peak > 0.0);
            CHECK(err <= 2e-12 * peak);
        }
    }
    SUBCASE("bit-identical for any worker count")
    {
        for (int workers : {2, 3, 5}) {
            auto d = dom;
            d.workers = workers;
            const auto other = run(d, {src}, probes, {}, opt);
            for (std::size_t p = 0; p < probes.size(); ++p) {
                CHECK(other.probes[p].samples == base.probes[p].samples);
            }
            CHECK(other.snapshots.front().energy_density == base.snapshots.front().energy_density);
        }
    }
    SUBCASE("symmetric structure and source give mirror-symmetric fields")
    {
        const auto& s = base.snapshots.front();
        const int nx = s.dims[0], nz = s.dims[1];
        const auto& ex = s.components[0].second;
        const auto& ez = s.components[1].second;
        double peak = 0.0, err = 0.0;
        for (int k = 0; k < nz; ++k) {
            for (int i = 0; i < nx; ++i) {
                const std::size_t a = static_cast<std::size_t>(k) * nx + i;
                const std::size_t b = static_cast<std::size_t>(nz - 1 - k) * nx + i;
                peak = std::max(peak, std::abs(ez[a]));
                err = std::max({err, std::abs(ez[a] - ez[b]), std::abs(ex[a] + ex[b])});
            }
        }
        CHECK(peak > 0.0);
        CHECK(err <= 1e-10 * peak);
    }
}

TEST_CASE("absorbing layers drain a uniform medium")
{
    DielectricGrid g;
    g.resolution = 10;
    g.dims = {80, 80, 1};
    g.spacing = {0.1, 0.1, 1.0};
    g.origin = {-4.0, -4.0, 0.0};
    g.eps.assign(80 * 80, 2.25);
    auto dom = SimulationDomain::create(g, 0.5, 10);
    dom.snapshot_every = 20;
    const SourceSpec src{{0.05, 0.05, 0.0}, Component::Ez, 0.5, 0.2, 4.0};
    // the pulse front needs about 3 * 1.5 time units to reach the layers
    const double reach = src.end_time() + 3.0 * 1.5;
    dom.total_steps = static_cast<long>((reach + 60.0) / dom.dt);
    RegionMonitor all{"domain", [](double x, double z, double) { return std::abs(x) < 3.0 && std::abs(z) < 3.0; }};
    const auto res = run(dom, {src}, {{{0.5, 0.5, 0.0}, Component::Ez, 1}}, {all});
    double peak = 0.0;
    double prev = 1e300;
    bool monotone = true;
    for (const auto& e : res.energy) {
        peak = std::max(peak, e.energy);
        // below ~1e-9 of the peak the residual PML reflections dominate
        if (e.time > reach && e.energy > 1e-9 * peak) {
            monotone = monotone && e.energy <= prev;
            prev = e.energy;
        }
    }
    CHECK(monotone);
    MESSAGE("residual energy fraction " << res.energy.back().energy / peak);
    CHECK(res.energy.back().energy < 1e-4 * peak);
}

TEST_CASE("Bloch-periodic cells")
{
    SUBCASE("uniform medium at Gamma")
    {
        DielectricGrid g;
        const int nx = 16, nz = 28;
        g.resolution = 16;
        g.dims = {nx, nz, 1};
        g.spacing = {1.0 / nx, std::sqrt(3.0) / nz, 1.0};
        g.origin = {-0.5, -0.5 * std::sqrt(3.0), 0.0};
        g.eps.assign(nx * nz, 4.0);
        auto dom = SimulationDomain::create(g, 0.5, 10);
        dom.boundary = {Boundary::Bloch, Boundary::Bloch, Boundary::Pec};
        // the lowest folded wave travels along z, so drive and read Ex
        const SourceSpec src{{0.11, 0.37, 0.0}, Component::Ex, 0.4, 0.15, 4.0};
        const long off = static_cast<long>(std::ceil(src.end_time() / dom.dt));
        dom.total_steps = off + 8192;
        const auto res = run(dom, {src}, {{{-0.23, -0.41, 0.0}, Component::Ex, 1}});
        const auto hi = harmonic_inversion(res.probes[0], 0.05, 0.45, off);
        REQUIRE(!hi.empty());
        double lowest = 1.0;
        for (const auto& m : hi.modes) {
            if (m.amplitude > 1e-3 * hi.modes.front().amplitude) {
                lowest = std::min(lowest, m.freq);
            }
        }
        // first folded plane wave: |G| = 2 pi / sqrt(3), n = 2
        const double expect = 1.0 / (std::sqrt(3.0) * 2.0);
        CHECK(std::abs(lowest - expect) / expect < 0.01);
    }
    SUBCASE("fields at -k are the complex conjugate of fields at k")
    {
        auto dom = SimulationDomain::create(box_grid(20, 34, 0.06, 11), 0.5, 10);
        dom.boundary = {Boundary::Bloch, Boundary::Bloch, Boundary::Pec};
        dom.bloch_k = {0.21, 0.13, 0.0};
        dom.total_steps = 2000;
        const std::vector<SourceSpec> src{{{0.11, 0.37, 0.0}, Component::Ez, 0.4, 0.15, 4.0},
                                          {{-0.2, 0.1, 0.0}, Component::Ex, 0.3, 0.15, 4.0}};
        const std::vector<ProbeSpec> probes{{{-0.23, -0.41, 0.0}, Component::Ex, 1},
                                            {{0.3, 0.5, 0.0}, Component::Hy, 1}};
        const auto a = run(dom, src, probes);
        dom.bloch_k = {-0.21, -0.13, 0.0};
        const auto b = run(dom, src, probes);
        for (std::size_t p = 0; p < probes.size(); ++p) {
            double peak = 0.0, err = 0.0;
            for (std::size_t j = 0; j < a.probes[p].samples.size(); ++j) {
                peak = std::max(peak, std::abs(a.probes[p].samples[j]));
                err = std::max(err, std::abs(a.probes[p].samples[j] - std::conj(b.probes[p].samples[j])));
            }
            CHECK(peak > 0.0);
            CHECK(std::abs(a.probes[p].samples.back().imag()) > 0.0);
            CHECK(err <= 1e-12 * peak);
        }
    }
}

TEST_CASE("bulk Bloch spectrum agrees with plane waves")
{
    // the rectangular FDTD cell holds two primitive cells, so its spectrum
    // at k also contains the primitive bands at k + (0, 1/sqrt(3))
    LatticeSpec spec;
    const double n = 2.13073097194161;
    BlochOptions opt;
    opt.resolution = 32;
    for (const Vec2 k : {Vec2{0.5, 0.0}, Vec2{1.0 / 3, 0.2}, Vec2{0.1, 0.05}}) {
        const Vec2 folded{k.x, k.z + 1.0 / std::sqrt(3.0)};
        const auto pw = compute_bulk_bands(spec, n, Polarization::TE, {k, folded}, 441, 6);
        std::vector<double> ref(pw.bands[0]);
        ref.insert(ref.end(), pw.bands[1].begin(), pw.bands[1].end());
        std::sort(ref.begin(), ref.end());
        ref.erase(std::unique(ref.begin(), ref.end(), [&](double x, double y) { return y - x < opt.merge_tolerance * x; }),
                  ref.end());
        const auto fd = bloch_spectrum(spec, k, n, opt);
        std::string line;
        for (std::size_t i = 0; i < std::max(ref.size(), fd.size()); ++i) {
            line += " (" + (i < ref.size() ? std::to_string(ref[i]) : "-") + ", " +
                    (i < fd.size() ? std::to_string(fd[i]) : "-") + ")";
        }
        MESSAGE("k=(" << k.x << "," << k.z << "):" << line);
        REQUIRE(fd.size() >= 4);
        for (int i = 0; i < 4; ++i) {
            CHECK(std::abs(fd[i] - ref[i]) / ref[i] < 0.01);
        }
    }
}

TEST_CASE("field output round trips")
{
    const auto dir = std::filesystem::temp_directory_path() / "hetcav_test_fdtd_io";
    std::filesystem::remove_all(dir);
    auto grid = rasterize(small_w1(), HeterostructureProfile::uniform(), 10, Dim::Two, {10});
    auto dom = SimulationDomain::create(grid);
    dom.total_steps = 200;
    dom.snapshot_every = 100;
    RunOptions opt;
    opt.keep_snapshots = true;
    opt.snapshot_dir = dir;
    const SourceSpec src{{0.3, 0.0, 0.0}, Component::Ez, 0.33, 0.05, 3.0};
    RegionMonitor core{"core", [](double x, double, double) { return std::abs(x) < 1.0; }};
    const auto res = run(dom, {src}, {{{0.5, 0.1, 0}, Component::Ez, 1}}, {core}, opt);
    REQUIRE(res.snapshots.size() == 2);
    const auto [data, dims] = read_snapshot_array(dir / "snap_00000200_Ez.f64");
    CHECK(dims == res.snapshots[1].dims);
    CHECK(data == res.snapshots[1].components[1].second);
    CHECK(std::filesystem::exists(dir / "snap_00000200_energy_density.json"));

    write_probe_csv(dir / "probe.csv", res.probes[0]);
    const auto back = read_probe_csv(dir / "probe.csv");
    CHECK(back.samples == res.probes[0].samples);
    CHECK(back.dt == doctest::Approx(res.probes[0].dt));
    write_energy_csv(dir / "energy.csv", res.energy);
    CHECK(std::filesystem::file_size(dir / "energy.csv") > 20);
    std::filesystem::remove_all(dir);
}

TEST_CASE("3D smoke run")
{
    LatticeSpec spec;
    spec.periods_x = 5;
    spec.periods_z = 5;
    RasterOptions ro;
    ro.pad_cells = 8;
    ro.air_padding = 0.4;
    const auto grid = rasterize(spec, HeterostructureProfile::uniform(), 10, Dim::Three, ro);
    auto dom = SimulationDomain::create(grid, 0.5, 8);
    dom.total_steps = 250;
    dom.snapshot_every = 50;
    dom.workers = 2;
    RegionMonitor slab{"slab", [](double, double, double y) { return std::abs(y) < 0.45; }};
    const SourceSpec src{{0.13, 0.0, 0.0}, Component::Ez, 0.3, 0.1, 3.0};
    RunOptions opt;
    opt.keep_snapshots = true;
    const auto res = run(dom, {src}, {{{0.3, 0.1, 0.0}, Component::Ez, 1}}, {slab}, opt);
    CHECK(res.energy.back().energy > 0.0);
    CHECK(std::isfinite(res.energy.back().energy));
    CHECK(res.snapshots.back().components.size() == 3);
    auto one = dom;
    one.workers = 1;
    const auto res1 = run(one, {src}, {{{0.3, 0.1, 0.0}, Component::Ez, 1}}, {slab});
    CHECK(res1.probes[0].samples == res.probes[0].samples);
}
