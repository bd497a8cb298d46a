#include "doctest.h"

#include "hetcav/bands.hpp"
#include "hetcav/error.hpp"

#include <cmath>
#include <numbers>

using namespace hetcav;

namespace {

// Effective index of the 0.9a diamond slab at a/lambda = 0.333.
constexpr double kEffIndex = 2.13073097194161;

} // namespace

TEST_CASE("epsilon Fourier coefficients")
{
    const LatticeSpec spec;
    const double f = 2.0 * std::numbers::pi / std::sqrt(3.0) * 0.29 * 0.29;
    CHECK(epsilon_fourier_coefficient(spec, 2.4, {0, 0}).real() == doctest::Approx(f + (1 - f) * 5.76));
    // chord-length quadrature of eps over a rectangular cell, computed offline
    CHECK(std::abs(epsilon_fourier_coefficient(spec, 2.4, {0, 0}).real() - 4.307814187414428) < 1e-6);

    const auto cell = UnitCell::bulk(spec);
    const auto [b1, b2] = cell.reciprocal();
    for (int m1 = -3; m1 <= 3; ++m1) {
        for (int m2 = -3; m2 <= 3; ++m2) {
            const Vec2 G{m1 * b1.x + m2 * b2.x, m1 * b1.z + m2 * b2.z};
            const auto c = epsilon_fourier_coefficient(spec, 2.4, G);
            const auto cm = epsilon_fourier_coefficient(spec, 2.4, {-G.x, -G.z});
            CHECK(std::abs(c.imag()) < 1e-14);
            CHECK(std::abs(c - cm) < 1e-14);
        }
    }
    // the W1 supercell is centrosymmetric too
    const auto sc = UnitCell::w1_supercell(spec, 9);
    const auto [s1, s2] = sc.reciprocal();
    for (int m1 = -2; m1 <= 2; ++m1) {
        for (int m2 = -6; m2 <= 6; ++m2) {
            const Vec2 G{m1 * s1.x + m2 * s2.x, m1 * s1.z + m2 * s2.z};
            CHECK(std::abs(epsilon_fourier_coefficient(spec, sc, 2.4, G).imag()) < 1e-13);
        }
    }
}

TEST_CASE("unit cells")
{
    const LatticeSpec spec;
    CHECK(UnitCell::bulk(spec).area() == doctest::Approx(std::sqrt(3.0) / 2));
    CHECK(UnitCell::rectangular(spec).area() == doctest::Approx(std::sqrt(3.0)));
    const auto sc = UnitCell::w1_supercell(spec, 9);
    CHECK(sc.holes.size() == 8);
    CHECK(sc.area() == doctest::Approx(9 * std::sqrt(3.0) / 2));
    const auto [b1, b2] = sc.reciprocal();
    CHECK(b1.x * sc.a1.x + b1.z * sc.a1.z == doctest::Approx(1.0));
    CHECK(b1.x * sc.a2.x + b1.z * sc.a2.z == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(b2.x * sc.a2.x + b2.z * sc.a2.z == doctest::Approx(1.0));
}

TEST_CASE("plane-wave operator")
{
    const LatticeSpec spec;
    for (auto pol : {Polarization::TE, Polarization::TM}) {
        const PlaneWaveSolver solver(spec, UnitCell::bulk(spec), kEffIndex, pol, 121);
        CHECK(solver.basis_size() >= 121);
        for (Vec2 k : {Vec2{0.1, 0.05}, Vec2{0.5, 0.2887}, Vec2{0.6667, 0.0}}) {
            const auto op = solver.assemble(k);
            const double rel = (op - op.adjoint()).norm() / op.norm();
            CHECK(rel < 1e-12);
        }
    }
    CHECK_THROWS_AS(PlaneWaveSolver(spec, UnitCell::bulk(spec), 2.4, Polarization::TE, 80), ConfigError);
}

TEST_CASE("bulk bands")
{
    const LatticeSpec spec;
    SUBCASE("gamma point and time reversal")
    {
        const std::vector<Vec2> ks{{0, 0}, {0.21, 0.13}, {-0.21, -0.13}, {0.4, -0.1}, {-0.4, 0.1}};
        for (auto pol : {Polarization::TE, Polarization::TM}) {
            const auto bs = compute_bulk_bands(spec, kEffIndex, pol, ks, 121);
            CHECK(bs.bands[0][0] < 1e-6);
            for (std::size_t b = 0; b < bs.bands[1].size(); ++b) {
                CHECK(std::abs(bs.bands[1][b] - bs.bands[2][b]) < 1e-10);
                CHECK(std::abs(bs.bands[3][b] - bs.bands[4][b]) < 1e-10);
            }
            for (const auto& row : bs.bands) {
                CHECK(std::is_sorted(row.begin(), row.end()));
                CHECK(row.front() >= 0.0);
            }
        }
    }
    SUBCASE("TE gap and basis convergence")
    {
        const auto path = hexagonal_k_path(10);
        const auto coarse = compute_bulk_bands(spec, kEffIndex, Polarization::TE, path, 225, 4);
        const auto fine = compute_bulk_bands(spec, kEffIndex, Polarization::TE, path, 441, 4);
        const auto g1 = lowest_gap(coarse);
        const auto g2 = lowest_gap(fine);
        REQUIRE(g1);
        REQUIRE(g2);
        CHECK(g1->below_band == 0);
        CHECK(std::abs(g1->lower - g2->lower) / g2->lower < 5e-3);
        CHECK(std::abs(g1->upper - g2->upper) / g2->upper < 5e-3);
        MESSAGE("TE gap (441 pw): " << g2->lower << " - " << g2->upper);
    }
    SUBCASE("scaling invariance")
    {
        LatticeSpec scaled = spec;
        scaled.a = 240.0;
        scaled.radius = 0.29 * 240.0;
        scaled.thickness = 0.9 * 240.0;
        const std::vector<Vec2> ks{{0.3, 0.1}, {0.5, 0.0}};
        const auto a = compute_bulk_bands(spec, kEffIndex, Polarization::TE, ks, 121);
        const auto b = compute_bulk_bands(scaled, kEffIndex, Polarization::TE, ks, 121);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            for (std::size_t n = 0; n < a.bands[i].size(); ++n) {
                CHECK(std::abs(a.bands[i][n] - b.bands[i][n]) < 1e-10);
            }
        }
    }
    SUBCASE("worker count does not change results")
    {
        const auto path = hexagonal_k_path(4);
        const auto one = compute_bulk_bands(spec, kEffIndex, Polarization::TE, path, 121, 6, 1);
        const auto three = compute_bulk_bands(spec, kEffIndex, Polarization::TE, path, 121, 6, 3);
        CHECK(one.bands == three.bands);
    }
}

TEST_CASE("waveguide bands")
{
    LatticeSpec spec;
    spec.n_slab = kEffIndex;
    const std::vector<Vec2> ks{{0.3, 0}, {0.4, 0}, {0.5, 0}};

    SUBCASE("preconditions")
    {
        CHECK_THROWS_AS(compute_waveguide_bands(spec, kEffIndex, 8, ks, 400), ConfigError);
        CHECK_THROWS_AS(compute_waveguide_bands(spec, kEffIndex, 5, ks, 400), ConfigError);
        LatticeSpec bulk = spec;
        bulk.w1_defect = false;
        CHECK_THROWS_AS(compute_waveguide_bands(bulk, kEffIndex, 9, ks, 400), ConfigError);
    }
    SUBCASE("guided modes and convergence in supercell size")
    {
        const auto wg9 = compute_waveguide_bands(spec, kEffIndex, 9, ks, default_waveguide_planewaves(9));
        const auto wg13 = compute_waveguide_bands(spec, kEffIndex, 13, {{0.5, 0}}, default_waveguide_planewaves(13));
        // two TE (even-like) guided bands inside the gap at the zone edge
        CHECK(wg9.guided_count(2) >= 2);
        REQUIRE(wg9.design_band[2] >= 0);
        REQUIRE(wg13.design_band[0] >= 0);
        const double e9 = wg9.bands.bands[2][wg9.design_band[2]];
        const double e13 = wg13.bands.bands[0][wg13.design_band[0]];
        CHECK(std::abs(e9 - e13) / e13 < 5e-3);
        // design band edge is at the zone boundary
        for (std::size_t i = 0; i < 2; ++i) {
            if (wg9.design_band[i] >= 0) {
                CHECK(wg9.bands.bands[i][wg9.design_band[i]] > e9);
            }
        }
        MESSAGE("design band edge rows=9: " << e9 << ", rows=13: " << e13);
    }
    SUBCASE("lower index raises every band")
    {
        const auto hi = compute_waveguide_bands(spec, kEffIndex, 9, ks, 300);
        const auto lo = compute_waveguide_bands(spec, kEffIndex - 0.02, 9, ks, 300);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            for (std::size_t b = 0; b < hi.bands.bands[i].size(); ++b) {
                CHECK(lo.bands.bands[i][b] > hi.bands.bands[i][b]);
            }
        }
    }
}

TEST_CASE("mode gap")
{
    const LatticeSpec spec;
    ModeGapOptions opt;
    opt.k_points = {{0.45, 0}, {0.5, 0}};
    opt.n_planewaves = 300;
    const auto zero = mode_gap(spec, 0.0, opt);
    CHECK(zero.width() == 0.0);
    CHECK(zero.k_edge.x == doctest::Approx(0.5));

    const auto g1 = mode_gap(spec, 0.01, opt);
    const auto g2 = mode_gap(spec, 0.02, opt);
    CHECK(g1.width() > 0.0);
    CHECK(g2.width() > g1.width());
    CHECK(g1.lower_edge == zero.lower_edge);
    MESSAGE("mode gap widths: " << g1.width() << " " << g2.width());
    CHECK_THROWS_AS(mode_gap(spec, -0.01, opt), ConfigError);
}
