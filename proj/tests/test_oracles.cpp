#include "doctest.h"

#include "hetcav/error.hpp"
#include "hetcav/oracles.hpp"

#include <cmath>
#include <array>
#include <random>

using namespace hetcav;

TEST_CASE("transfer matrix limits")
{
    LayerStack empty;
    const auto a = transfer_matrix(empty, 0.7);
    CHECK(a.R == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(a.T == doctest::Approx(1.0).epsilon(1e-15));

    LayerStack interface;
    interface.n_in = 1.0;
    interface.n_out = 2.0;
    const auto b = transfer_matrix(interface, 0.3);
    CHECK(std::abs(b.R - 1.0 / 9.0) < 1e-15);
    CHECK(std::abs(b.R + b.T - 1.0) < 1e-15);

    // a layer of the exit medium changes nothing
    interface.layers.push_back({2.0, 0.37});
    CHECK(std::abs(transfer_matrix(interface, 0.3).R - 1.0 / 9.0) < 1e-14);
    CHECK_THROWS_AS(transfer_matrix(interface, 0.0), ConfigError);
    interface.layers.push_back({0.5, 1.0});
    CHECK_THROWS_AS(transfer_matrix(interface, 0.3), ConfigError);
}

TEST_CASE("quarter-wave stacks match the closed form")
{
    for (int pairs = 1; pairs <= 8; ++pairs) {
        for (const auto& [nh, nl, ns] : std::array<std::array<double, 3>, 3>{{{2.5, 1.25, 1.0}, {3.5, 1.45, 1.5}, {2.4, 1.0, 2.4}}}) {
            LayerStack s;
            s.n_out = ns;
            for (int p = 0; p < pairs; ++p) {
                s.layers.push_back({nh, 0.25 / nh});
                s.layers.push_back({nl, 0.25 / nl});
            }
            const auto t = transfer_matrix(s, 1.0);
            CHECK(std::abs(t.R - quarter_wave_reflectance(1.0, nh, nl, ns, pairs)) < 1e-10);
        }
    }
}

TEST_CASE("energy conservation and reciprocity")
{
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> n(1.0, 3.5), d(0.01, 0.6), f(0.05, 1.5);
    for (int trial = 0; trial < 200; ++trial) {
        LayerStack s;
        s.n_in = n(rng);
        s.n_out = n(rng);
        const int layers = 1 + trial % 12;
        for (int l = 0; l < layers; ++l) {
            s.layers.push_back({n(rng), d(rng)});
        }
        const double freq = f(rng);
        const auto fwd = transfer_matrix(s, freq);
        const auto bwd = transfer_matrix(s.reversed(), freq);
        CHECK(std::abs(fwd.R + fwd.T - 1.0) < 1e-12);
        CHECK(std::abs(fwd.T - bwd.T) < 1e-12);
    }
}

TEST_CASE("Fabry-Perot resonance")
{
    SUBCASE("four-pair Bragg cavity")
    {
        // independent numpy characteristic-matrix scan with brentq half-maximum crossings
        const auto s = bragg_cavity(2.5, 1.25, 4, 1.0);
        const auto r = fabry_perot_q(s, 0.9, 1.1);
        CHECK(r.freq == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(r.Q == doctest::Approx(1002.7066971486626).epsilon(1e-6));
        CHECK(r.peak_transmittance == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("more pairs raise Q geometrically")
    {
        double prev = 0.0;
        std::vector<double> qs;
        for (int pairs = 1; pairs <= 6; ++pairs) {
            const double q = fabry_perot_q(bragg_cavity(2.5, 1.25, pairs, 1.0), 0.8, 1.2).Q;
            CHECK(q > prev);
            prev = q;
            qs.push_back(q);
        }
        // each extra pair multiplies the mirror transmission by about (nL/nH)^2
        const double ratio = qs[5] / qs[4];
        CHECK(ratio == doctest::Approx(4.0).epsilon(0.05));
    }
    SUBCASE("low-finesse limit")
    {
        double prev = 1e300;
        double last = 0.0;
        for (double nh : {2.5, 2.0, 1.6, 1.4, 1.3}) {
            const double q = fabry_perot_q(bragg_cavity(nh, 1.25, 1, 1.0), 0.5, 1.5).Q;
            CHECK(q < prev);
            prev = q;
            last = q;
        }
        CHECK(last < 10.0);
    }
    SUBCASE("no peak in range")
    {
        CHECK_THROWS_AS(fabry_perot_q(bragg_cavity(2.5, 1.25, 4, 1.0), 1.01, 1.02), NumericalError);
    }
}
