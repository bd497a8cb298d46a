#pragma once

#include "hetcav/bands.hpp"
#include "hetcav/oracles.hpp"

#include <string>
#include <vector>

namespace hetcav {

/// Normal-incidence reflection off a single n1 -> n2 interface measured by
/// 1D FDTD (reference run minus incident run, DFT ratio at the probe).
struct FresnelCheck {
    double exact = 0.0;
    std::vector<double> freqs;
    std::vector<double> R;
    double worst_relative_error() const;
};

/// `cells_per_wavelength` counts cells per wavelength inside the denser
/// medium at f = 1.
FresnelCheck fdtd_fresnel(double n1, double n2, int cells_per_wavelength);

/// Bragg cavity ringdown (quarter-wave mirrors, half-wave spacer at f = 1)
/// against the transfer-matrix transmission peak.
struct FabryPerotCheck {
    FabryPerotResonance analytic;
    double freq = 0.0;
    double Q = 0.0;
    double freq_error() const;
    double Q_error() const;
};

FabryPerotCheck fdtd_fabry_perot(double n_high, double n_low, int pairs, int cells_per_wavelength);

/// Harmonic inversion on exact single-mode ringdowns near the design band.
struct SyntheticQCheck {
    double Q_true = 0.0;
    double freq_error = 0.0; // relative
    double Q_error = 0.0;    // relative
};

std::vector<SyntheticQCheck> synthetic_q_battery(const std::vector<double>& q_values = {1e3, 1e4, 1e5, 1e6});

/// Plane-wave bands against the FDTD Bloch spectrum of the rectangular
/// two-hole cell at one k. The rectangular cell folds the primitive bands
/// at k + (0, 1/sqrt(3)) onto k, so both sets are merged first.
struct BandComparison {
    Vec2 k;
    std::vector<double> plane_wave;
    std::vector<double> fdtd;
    /// Largest relative distance from each of the lowest `count` plane-wave
    /// bands to the nearest FDTD mode, and from each FDTD mode up to that
    /// band to the nearest plane-wave band. Nearest matching keeps a
    /// degenerate pair split by the grid from shifting the bands above it.
    double worst_error(int count) const;
};

BandComparison compare_bulk_bands(const LatticeSpec& spec,
                                  double background_index,
                                  Vec2 k,
                                  int resolution,
                                  int workers = 1);

/// Relative drift of the leapfrog energy in a closed PEC box with random
/// permittivity after `steps` source-free steps.
double pec_energy_drift(int dim, long steps);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// The full oracle battery (about a minute on one core).
std::vector<CheckResult> run_selftest(int workers = 1);

/// Fixed-width pass/fail table.
std::string format_checks(const std::vector<CheckResult>& checks);

} // namespace hetcav
