#pragma once

#include "hetcav/fdtd.hpp"
#include "hetcav/geometry.hpp"

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace hetcav {

/// One decaying sinusoid a*exp(-gamma t)cos(2 pi f t + phase).
struct Mode {
    double freq = 0.0;      // a/lambda
    double Q = 0.0;         // pi f / gamma; +inf when gamma <= 0
    double decay = 0.0;     // gamma, amplitude decay rate in c/a
    double amplitude = 0.0; // at t = 0 of the analysed series
    double phase = 0.0;
};

struct HarmonicInversionOptions {
    /// Singular values below this fraction of the largest are dropped.
    double svd_threshold = 1e-8;
    int max_modes = 40;
    /// Target length of the decimated series.
    int target_samples = 1500;
    /// Upper bound on the pencil parameter (columns of the Hankel matrix).
    int max_pencil = 256;
    /// Vandermonde condition number above which the result is flagged.
    double condition_limit = 1e12;
};

struct HarmonicInversionResult {
    std::vector<Mode> modes; // inside the window, largest amplitude first
    double residual = 0.0;   // relative rms misfit of the band-limited signal
    bool ill_conditioned = false;
    std::string diagnostic;

    bool empty() const { return modes.empty(); }
};

/// Fits samples x_n = x(n dt) to a sum of damped exponentials by
/// demodulating to the window centre, low-pass filtering, decimating and
/// solving a matrix pencil. Real input is reported as real sinusoids.
HarmonicInversionResult harmonic_inversion(const std::vector<std::complex<double>>& samples,
                                           double dt,
                                           double f_lo,
                                           double f_hi,
                                           const HarmonicInversionOptions& options = {});

/// Same on a probe record, starting at sample `first` (defaults to the
/// first sample after every source is off).
HarmonicInversionResult harmonic_inversion(const ProbeRecord& series,
                                           double f_lo,
                                           double f_hi,
                                           long first = -1,
                                           const HarmonicInversionOptions& options = {});

/// Picks the strongest mode; ties within 1% amplitude go to the one
/// nearest the window centre.
const Mode* select_mode(const HarmonicInversionResult& result, double f_lo, double f_hi);

struct DecayFit {
    double Q = 0.0;
    double tau = 0.0;       // energy e-folding time
    double residual = 0.0;  // rms of the log-energy misfit
    bool infinite = false;  // energy did not decay measurably
};

/// Line fit to log U(t). Throws NumericalError when the energy rises by
/// more than `max_rise` (relative) between samples, which signals beating
/// between several modes.
DecayFit q_from_decay(const std::vector<double>& times,
                      const std::vector<double>& energy,
                      double freq_norm,
                      double max_rise = 0.05);

/// Peak-normalised mode volume sum(eps|E|^2 dV) / max(eps|E|^2), in units
/// of (lambda/n_ref)^d with d the grid dimensionality (area in 2D).
/// Throws NumericalError when the maximum sits inside the outer
/// `pml_cells` layer.
double mode_volume(const FieldSnapshot& snapshot,
                   const DielectricGrid& grid,
                   double freq_norm,
                   double n_ref,
                   int pml_cells = 0);

/// Share of sum(eps|E|^2) whose cell centres satisfy `region`.
double energy_fraction_in_region(const FieldSnapshot& snapshot,
                                 const DielectricGrid& grid,
                                 const std::function<bool(double x, double z, double y)>& region);

} // namespace hetcav
