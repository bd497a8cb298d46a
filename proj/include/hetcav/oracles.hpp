#pragma once

#include <vector>

namespace hetcav {

struct Layer {
    double index = 1.0;
    double thickness = 0.0; // units of a
};

/// Normal-incidence multilayer between two semi-infinite media.
struct LayerStack {
    std::vector<Layer> layers; // in the order the incident wave meets them
    double n_in = 1.0;
    double n_out = 1.0;

    void validate() const;
    LayerStack reversed() const;
};

struct Transmission {
    double R = 0.0;
    double T = 0.0;
};

/// Characteristic-matrix reflectance and transmittance at frequency
/// freq = a/lambda (vacuum wavelength).
Transmission transfer_matrix(const LayerStack& stack, double freq);

/// Reflectance of N quarter-wave (H L) pairs on a substrate at the design
/// wavelength, from the closed form ((n0 - Y)/(n0 + Y))^2 with
/// Y = (nH/nL)^(2N) ns.
double quarter_wave_reflectance(double n_in, double n_high, double n_low, double n_sub, int pairs);

struct FabryPerotResonance {
    double freq = 0.0;
    double Q = 0.0;
    double peak_transmittance = 0.0;
    double fwhm = 0.0;
};

/// Locates the strongest transmission peak inside [f_lo, f_hi] and returns
/// Q = f_peak / FWHM. When the spectrum never falls to half maximum (weak
/// mirrors) the width comes from the peak curvature of an equivalent
/// Lorentzian. Throws NumericalError when no interior peak exists.
FabryPerotResonance fabry_perot_q(const LayerStack& stack, double f_lo, double f_hi, int scan_points = 4001);

/// (H L)^pairs, a half-wave H spacer, then (L H)^pairs, quarter-wave at f0.
LayerStack bragg_cavity(double n_high, double n_low, int pairs, double f0, double n_outside = 1.0);

} // namespace hetcav
