#include "hetcav/oracles.hpp"

#include "hetcav/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <fmt/format.h>

namespace hetcav {

namespace {

using cplx = std::complex<double>;

double peak_transmittance(const LayerStack& s, double f) { return transfer_matrix(s, f).T; }

} // namespace

void LayerStack::validate() const
{
    if (!(n_in >= 1.0) || !(n_out >= 1.0)) {
        throw ConfigError("entry and exit indices must be >= 1");
    }
    for (const auto& l : layers) {
        if (!(l.index >= 1.0) || !(l.thickness > 0.0)) {
            throw ConfigError(fmt::format("layer needs index >= 1 and thickness > 0 (got {}, {})", l.index, l.thickness));
        }
    }
}

LayerStack LayerStack::reversed() const
{
    LayerStack r;
    r.layers.assign(layers.rbegin(), layers.rend());
    r.n_in = n_out;
    r.n_out = n_in;
    return r;
}

Transmission transfer_matrix(const LayerStack& stack, double freq)
{
    stack.validate();
    if (!(freq > 0.0)) {
        throw ConfigError("transfer matrix needs freq > 0");
    }
    cplx m11 = 1.0, m12 = 0.0, m21 = 0.0, m22 = 1.0;
    const cplx i(0.0, 1.0);
    for (const auto& l : stack.layers) {
        const double d = 2.0 * std::numbers::pi * l.index * l.thickness * freq;
        const double c = std::cos(d);
        const double s = std::sin(d);
        const cplx a11 = c, a12 = i * s / l.index, a21 = i * l.index * s, a22 = c;
        const cplx n11 = m11 * a11 + m12 * a21;
        const cplx n12 = m11 * a12 + m12 * a22;
        const cplx n21 = m21 * a11 + m22 * a21;
        const cplx n22 = m21 * a12 + m22 * a22;
        m11 = n11;
        m12 = n12;
        m21 = n21;
        m22 = n22;
    }
    const double n0 = stack.n_in;
    const double ns = stack.n_out;
    const cplx den = n0 * m11 + n0 * ns * m12 + m21 + ns * m22;
    const cplx r = (n0 * m11 + n0 * ns * m12 - m21 - ns * m22) / den;
    const cplx t = 2.0 * n0 / den;
    return {std::norm(r), ns / n0 * std::norm(t)};
}

double quarter_wave_reflectance(double n_in, double n_high, double n_low, double n_sub, int pairs)
{
    const double y = std::pow(n_high / n_low, 2 * pairs) * n_sub;
    const double r = (n_in - y) / (n_in + y);
    return r * r;
}

FabryPerotResonance fabry_perot_q(const LayerStack& stack, double f_lo, double f_hi, int scan_points)
{
    stack.validate();
    if (!(f_lo > 0.0 && f_hi > f_lo) || scan_points < 3) {
        throw ConfigError("fabry_perot_q needs 0 < f_lo < f_hi and at least 3 scan points");
    }
    const double step = (f_hi - f_lo) / (scan_points - 1);
    int best = -1;
    double best_t = -1.0;
    for (int j = 1; j + 1 < scan_points; ++j) {
        const double t0 = peak_transmittance(stack, f_lo + (j - 1) * step);
        const double t1 = peak_transmittance(stack, f_lo + j * step);
        const double t2 = peak_transmittance(stack, f_lo + (j + 1) * step);
        if (t1 >= t0 && t1 >= t2 && t1 > best_t) {
            best = j;
            best_t = t1;
        }
    }
    if (best < 0) {
        throw NumericalError(fmt::format("no transmission peak inside [{}, {}]", f_lo, f_hi));
    }
    // golden-section refinement of the maximum
    double a = f_lo + (best - 1) * step;
    double b = f_lo + (best + 1) * step;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    while (b - a > 1e-15 * b) {
        if (peak_transmittance(stack, c) > peak_transmittance(stack, d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    FabryPerotResonance res;
    res.freq = 0.5 * (a + b);
    res.peak_transmittance = peak_transmittance(stack, res.freq);
    const double half = 0.5 * res.peak_transmittance;

    // Returns a negative value when T stays above half maximum (low finesse).
    auto crossing = [&](double inside, double dir) {
        double span = step;
        double outside = inside + dir * span;
        while (peak_transmittance(stack, outside) > half) {
            span *= 2.0;
            outside = inside + dir * span;
            if (outside <= 0.0 || span > res.freq) {
                return -1.0;
            }
        }
        double lo = inside, hi = outside;
        for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-16 * res.freq; ++it) {
            const double mid = 0.5 * (lo + hi);
            (peak_transmittance(stack, mid) > half ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    const double left = crossing(res.freq, -1.0);
    const double right = crossing(res.freq, 1.0);
    if (left < 0.0 || right < 0.0) {
        // Lorentzian width from the peak curvature: T'' = -8 T / FWHM^2.
        const double h = 1e-4 * res.freq;
        const double t0 = res.peak_transmittance;
        const double curv = (peak_transmittance(stack, res.freq + h) - 2.0 * t0 +
                             peak_transmittance(stack, res.freq - h)) / (h * h);
        if (!(curv < 0.0)) {
            throw NumericalError("transmission maximum is flat; no resonance width");
        }
        res.fwhm = std::sqrt(-8.0 * t0 / curv);
        res.Q = res.freq / res.fwhm;
        return res;
    }
    res.fwhm = right - left;
    res.Q = res.freq / res.fwhm;
    return res;
}

LayerStack bragg_cavity(double n_high, double n_low, int pairs, double f0, double n_outside)
{
    if (pairs < 0 || !(f0 > 0.0)) {
        throw ConfigError("bragg_cavity needs pairs >= 0 and f0 > 0");
    }
    const double qh = 0.25 / (n_high * f0);
    const double ql = 0.25 / (n_low * f0);
    LayerStack s;
    s.n_in = n_outside;
    s.n_out = n_outside;
    for (int p = 0; p < pairs; ++p) {
        s.layers.push_back({n_high, qh});
        s.layers.push_back({n_low, ql});
    }
    s.layers.push_back({n_high, 2.0 * qh});
    for (int p = 0; p < pairs; ++p) {
        s.layers.push_back({n_low, ql});
        s.layers.push_back({n_high, qh});
    }
    s.validate();
    return s;
}

} // namespace hetcav
