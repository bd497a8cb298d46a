#include "hetcav/resonance.hpp"

#include "hetcav/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <fmt/format.h>

namespace hetcav {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Blackman-windowed sinc, unit DC gain, 2*half+1 taps.
std::vector<double> lowpass_taps(double cutoff, int half)
{
    std::vector<double> h(2 * half + 1);
    double sum = 0.0;
    for (int m = -half; m <= half; ++m) {
        const double sinc = m == 0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * m) / (kPi * m);
        const double u = static_cast<double>(m + half) / (2 * half);
        const double w = 0.42 - 0.5 * std::cos(2.0 * kPi * u) + 0.08 * std::cos(4.0 * kPi * u);
        h[m + half] = sinc * w;
        sum += h[m + half];
    }
    for (double& v : h) {
        v /= sum;
    }
    return h;
}

// Response of the centred filter to exp(s n dt).
cplx filter_response(const std::vector<double>& h, cplx s_dt)
{
    const int half = static_cast<int>(h.size() / 2);
    cplx acc = 0.0;
    for (int m = -half; m <= half; ++m) {
        acc += h[m + half] * std::exp(-s_dt * static_cast<double>(m));
    }
    return acc;
}

} // namespace

HarmonicInversionResult harmonic_inversion(const std::vector<cplx>& samples,
                                           double dt,
                                           double f_lo,
                                           double f_hi,
                                           const HarmonicInversionOptions& options)
{
    const std::size_t n = samples.size();
    if (n < 1024) {
        throw ConfigError(fmt::format("harmonic inversion needs at least 1024 samples (got {})", n));
    }
    if (!(dt > 0.0) || !(f_lo < f_hi) || f_lo < -0.5 / dt || f_hi > 0.5 / dt) {
        throw ConfigError(fmt::format("frequency window [{}, {}] must be ordered and within Nyquist {}",
                                      f_lo, f_hi, 0.5 / dt));
    }

    HarmonicInversionResult out;
    double peak = 0.0;
    bool real_input = true;
    for (const auto& v : samples) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw NumericalError("harmonic inversion input contains non-finite samples");
        }
        peak = std::max(peak, std::abs(v));
        real_input = real_input && v.imag() == 0.0;
    }
    if (peak == 0.0) {
        out.diagnostic = "signal is identically zero";
        return out;
    }

    const double fc = 0.5 * (f_lo + f_hi);
    const double half_band = 0.5 * (f_hi - f_lo);

    // Decimation keeps at least target_samples points and a new Nyquist of
    // 2.5x the half band.
    const int d_alias = std::max(1, static_cast<int>(std::floor(1.0 / (5.0 * half_band * dt))));
    const int d_len = std::max(1, static_cast<int>(n / static_cast<std::size_t>(options.target_samples)));
    const int D = std::min(d_alias, d_len);

    std::vector<double> taps{1.0};
    if (D > 1) {
        taps = lowpass_taps(1.6 * half_band * dt, 8 * D);
    }
    const int half = static_cast<int>(taps.size() / 2);

    std::vector<cplx> mixed(n);
    for (std::size_t i = 0; i < n; ++i) {
        mixed[i] = samples[i] * std::polar(1.0, -2.0 * kPi * fc * dt * static_cast<double>(i));
    }
    std::vector<cplx> dec;
    for (std::size_t c = half; c + half < n; c += D) {
        cplx acc = 0.0;
        for (int m = -half; m <= half; ++m) {
            acc += taps[m + half] * mixed[c - m];
        }
        dec.push_back(acc);
    }
    const int M = static_cast<int>(dec.size());
    if (M < 16) {
        out.diagnostic = "too few samples left after decimation";
        return out;
    }
    const double ddt = D * dt;

    // Matrix pencil on the Hankel matrix of the decimated series.
    const int L = std::min(M / 3, options.max_pencil);
    const int rows = M - L;
    Eigen::MatrixXcd Y(rows, L + 1);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j <= L; ++j) {
            Y(i, j) = dec[i + j];
        }
    }
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(Y, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    int K = 0;
    while (K < sv.size() && K < options.max_modes && sv(K) > options.svd_threshold * sv(0)) {
        ++K;
    }
    if (K == 0) {
        out.diagnostic = "rank collapse: no singular value above threshold";
        return out;
    }
    const Eigen::MatrixXcd U = svd.matrixU().leftCols(K);
    const Eigen::MatrixXcd U1 = U.topRows(rows - 1);
    const Eigen::MatrixXcd U2 = U.bottomRows(rows - 1);
    const Eigen::MatrixXcd P = U1.completeOrthogonalDecomposition().solve(U2);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(P, false);
    if (es.info() != Eigen::Success) {
        throw NumericalError("matrix pencil eigenvalue problem did not converge");
    }
    const Eigen::VectorXcd z = es.eigenvalues();

    // Amplitudes by least squares on the decimated series.
    Eigen::MatrixXcd V(M, K);
    for (int k = 0; k < K; ++k) {
        cplx p = 1.0;
        for (int i = 0; i < M; ++i) {
            V(i, k) = p;
            p *= z(k);
        }
    }
    Eigen::VectorXcd y(M);
    for (int i = 0; i < M; ++i) {
        y(i) = dec[i];
    }
    const auto qr = V.colPivHouseholderQr();
    const Eigen::VectorXcd c = qr.solve(y);
    const auto diag = qr.matrixQR().diagonal().cwiseAbs();
    if (diag.minCoeff() == 0.0 || diag.maxCoeff() / diag.minCoeff() > options.condition_limit) {
        out.ill_conditioned = true;
    }
    out.residual = (V * c - y).norm() / y.norm();

    for (int k = 0; k < K; ++k) {
        if (std::abs(z(k)) == 0.0) {
            continue;
        }
        const cplx s = std::log(z(k)) / ddt; // in the mixed frame
        const double f = fc + s.imag() / (2.0 * kPi);
        if (f < f_lo || f > f_hi) {
            continue;
        }
        const double gamma = -s.real();
        // Undo the filter gain and the offset of the first retained sample.
        const cplx a = c(k) / (filter_response(taps, s * dt) * std::exp(s * dt * static_cast<double>(half)));
        Mode mode;
        mode.freq = f;
        mode.decay = gamma;
        mode.Q = gamma > 0.0 ? kPi * f / gamma : std::numeric_limits<double>::infinity();
        mode.amplitude = (real_input ? 2.0 : 1.0) * std::abs(a);
        mode.phase = std::arg(a);
        out.modes.push_back(mode);
    }
    std::sort(out.modes.begin(), out.modes.end(),
              [](const Mode& a, const Mode& b) { return a.amplitude > b.amplitude; });
    if (out.modes.empty()) {
        out.diagnostic = "no mode inside the frequency window";
    }
    return out;
}

HarmonicInversionResult harmonic_inversion(const ProbeRecord& series,
                                           double f_lo,
                                           double f_hi,
                                           long first,
                                           const HarmonicInversionOptions& options)
{
    const long start = first >= 0 ? first : series.source_off_index;
    if (start < 0 || static_cast<std::size_t>(start) >= series.samples.size()) {
        throw ConfigError(fmt::format("analysis start {} outside the record of {} samples",
                                      start, series.samples.size()));
    }
    const std::vector<cplx> tail(series.samples.begin() + start, series.samples.end());
    return harmonic_inversion(tail, series.dt, f_lo, f_hi, options);
}

const Mode* select_mode(const HarmonicInversionResult& result, double f_lo, double f_hi)
{
    if (result.modes.empty()) {
        return nullptr;
    }
    const double centre = 0.5 * (f_lo + f_hi);
    const Mode* best = &result.modes.front();
    for (const auto& m : result.modes) {
        if (m.amplitude >= 0.99 * best->amplitude &&
            std::abs(m.freq - centre) < std::abs(best->freq - centre)) {
            best = &m;
        }
    }
    return best;
}

DecayFit q_from_decay(const std::vector<double>& times,
                      const std::vector<double>& energy,
                      double freq_norm,
                      double max_rise)
{
    if (times.size() != energy.size() || times.size() < 3) {
        throw ConfigError("decay fit needs at least three (time, energy) pairs of equal length");
    }
    if (!(freq_norm > 0.0)) {
        throw ConfigError("decay fit needs a positive frequency");
    }
    for (double u : energy) {
        if (!(u > 0.0) || !std::isfinite(u)) {
            throw NumericalError("energy series must be strictly positive after source turn-off");
        }
    }
    double worst_rise = 0.0;
    for (std::size_t i = 1; i < energy.size(); ++i) {
        worst_rise = std::max(worst_rise, energy[i] / energy[i - 1] - 1.0);
    }
    if (worst_rise > max_rise) {
        throw NumericalError(fmt::format(
            "energy rises by {:.1f}% between samples (beating between modes); re-excite with a narrower band",
            100.0 * worst_rise));
    }

    const std::size_t n = times.size();
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = std::log(energy[i]);
        st += times[i];
        sy += y;
        stt += times[i] * times[i];
        sty += times[i] * y;
    }
    const double denom = n * stt - st * st;
    const double slope = (n * sty - st * sy) / denom;
    const double icpt = (sy - slope * st) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::log(energy[i]) - (icpt + slope * times[i]);
        ss += r * r;
    }

    DecayFit fit;
    fit.residual = std::sqrt(ss / n);
    const double span = times.back() - times.front();
    if (-slope * span < 1e-9) {
        fit.infinite = true;
        fit.Q = std::numeric_limits<double>::infinity();
        fit.tau = std::numeric_limits<double>::infinity();
        return fit;
    }
    fit.tau = -1.0 / slope;
    fit.Q = 2.0 * kPi * freq_norm * fit.tau;
    return fit;
}

namespace {

void check_snapshot(const FieldSnapshot& snap, const DielectricGrid& grid)
{
    const std::size_t cells = static_cast<std::size_t>(snap.dims[0]) * snap.dims[1] * snap.dims[2];
    if (snap.energy_density.size() != cells || snap.dims != grid.dims) {
        throw ConfigError("snapshot does not match the dielectric grid");
    }
}

} // namespace

double mode_volume(const FieldSnapshot& snapshot,
                   const DielectricGrid& grid,
                   double freq_norm,
                   double n_ref,
                   int pml_cells)
{
    check_snapshot(snapshot, grid);
    if (!(freq_norm > 0.0) || !(n_ref > 0.0)) {
        throw ConfigError("mode volume needs positive frequency and reference index");
    }
    const auto& u = snapshot.energy_density;
    const auto it = std::max_element(u.begin(), u.end());
    if (*it <= 0.0) {
        throw NumericalError("mode volume of a zero field");
    }
    const std::size_t imax = static_cast<std::size_t>(it - u.begin());
    const int nx = grid.dims[0];
    const int nz = grid.dims[1];
    const int ix = static_cast<int>(imax % nx);
    const int iz = static_cast<int>((imax / nx) % nz);
    const int iy = static_cast<int>(imax / (static_cast<std::size_t>(nx) * nz));
    auto in_layer = [pml_cells](int i, int n) { return i < pml_cells || i >= n - pml_cells; };
    if (pml_cells > 0 && (in_layer(ix, nx) || in_layer(iz, nz) ||
                          (grid.dim == Dim::Three && in_layer(iy, grid.dims[2])))) {
        throw NumericalError("field maximum lies inside the absorbing layer (leaky or invalid mode)");
    }
    double sum = 0.0;
    for (double v : u) {
        sum += v;
    }
    const double volume = sum * grid.cell_volume() / *it;
    const double unit = 1.0 / (freq_norm * n_ref);
    const int d = static_cast<int>(grid.dim);
    return volume / std::pow(unit, d);
}

double energy_fraction_in_region(const FieldSnapshot& snapshot,
                                 const DielectricGrid& grid,
                                 const std::function<bool(double, double, double)>& region)
{
    check_snapshot(snapshot, grid);
    double inside = 0.0;
    double total = 0.0;
    for (int iy = 0; iy < grid.dims[2]; ++iy) {
        for (int iz = 0; iz < grid.dims[1]; ++iz) {
            for (int ix = 0; ix < grid.dims[0]; ++ix) {
                const double v = snapshot.energy_density[grid.index(ix, iz, iy)];
                total += v;
                const auto c = grid.center(ix, iz, iy);
                if (region(c[0], c[1], c[2])) {
                    inside += v;
                }
            }
        }
    }
    if (!(total > 0.0)) {
        throw NumericalError("energy fraction of a zero field");
    }
    return inside / total;
}

} // namespace hetcav
