#include "hetcav/bands.hpp"

#include "hetcav/error.hpp"
#include "hetcav/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace hetcav {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt3 = std::numbers::sqrt3;

double dot(Vec2 u, Vec2 v) { return u.x * v.x + u.z * v.z; }
double norm(Vec2 v) { return std::hypot(v.x, v.z); }
Vec2 operator+(Vec2 u, Vec2 v) { return {u.x + v.x, u.z + v.z}; }
Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.z}; }

double structure_form(double x)
{
    // 2 J1(x) / x, continuous at 0
    return x < 1e-8 ? 1.0 : 2.0 * std::cyl_bessel_j(1.0, x) / x;
}

} // namespace

UnitCell UnitCell::bulk(const LatticeSpec& spec)
{
    const LatticeSpec s = spec.normalized();
    return UnitCell{{1.0, 0.0}, {0.5, 0.5 * kSqrt3}, {{0.0, 0.0}}, s.radius};
}

UnitCell UnitCell::w1_supercell(const LatticeSpec& spec, int rows)
{
    const LatticeSpec s = spec.normalized();
    UnitCell cell;
    cell.radius = s.radius;
    cell.a1 = {1.0, 0.0};
    cell.a2 = {(rows % 2 != 0) ? 0.5 : 0.0, rows * s.row_pitch()};
    const int half = rows / 2;
    for (int r = -half; r <= half - (rows % 2 == 0 ? 1 : 0); ++r) {
        if (r == 0) {
            continue;
        }
        cell.holes.push_back({(r % 2 != 0) ? 0.5 : 0.0, r * s.row_pitch()});
    }
    return cell;
}

UnitCell UnitCell::rectangular(const LatticeSpec& spec)
{
    const LatticeSpec s = spec.normalized();
    return UnitCell{{1.0, 0.0}, {0.0, kSqrt3}, {{0.0, 0.0}, {0.5, 0.5 * kSqrt3}}, s.radius};
}

double UnitCell::area() const { return std::abs(a1.x * a2.z - a1.z * a2.x); }

std::pair<Vec2, Vec2> UnitCell::reciprocal() const
{
    const double det = a1.x * a2.z - a1.z * a2.x;
    // b_i . a_j = delta_ij (2*pi factored out)
    return {{a2.z / det, -a2.x / det}, {-a1.z / det, a1.x / det}};
}

std::complex<double> epsilon_fourier_coefficient(const LatticeSpec& spec,
                                                 const UnitCell& cell,
                                                 double background_index,
                                                 Vec2 G)
{
    const double eps_bg = background_index * background_index;
    const double eps_hole = spec.n_hole * spec.n_hole;
    const double fill = kPi * cell.radius * cell.radius / cell.area();
    const double g = norm(G);
    if (g < 1e-12) {
        return eps_bg + static_cast<double>(cell.holes.size()) * fill * (eps_hole - eps_bg);
    }
    std::complex<double> phase = 0.0;
    for (const auto& h : cell.holes) {
        phase += std::polar(1.0, -2.0 * kPi * (G.x * h.x + G.z * h.z));
    }
    return (eps_hole - eps_bg) * fill * structure_form(2.0 * kPi * g * cell.radius) * phase;
}

std::complex<double> epsilon_fourier_coefficient(const LatticeSpec& spec, double background_index, Vec2 G)
{
    return epsilon_fourier_coefficient(spec, UnitCell::bulk(spec), background_index, G);
}

PlaneWaveSolver::PlaneWaveSolver(const LatticeSpec& spec, UnitCell cell, double background_index,
                                 Polarization polarization, int n_planewaves)
    : cell_(std::move(cell)), polarization_(polarization)
{
    spec.validate();
    if (n_planewaves < kMinPlaneWaves) {
        throw ConfigError(fmt::format("plane-wave basis {} is below the minimum of {} (9x9)",
                                      n_planewaves, kMinPlaneWaves));
    }
    const auto [b1, b2] = cell_.reciprocal();
    const double radius = std::sqrt(2.0 * n_planewaves / (kPi * cell_.area())) + 2.0 * std::max(norm(b1), norm(b2));
    const int m1_max = static_cast<int>(std::ceil(radius * norm(cell_.a1))) + 1;
    const int m2_max = static_cast<int>(std::ceil(radius * norm(cell_.a2))) + 1;

    struct Candidate {
        int m1, m2;
        double len;
    };
    std::vector<Candidate> cands;
    for (int m1 = -m1_max; m1 <= m1_max; ++m1) {
        for (int m2 = -m2_max; m2 <= m2_max; ++m2) {
            const Vec2 G = m1 * b1 + m2 * b2;
            const double len = norm(G);
            if (len <= radius) {
                cands.push_back({m1, m2, len});
            }
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& l, const Candidate& r) {
        if (std::abs(l.len - r.len) > 1e-9) {
            return l.len < r.len;
        }
        return std::tie(l.m1, l.m2) < std::tie(r.m1, r.m2);
    });
    if (static_cast<int>(cands.size()) < n_planewaves) {
        throw NumericalError("plane-wave candidate set too small");
    }
    std::size_t count = static_cast<std::size_t>(n_planewaves);
    const double shell = cands[count - 1].len;
    while (count < cands.size() && cands[count].len - shell < 1e-9) {
        ++count;
    }
    cands.resize(count);

    std::map<std::pair<int, int>, int> lookup;
    std::vector<std::pair<int, int>> coords;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        basis_.push_back(cands[i].m1 * b1 + cands[i].m2 * b2);
        coords.emplace_back(cands[i].m1, cands[i].m2);
        lookup[coords.back()] = static_cast<int>(i);
    }
    mirror_.assign(basis_.size(), -1);
    for (std::size_t i = 0; i < basis_.size(); ++i) {
        const Vec2 m{basis_[i].x, -basis_[i].z};
        const auto key = std::make_pair(static_cast<int>(std::lround(dot(m, cell_.a1))),
                                        static_cast<int>(std::lround(dot(m, cell_.a2))));
        const auto it = lookup.find(key);
        if (it != lookup.end()) {
            const Vec2 back = key.first * b1 + key.second * b2;
            if (std::abs(back.x - m.x) < 1e-9 && std::abs(back.z - m.z) < 1e-9) {
                mirror_[i] = it->second;
            }
        }
    }

    // Toeplitz eps matrix, one coefficient per distinct difference.
    const int n = basis_size();
    std::map<std::pair<int, int>, std::complex<double>> coeff;
    Eigen::MatrixXcd eps(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const auto key = std::make_pair(coords[i].first - coords[j].first, coords[i].second - coords[j].second);
            auto it = coeff.find(key);
            if (it == coeff.end()) {
                const Vec2 dG = key.first * b1 + key.second * b2;
                it = coeff.emplace(key, epsilon_fourier_coefficient(spec, cell_, background_index, dG)).first;
            }
            eps(i, j) = it->second;
        }
    }
    Eigen::LLT<Eigen::MatrixXcd> llt(eps);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("permittivity matrix is not positive definite");
    }
    inv_eps_ = llt.solve(Eigen::MatrixXcd::Identity(n, n));
}

Eigen::MatrixXcd PlaneWaveSolver::assemble(Vec2 k) const
{
    const int n = basis_size();
    std::vector<Vec2> kG(n);
    std::vector<double> len(n);
    for (int i = 0; i < n; ++i) {
        kG[i] = 2.0 * kPi * (k + basis_[i]);
        len[i] = norm(kG[i]);
    }
    Eigen::MatrixXcd op(n, n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double w = polarization_ == Polarization::TE ? dot(kG[i], kG[j]) : len[i] * len[j];
            op(i, j) = inv_eps_(i, j) * w;
        }
    }
    return op;
}

PlaneWaveSolver::Solution PlaneWaveSolver::solve(Vec2 k, int n_bands, bool keep_vectors) const
{
    const Eigen::MatrixXcd op = assemble(k);
    const Eigen::MatrixXcd herm = 0.5 * (op + op.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        herm, keep_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
        throw NumericalError(fmt::format("eigensolver did not converge at k=({}, {}) with {} plane waves",
                                         k.x, k.z, basis_size()));
    }
    const int nb = std::min(n_bands, basis_size());
    const double scale = std::max(1.0, std::abs(es.eigenvalues()(basis_size() - 1)));
    Solution sol;
    sol.freqs.resize(nb);
    for (int b = 0; b < nb; ++b) {
        const double lambda = es.eigenvalues()(b);
        if (lambda < -1e-10 * scale) {
            throw NumericalError(fmt::format("negative squared frequency {} at k=({}, {})", lambda, k.x, k.z));
        }
        sol.freqs[b] = std::sqrt(std::max(0.0, lambda)) / (2.0 * kPi);
    }
    if (keep_vectors) {
        sol.vectors = es.eigenvectors().leftCols(nb);
        sol.parity.resize(nb);
        for (int b = 0; b < nb; ++b) {
            std::complex<double> overlap = 0.0;
            double total = 0.0;
            for (int i = 0; i < basis_size(); ++i) {
                total += std::norm(sol.vectors(i, b));
                if (mirror_[i] >= 0) {
                    overlap += std::conj(sol.vectors(i, b)) * sol.vectors(mirror_[i], b);
                }
            }
            const double p = overlap.real() / total;
            sol.parity[b] = p > 0.5 ? 1 : (p < -0.5 ? -1 : 0);
        }
    }
    return sol;
}

std::vector<Vec2> hexagonal_k_path(int per_segment)
{
    const Vec2 gamma{0.0, 0.0};
    const Vec2 K{2.0 / 3.0, 0.0};
    const Vec2 M{0.5, 0.5 / kSqrt3};
    std::vector<Vec2> path;
    const Vec2 corners[] = {gamma, K, M, gamma};
    for (int s = 0; s < 3; ++s) {
        for (int i = 0; i < per_segment; ++i) {
            const double t = static_cast<double>(i) / per_segment;
            path.push_back({corners[s].x + t * (corners[s + 1].x - corners[s].x),
                            corners[s].z + t * (corners[s + 1].z - corners[s].z)});
        }
    }
    path.push_back(gamma);
    return path;
}

BandStructure compute_bulk_bands(const LatticeSpec& spec,
                                 double background_index,
                                 Polarization polarization,
                                 const std::vector<Vec2>& k_path,
                                 int n_planewaves,
                                 int n_bands,
                                 int workers)
{
    const PlaneWaveSolver solver(spec, UnitCell::bulk(spec), background_index, polarization, n_planewaves);
    BandStructure out;
    out.k_points = k_path;
    out.polarization = polarization;
    out.n_planewaves = solver.basis_size();
    out.bands.resize(k_path.size());
    parallel_for(k_path.size(), workers, [&](std::size_t i) {
        out.bands[i] = solver.solve(k_path[i], n_bands).freqs;
    });
    return out;
}

std::optional<BandGap> lowest_gap(const BandStructure& bands)
{
    if (bands.bands.empty()) {
        return std::nullopt;
    }
    std::size_t nb = bands.bands.front().size();
    for (const auto& b : bands.bands) {
        nb = std::min(nb, b.size());
    }
    for (std::size_t n = 0; n + 1 < nb; ++n) {
        double top = 0.0;
        double bottom = std::numeric_limits<double>::infinity();
        for (const auto& b : bands.bands) {
            top = std::max(top, b[n]);
            bottom = std::min(bottom, b[n + 1]);
        }
        if (bottom > top) {
            return BandGap{top, bottom, static_cast<int>(n)};
        }
    }
    return std::nullopt;
}

int WaveguideBands::guided_count(std::size_t i) const
{
    return static_cast<int>(std::count_if(bands.bands[i].begin(), bands.bands[i].end(),
                                          [this](double f) { return in_gap(f); }));
}

std::vector<Vec2> default_waveguide_k(int count)
{
    std::vector<Vec2> ks;
    for (int i = 0; i < count; ++i) {
        ks.push_back({0.3 + 0.2 * i / std::max(1, count - 1), 0.0});
    }
    return ks;
}

int default_waveguide_planewaves(int rows) { return 55 * rows; }

WaveguideBands compute_waveguide_bands(const LatticeSpec& spec,
                                       double background_index,
                                       int supercell_rows,
                                       const std::vector<Vec2>& k_points,
                                       int n_planewaves,
                                       int n_bands,
                                       int workers)
{
    if (supercell_rows < 7 || supercell_rows % 2 == 0) {
        throw ConfigError(fmt::format("waveguide supercell needs an odd row count >= 7 (got {})", supercell_rows));
    }
    if (!spec.w1_defect) {
        throw ConfigError("waveguide bands need a lattice with the W1 defect");
    }
    const auto bulk = compute_bulk_bands(spec, background_index, Polarization::TE, hexagonal_k_path(10),
                                         std::max(kMinPlaneWaves, 225), 4, workers);
    const auto gap = lowest_gap(bulk);
    if (!gap) {
        throw NumericalError(fmt::format("no bulk TE gap at background index {}", background_index));
    }

    const PlaneWaveSolver solver(spec, UnitCell::w1_supercell(spec, supercell_rows), background_index,
                                 Polarization::TE, n_planewaves);
    WaveguideBands out;
    out.bulk_gap = *gap;
    out.bands.k_points = k_points;
    out.bands.polarization = Polarization::TE;
    out.bands.n_planewaves = solver.basis_size();
    out.bands.bands.resize(k_points.size());
    out.bands.parity.resize(k_points.size());
    out.vectors.resize(k_points.size());
    out.design_band.assign(k_points.size(), -1);
    out.design_vectors.resize(k_points.size());
    parallel_for(k_points.size(), workers, [&](std::size_t i) {
        auto sol = solver.solve(k_points[i], n_bands, true);
        for (std::size_t b = 0; b < sol.freqs.size(); ++b) {
            if (out.in_gap(sol.freqs[b]) && sol.parity[b] == 1) {
                out.design_band[i] = static_cast<int>(b);
                out.design_vectors[i] = sol.vectors.col(static_cast<Eigen::Index>(b));
                break;
            }
        }
        out.bands.bands[i] = std::move(sol.freqs);
        out.bands.parity[i] = std::move(sol.parity);
        out.vectors[i] = std::move(sol.vectors);
    });
    bool any_guided = false;
    for (std::size_t i = 0; i < k_points.size(); ++i) {
        any_guided = any_guided || out.guided_count(i) > 0;
    }
    if (!any_guided || std::all_of(out.design_band.begin(), out.design_band.end(), [](int b) { return b < 0; })) {
        throw NumericalError(fmt::format(
            "no guided mode: no even in-gap band for background index {} (gap {:.5f}-{:.5f}, {} rows)",
            background_index, gap->lower, gap->upper, supercell_rows));
    }
    return out;
}

ModeGap mode_gap_2d(const LatticeSpec& spec2d,
                    double background_pristine,
                    double background_lowered,
                    int supercell_rows,
                    const std::vector<Vec2>& k_points,
                    int n_planewaves,
                    int workers)
{
    if (!(background_lowered <= background_pristine)) {
        throw ConfigError("lowered background index must not exceed the pristine one");
    }
    const auto pristine = compute_waveguide_bands(spec2d, background_pristine, supercell_rows, k_points,
                                                  n_planewaves, 14, workers);
    std::size_t edge = k_points.size();
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k_points.size(); ++i) {
        const int b = pristine.design_band[i];
        if (b >= 0 && pristine.bands.bands[i][b] < lowest) {
            lowest = pristine.bands.bands[i][b];
            edge = i;
        }
    }
    ModeGap gap;
    gap.k_edge = k_points[edge];
    gap.band_index = pristine.design_band[edge];
    gap.lower_edge = lowest;

    const auto lowered = compute_waveguide_bands(spec2d, background_lowered, supercell_rows, {gap.k_edge},
                                                 n_planewaves, 14, 1);
    const Eigen::VectorXcd& ref = pristine.design_vectors[edge];
    double best = -1.0;
    int best_band = -1;
    for (std::size_t b = 0; b < lowered.bands.bands[0].size(); ++b) {
        if (lowered.bands.parity[0][b] != 1) {
            continue;
        }
        const double ov = std::abs(ref.dot(lowered.vectors[0].col(static_cast<Eigen::Index>(b))));
        if (ov > best) {
            best = ov;
            best_band = static_cast<int>(b);
        }
    }
    if (best_band < 0) {
        throw NumericalError("mode gap: design band not identified in the lowered structure");
    }
    gap.upper_edge = lowered.bands.bands[0][best_band];
    return gap;
}

ModeGap mode_gap(const LatticeSpec& spec, double delta_n, const ModeGapOptions& options)
{
    spec.validate();
    if (!(delta_n >= 0.0)) {
        throw ConfigError(fmt::format("delta_n must be >= 0 (got {})", delta_n));
    }
    const double n_hi = effective_slab_index(spec, spec.n_slab, options.target_freq);
    const double n_lo = effective_slab_index(spec, spec.n_slab - delta_n, options.target_freq);
    LatticeSpec spec2d = spec;
    spec2d.n_slab = n_hi;
    const int n_pw = options.n_planewaves > 0 ? options.n_planewaves
                                              : default_waveguide_planewaves(options.supercell_rows);
    return mode_gap_2d(spec2d, n_hi, n_lo, options.supercell_rows, options.k_points, n_pw, options.workers);
}

} // namespace hetcav
