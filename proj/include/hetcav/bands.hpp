#pragma once

#include "hetcav/geometry.hpp"

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace hetcav {

enum class Polarization { TE, TM };

/// In-plane vector (x along the waveguide, z transverse). Wavevectors are
/// in units of 2*pi/a, real-space vectors in units of a.
struct Vec2 {
    double x = 0.0;
    double z = 0.0;
};

/// Periodic cell of the 2D crystal: two lattice vectors and the hole
/// centres inside it. Lengths in units of a.
struct UnitCell {
    Vec2 a1;
    Vec2 a2;
    std::vector<Point2> holes;
    double radius = 0.29;

    /// Primitive hexagonal cell, one hole at the origin.
    static UnitCell bulk(const LatticeSpec& spec);
    /// 1 x rows supercell around a W1 waveguide (row 0 empty). The second
    /// lattice vector is (a/2, rows*pitch) for odd rows so that the crystal
    /// continues without a stacking fault across the supercell boundary.
    static UnitCell w1_supercell(const LatticeSpec& spec, int rows);
    /// Rectangular a x sqrt(3)a cell holding two holes.
    static UnitCell rectangular(const LatticeSpec& spec);

    double area() const;
    /// Reciprocal vectors in units of 2*pi/a.
    std::pair<Vec2, Vec2> reciprocal() const;
};

struct BandStructure {
    std::vector<Vec2> k_points;             // units of 2*pi/a
    std::vector<std::vector<double>> bands; // [k][band], a/lambda, ascending
    std::vector<std::vector<int>> parity;   // [k][band], +1/-1 about z = 0, 0 if mixed; may be empty
    Polarization polarization = Polarization::TE;
    int n_planewaves = 0;
};

/// Fourier coefficient of eps(r) over the cell at reciprocal vector G
/// (units of 2*pi/a). Real for centrosymmetric cells.
std::complex<double> epsilon_fourier_coefficient(const LatticeSpec& spec,
                                                 const UnitCell& cell,
                                                 double background_index,
                                                 Vec2 G);

/// Bulk (primitive cell) shorthand.
std::complex<double> epsilon_fourier_coefficient(const LatticeSpec& spec, double background_index, Vec2 G);

/// Plane-wave expansion of the 2D master equation on one cell, with the
/// inverse-permittivity matrix obtained by inverting the Toeplitz matrix
/// of eps coefficients. The basis is every reciprocal vector inside the
/// smallest complete |G| shell that contains at least `n_planewaves`
/// vectors, so it is closed under G -> -G and under z -> -z.
class PlaneWaveSolver {
public:
    PlaneWaveSolver(const LatticeSpec& spec, UnitCell cell, double background_index,
                    Polarization polarization, int n_planewaves);

    int basis_size() const { return static_cast<int>(basis_.size()); }
    Polarization polarization() const { return polarization_; }

    /// Hermitian operator at Bloch vector k; eigenvalues are (omega a / c)^2.
    Eigen::MatrixXcd assemble(Vec2 k) const;

    struct Solution {
        std::vector<double> freqs; // a/lambda, ascending
        std::vector<int> parity;
        Eigen::MatrixXcd vectors;  // columns, only when requested
    };
    Solution solve(Vec2 k, int n_bands, bool keep_vectors = false) const;

private:
    UnitCell cell_;
    Polarization polarization_;
    std::vector<Vec2> basis_;         // absolute G, units of 2*pi/a
    std::vector<int> mirror_;         // index of (Gx, -Gz), or -1
    Eigen::MatrixXcd inv_eps_;
};

inline constexpr int kMinPlaneWaves = 81;
inline constexpr int kDefaultBands = 8;

/// Gamma -> K -> M -> Gamma with `per_segment` points per segment
/// (the closing Gamma is included once).
std::vector<Vec2> hexagonal_k_path(int per_segment = 30);

/// Bands of the bulk crystal (primitive cell) along `k_path`.
BandStructure compute_bulk_bands(const LatticeSpec& spec,
                                 double background_index,
                                 Polarization polarization,
                                 const std::vector<Vec2>& k_path,
                                 int n_planewaves,
                                 int n_bands = kDefaultBands,
                                 int workers = 1);

struct BandGap {
    double lower = 0.0;
    double upper = 0.0;
    int below_band = -1; // index of the band under the gap
    double width() const { return upper - lower; }
};

/// Lowest complete gap (max of band i < min of band i+1) of a band set.
std::optional<BandGap> lowest_gap(const BandStructure& bands);

struct WaveguideBands {
    BandStructure bands;            // with parity
    BandGap bulk_gap;
    /// Per k: band index of the design band (lowest in-gap mode even in Hy
    /// about the waveguide axis), or -1.
    std::vector<int> design_band;
    /// Per k: eigenvector of the design band (empty when none).
    std::vector<Eigen::VectorXcd> design_vectors;
    /// Per k: every eigenvector computed (needed for band matching).
    std::vector<Eigen::MatrixXcd> vectors;

    /// Number of in-gap modes at k index i.
    int guided_count(std::size_t i) const;
    bool in_gap(double f) const { return f > bulk_gap.lower && f < bulk_gap.upper; }
};

/// k_x samples over [0.3, 0.5] * 2*pi/a (the guided band edge sits at 0.5).
std::vector<Vec2> default_waveguide_k(int count = 25);

/// Default basis for a supercell of `rows` rows.
int default_waveguide_planewaves(int rows);

/// Guided-mode dispersion of the W1 waveguide (TE) on a 1 x rows supercell.
/// Throws ConfigError for even or < 7 rows or a lattice without the defect,
/// NumericalError when no in-gap mode exists at any k.
WaveguideBands compute_waveguide_bands(const LatticeSpec& spec,
                                       double background_index,
                                       int supercell_rows,
                                       const std::vector<Vec2>& k_points,
                                       int n_planewaves,
                                       int n_bands = 14,
                                       int workers = 1);

struct ModeGap {
    double lower_edge = 0.0; // design band edge, pristine background
    double upper_edge = 0.0; // matched band edge, lowered background
    int band_index = -1;
    Vec2 k_edge;
    double width() const { return upper_edge - lower_edge; }
};

/// Mode-gap between two 2D background indices (already reduced). The
/// upper band is matched to the design band by parity and eigenvector
/// overlap at the design band's edge k.
ModeGap mode_gap_2d(const LatticeSpec& spec2d,
                    double background_pristine,
                    double background_lowered,
                    int supercell_rows,
                    const std::vector<Vec2>& k_points,
                    int n_planewaves,
                    int workers = 1);

struct ModeGapOptions {
    double target_freq = 0.333;  // operating point of the effective-index reduction
    int supercell_rows = 9;
    int n_planewaves = 0;        // 0 selects default_waveguide_planewaves(rows)
    std::vector<Vec2> k_points = default_waveguide_k();
    int workers = 1;
};

/// Mode-gap of the slab for an index drop delta_n, through the
/// effective-index reduction at options.target_freq.
ModeGap mode_gap(const LatticeSpec& spec, double delta_n, const ModeGapOptions& options = {});

} // namespace hetcav
