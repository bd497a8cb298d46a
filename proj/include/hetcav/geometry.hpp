#pragma once

#include <array>
#include <optional>
#include <variant>
#include <vector>

namespace hetcav {

/// Photonic crystal slab: hexagonal lattice of air holes with an optional
/// W1 line defect along x (the Gamma-K direction).
///
/// Coordinates: x runs along the waveguide, z is the in-plane transverse
/// axis, y is the slab normal (3D only). The origin sits at the cavity
/// centre. All lengths are in the same unit as `a`; solvers work with
/// lengths divided by `a` and frequencies in a/lambda.
struct LatticeSpec {
    double a = 1.0;
    double radius = 0.29;
    double thickness = 0.9;
    double n_slab = 2.4;
    double n_hole = 1.0;
    int periods_x = 35;
    int periods_z = 25;
    bool w1_defect = true;
    double a_nm = 240.0;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;

    /// Copy with a = 1 and every length divided by the old a.
    LatticeSpec normalized() const;

    /// Spacing between hole rows, a*sqrt(3)/2.
    double row_pitch() const;
};

struct StepProfile {
    double delta_n = 0.02;
    int m = 4;
    /// Real-valued correction added to the nominal length m*a, in units of a.
    double delta_length = 0.0;
};

struct GradualProfile {
    double l0 = 4.0;                             // units of a
    std::vector<double> steps{1.0, 1.0, 1.0, 1.0}; // units of a, centre outwards
    double delta_n_step = 0.004;
};

/// Background refractive index along the waveguide. The undamaged centre
/// keeps n_center; damage lowers the index outside it.
struct HeterostructureProfile {
    std::variant<StepProfile, GradualProfile> shape = StepProfile{};
    std::optional<double> n_center; // defaults to LatticeSpec::n_slab

    static HeterostructureProfile step(double delta_n, int m, double delta_length = 0.0);
    static HeterostructureProfile gradual(double l0, std::vector<double> steps, double delta_n_step);
    /// A step profile with zero index change, i.e. the pristine waveguide.
    static HeterostructureProfile uniform();

    bool is_step() const { return std::holds_alternative<StepProfile>(shape); }
    double center_index(const LatticeSpec& spec) const;
    /// Full extent of the index-modified structure in units of a:
    /// m + delta_length (step) or l0 + 2*sum(steps) (gradual).
    double total_length() const;
    /// Length of the undamaged centre in units of a.
    double core_length() const;
    /// Index drop of the outermost region.
    double outer_delta_n() const;
    /// Number of distinct index levels below n_center.
    int level_count() const;

    void validate(const LatticeSpec& spec) const;
};

enum class Dim { Two = 2, Three = 3 };

/// Cell-centred relative permittivity map.
///
/// Storage order is x fastest, then z, then y: index (iy*nz + iz)*nx + ix.
/// In 2D, dims[2] == 1.
struct DielectricGrid {
    int resolution = 0;
    Dim dim = Dim::Two;
    std::array<int, 3> dims{0, 0, 1};         // cells along x, z, y
    std::array<double, 3> origin{0, 0, 0};    // lower corner (x, z, y), units of a
    std::array<double, 3> spacing{0, 0, 0};   // cell edge per axis, normally 1/resolution
    std::vector<double> eps;

    double cell_size() const { return spacing[0]; }
    double cell_volume() const;
    std::size_t size() const { return eps.size(); }
    std::size_t index(int ix, int iz, int iy = 0) const
    {
        return (static_cast<std::size_t>(iy) * dims[1] + iz) * dims[0] + ix;
    }
    double at(int ix, int iz, int iy = 0) const { return eps[index(ix, iz, iy)]; }
    /// Cell-centre coordinates (x, z, y).
    std::array<double, 3> center(int ix, int iz, int iy = 0) const;
};

struct Point2 {
    double x = 0.0;
    double z = 0.0;
};

/// Hole centres of the finite periods_x x periods_z patch. Rows are
/// a*sqrt(3)/2 apart, odd rows shifted by a/2, row 0 lies on the
/// waveguide axis and is dropped when w1_defect is set.
std::vector<Point2> build_hole_centers(const LatticeSpec& spec);

/// Background index at position x (units of a), ignoring holes.
double index_at(const LatticeSpec& spec, const HeterostructureProfile& profile, double x);

struct RasterOptions {
    /// Extra cells on each side along x and z; the lattice and the profile
    /// continue into the padding (used for absorbing layers).
    int pad_cells = 0;
    /// Overrides periods_x*a as the x extent when set (units of a).
    std::optional<double> extent_x;
    /// Air above and below the slab in 3D, units of a.
    double air_padding = 1.0;
};

inline constexpr int kMinResolution = 8;

/// Rasterize the slab onto a cell grid. Cells straddling a hole edge get
/// the area (2D) or volume (3D) weighted arithmetic mean of the two
/// permittivities. The hole lattice is unbounded: holes cut by the domain
/// edge are included partially. The cell count along x and z is even so
/// that the origin lies on a cell corner.
DielectricGrid rasterize(const LatticeSpec& spec,
                         const HeterostructureProfile& profile,
                         int resolution,
                         Dim dim,
                         const RasterOptions& options = {});

/// Rasterize an arbitrary 2D box (lower corner, cell counts, cell edges
/// per axis) from the unbounded lattice. Used for periodic cells whose
/// period is not a whole number of square cells.
DielectricGrid rasterize_box(const LatticeSpec& spec,
                             const HeterostructureProfile& profile,
                             std::array<double, 2> lower,
                             std::array<int, 2> cells,
                             std::array<double, 2> spacing);

/// Effective index of the fundamental TE guided mode of the symmetric
/// slab (index n_slab, thickness h, cladding n_hole) at free-space
/// wavelength a/target_freq. Throws NumericalError below cutoff.
double effective_slab_index(const LatticeSpec& spec, double target_freq);

/// Same, with an explicit core index (used to map damaged levels).
double effective_slab_index(const LatticeSpec& spec, double core_index, double target_freq);

/// Result of collapsing the slab onto a 2D effective-index model.
struct Reduced2D {
    LatticeSpec spec;                // n_slab replaced by the effective index
    HeterostructureProfile profile;  // index drops mapped through the same model
};

/// Map a slab and its index profile to the 2D effective-index model at
/// target_freq. Step drops map exactly. Gradual profiles keep equal steps
/// whose outermost level matches the mapped outermost slab index.
Reduced2D reduce_to_2d(const LatticeSpec& spec,
                       const HeterostructureProfile& profile,
                       double target_freq);

/// Area of the intersection between the disc |p - c| < r and the
/// axis-aligned rectangle [x0, x1] x [z0, z1].
double disc_rect_overlap(double cx, double cz, double r,
                         double x0, double x1, double z0, double z1);

/// Length actually realised on a grid of `resolution` cells per a for an
/// index edge placed at +-length/2 around the origin (units of a).
double snapped_length(double length, int resolution);

} // namespace hetcav
