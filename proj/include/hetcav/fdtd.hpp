#pragma once

#include "hetcav/bands.hpp"
#include "hetcav/geometry.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hetcav {

enum class Component { Ex, Ey, Ez, Hx, Hy, Hz };

std::string_view component_name(Component c);
/// Accepts "Ex", "ey", ... Throws ConfigError otherwise.
Component parse_component(std::string_view name);
bool is_electric(Component c);

/// Per-axis outer boundary. Bloch applies the phase exp(i k L) across the
/// period L of that axis; with k = 0 it is plain periodic.
enum class Boundary { Pml, Pec, Bloch };

/// Grid plus time-stepping parameters. Units: lengths in a, time in a/c.
struct SimulationDomain {
    DielectricGrid grid;
    double courant = 0.5;
    double dt = 0.0;
    int pml_cells = 10;
    long total_steps = 0;
    /// Stride (steps) for region energies and stored snapshots; 0 disables.
    int snapshot_every = 0;
    std::array<Boundary, 3> boundary{Boundary::Pml, Boundary::Pml, Boundary::Pml}; // x, z, y
    std::array<double, 3> bloch_k{0.0, 0.0, 0.0};                                 // units of 2*pi/a
    double pml_order = 3.0;
    double pml_alpha = 0.0;
    int workers = 1;

    /// Fills dt from the Courant factor and the smallest cell edge.
    static SimulationDomain create(DielectricGrid grid, double courant = 0.5, int pml_cells = 10);

    void validate() const;
    int dimensionality() const { return static_cast<int>(grid.dim); }
    bool complex_fields() const;
    bool has_pml(int axis) const;
    /// True when the cell centre (ix, iz, iy) lies outside every PML layer.
    bool interior_cell(int ix, int iz, int iy = 0) const;
};

/// Gaussian-enveloped sine current on one field component. `bandwidth` is
/// the spectral standard deviation (a/lambda); the pulse is switched on
/// at t = 0 and off after 2*cutoff temporal widths.
struct SourceSpec {
    std::array<double, 3> position{0.0, 0.0, 0.0}; // x, z, y
    Component component = Component::Ez;
    double center_freq = 0.333;
    double bandwidth = 0.01;
    double cutoff = 5.0;
    double amplitude = 1.0;

    double width() const;
    double peak_time() const;
    double end_time() const;
    double value(double t) const;
};

struct ProbeSpec {
    std::array<double, 3> position{0.0, 0.0, 0.0};
    Component component = Component::Ez;
    int stride = 1;
};

/// Field samples taken after every `stride` steps. Sample j belongs to step
/// (j + 1) * stride; H components lag E by dt/2.
struct ProbeRecord {
    std::array<double, 3> position{0.0, 0.0, 0.0};
    Component component = Component::Ez;
    double dt = 0.0;            // sample spacing
    double t0 = 0.0;            // time of sample 0
    int stride = 1;
    long source_off_index = 0;  // first sample taken after every source is off
    std::vector<std::complex<double>> samples;

    double time(std::size_t j) const { return t0 + dt * static_cast<double>(j); }
};

struct RegionMonitor {
    std::string name;
    std::function<bool(double x, double z, double y)> contains;
};

struct EnergySample {
    long step = 0;
    double time = 0.0;
    std::string region;
    double energy = 0.0;
};

/// Fields interpolated to cell centres. Components hold real parts;
/// energy_density is eps*|E|^2 including imaginary parts.
struct FieldSnapshot {
    long step = 0;
    double time = 0.0;
    std::array<int, 3> dims{0, 0, 1};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::array<double, 3> spacing{0.0, 0.0, 0.0};
    std::vector<std::pair<Component, std::vector<double>>> components;
    std::vector<double> energy_density;
};

/// Time stepper for one domain. Created by make_solver.
class FieldSolver {
public:
    virtual ~FieldSolver() = default;

    /// One leapfrog step: H from curl E, then E from curl H plus sources.
    virtual void step() = 0;
    long steps_done() const { return steps_; }
    double time() const { return steps_ * dt_; }
    double dt() const { return dt_; }

    /// Returns a handle for sample().
    virtual int add_probe(const ProbeSpec& probe) = 0;
    virtual std::complex<double> sample(int probe) const = 0;
    virtual int add_region(const RegionMonitor& region) = 0;
    /// Electromagnetic energy 1/2 (eps|E|^2 + |H|^2) dV inside a region.
    virtual double region_energy(int region) const = 0;
    /// Electric energy eps|E|^2 dV over the non-PML cells.
    virtual double electric_energy() const = 0;
    virtual FieldSnapshot snapshot() const = 0;

    /// When enabled, every step evaluates the leapfrog invariant
    /// eps|E^n|^2 + H^{n-1/2} H^{n+1/2}, which a closed lossless domain
    /// conserves to roundoff.
    virtual void track_discrete_energy(bool on) = 0;
    double discrete_energy() const { return discrete_energy_; }

    /// Throws NumericalError naming the step if any field is non-finite.
    virtual void check_finite() const = 0;

protected:
    long steps_ = 0;
    double dt_ = 0.0;
    double discrete_energy_ = 0.0;
};

std::unique_ptr<FieldSolver> make_solver(const SimulationDomain& domain,
                                         const std::vector<SourceSpec>& sources);

struct RunOptions {
    bool keep_snapshots = false;
    /// Snapshots are also written here (raw f64 + JSON sidecar) when set.
    std::optional<std::filesystem::path> snapshot_dir;
    /// Keep the snapshot with the largest electric energy among the steps
    /// in [first, last). Used to catch a standing mode at peak phase.
    std::optional<std::pair<long, long>> peak_window;
    /// Steps between finiteness checks.
    int check_every = 256;
};

struct RunResult {
    std::vector<ProbeRecord> probes;
    std::vector<EnergySample> energy;
    std::vector<FieldSnapshot> snapshots;
    std::optional<FieldSnapshot> peak;
    long source_off_step = 0;
};

RunResult run(const SimulationDomain& domain,
              const std::vector<SourceSpec>& sources,
              const std::vector<ProbeSpec>& probes,
              const std::vector<RegionMonitor>& regions = {},
              const RunOptions& options = {});

/// Writes <dir>/<stem>_<component>.f64 for each component plus
/// energy_density, each with a .json sidecar. Returns the paths written.
std::vector<std::filesystem::path> write_snapshot(const FieldSnapshot& snap,
                                                  const std::filesystem::path& dir,
                                                  const std::string& stem);

/// Reads one raw array written by write_snapshot; dims come from the sidecar.
std::pair<std::vector<double>, std::array<int, 3>> read_snapshot_array(const std::filesystem::path& f64_path);

/// CSV: step,time,value (real part; an extra imag column for complex data).
void write_probe_csv(const std::filesystem::path& path, const ProbeRecord& record);
ProbeRecord read_probe_csv(const std::filesystem::path& path);
/// CSV: step,time,region_name,energy.
void write_energy_csv(const std::filesystem::path& path, const std::vector<EnergySample>& samples);

/// Uniform-medium 1D line: a 2D TE grid one cell high with a periodic z
/// axis, so only Ez and Hy evolve along x. eps holds one value per cell.
DielectricGrid line_grid(const std::vector<double>& eps, double cell);

struct BlochOptions {
    int resolution = 16;
    /// 0: rectangular two-hole bulk cell (a x sqrt(3) a). Otherwise an odd
    /// number of rows of a W1 supercell, periodic in x, PEC walls in z.
    int rows = 0;
    long steps = 1L << 14;
    double f_min = 0.02;
    double f_max = 0.8;
    int n_sources = 4;
    int n_probes = 4;
    std::uint64_t seed = 1;
    int workers = 1;
    double courant = 0.5;
    /// Single Ez dipole and Ez probes on the z = 0 mirror line, so only
    /// modes with Hy even in z are excited (W1 supercells).
    bool symmetric_axis_source = false;
    /// Relative spread below which frequencies count as one mode. Covers
    /// duplicate poles and degeneracies split by anisotropic cells.
    double merge_tolerance = 2e-3;
};

/// Mode frequencies at Bloch vector k (units of 2*pi/a) from a broadband
/// run and harmonic inversion of several probes. Degenerate modes are
/// reported once. Sorted ascending.
std::vector<double> bloch_spectrum(const LatticeSpec& spec,
                                   Vec2 k,
                                   double background_index,
                                   const BlochOptions& options = {});

} // namespace hetcav
