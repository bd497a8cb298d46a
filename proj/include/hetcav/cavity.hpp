#pragma once

#include "hetcav/fdtd.hpp"
#include "hetcav/geometry.hpp"
#include "hetcav/resonance.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hetcav {

struct SolverSettings {
    int resolution = 16;
    double courant = 0.5;
    int pml_cells = 10;
    /// Samples recorded for resonance analysis after the source is off
    /// and the wait has elapsed.
    long ringdown_steps = 1L << 17;
    /// Pulse widths to wait after the source turns off.
    double wait_widths = 3.0;
    /// Lower bound on the spectral width of the excitation.
    double min_bandwidth = 0.002;
    /// Frequency at which the slab is collapsed to its 2D effective index.
    double target_freq = 0.333;
    /// W1 supercell rows for the band-edge runs.
    int band_rows = 13;
    Dim dim = Dim::Two;
    /// Threads inside one simulation.
    int workers = 1;
    /// Repeat the run with a narrow pulse at the found frequency and take
    /// the decay fit from that ringdown. Neighbouring leaky modes make the
    /// broadband energy beat, so without this the fit is only indicative.
    bool narrowband_recheck = false;

    void validate() const;
};

/// Edges of the mode gap seen by the FDTD grid: the design-band edge at
/// k = 0.5 (2*pi/a) for the centre and for the outermost background index.
struct BandEdges {
    double lower = 0.0;
    double upper = 0.0;
    double width() const { return upper - lower; }
};

/// Design-band edge frequency of a W1 supercell at the zone boundary,
/// from an FDTD Bloch run on the same grid resolution as the cavity.
double fdtd_band_edge(const LatticeSpec& spec2d, double background_index, const SolverSettings& settings);

BandEdges fdtd_mode_gap(const LatticeSpec& spec2d,
                        double n_center,
                        double n_outer,
                        const SolverSettings& settings);

/// Everything the resonance analysis needs from one cavity run. It can
/// be filled from memory or from the files written by simulate.
struct RingdownData {
    std::vector<ProbeRecord> probes;
    std::vector<EnergySample> cavity_energy; // one region, in step order
    std::optional<FieldSnapshot> peak;
    DielectricGrid grid;                     // geometry only; eps may be empty
    double f_lo = 0.0;                       // search window
    double f_hi = 0.0;
    double gap_lower = 0.0;
    double gap_upper = 0.0;
    long first_step = 0;                     // start of the analysed ringdown
    double n_ref = 1.0;
    double core_half = 0.0;                  // half-length of the undamaged centre
    int pml_cells = 0;
};

struct CavityResult {
    bool found = false;
    std::string error;                       // empty when found
    double freq = 0.0;
    double Q = 0.0;                          // harmonic inversion
    double Q_decay = 0.0;                    // energy decay fit, 0 if it failed
    double decay_residual = 0.0;
    double hi_residual = 0.0;
    bool q_consistent = false;               // decay fit within 10% of Q
    bool ill_conditioned = false;
    bool in_gap = false;
    double V_norm = 0.0;                     // (lambda/n)^dim
    double damaged_fraction = 0.0;
    bool field_max_in_core = false;
    double gap_lower = 0.0;
    double gap_upper = 0.0;
    double realized_length = 0.0;            // cavity length after grid snapping, units of a
    int dim = 2;
    std::vector<Mode> modes;                 // every mode in the window, primary probe
    double runtime_seconds = 0.0;
};

/// Resonance extraction shared by simulate and analyze.
CavityResult analyze_ringdown(const RingdownData& data);

struct CavitySetup {
    LatticeSpec lattice;
    HeterostructureProfile profile;
    SolverSettings solver;
    std::uint64_t seed = 1;
};

/// Builds the cavity, excites it inside the mode gap and extracts the
/// resonance. Numerical problems are reported in CavityResult::error;
/// invalid inputs throw ConfigError. When artifact_dir is set, probes,
/// region energies, the peak snapshot and run.json are written there.
CavityResult simulate_cavity(const CavitySetup& setup,
                             const std::optional<std::filesystem::path>& artifact_dir = std::nullopt);

/// Re-runs the analysis on a directory written by simulate_cavity.
CavityResult analyze_directory(const std::filesystem::path& dir);

/// One row per mode: run_id,freq_norm,Q,V_norm,dim,damaged_fraction,method,residual.
/// The selected mode also gets a decay-fit row when the fit succeeded.
void write_analysis_csv(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, CavityResult>>& runs);

} // namespace hetcav
