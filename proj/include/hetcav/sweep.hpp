#pragma once

#include "hetcav/bands.hpp"
#include "hetcav/cavity.hpp"
#include "hetcav/config.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace hetcav {

struct SweepRow {
    std::size_t index = 0;
    std::string label;       // sweep value as text
    double value = 0.0;      // numeric sweep value (row index for gradual rows)
    CavityResult result;
};

/// Called after each finished point (from worker threads, serialised).
using SweepProgress = std::function<void(const SweepRow&)>;

/// Runs every sweep point, up to `workers` at a time. Rows come back in
/// sweep order. Numerical failures stay in their row.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, int workers, const SweepProgress& progress = {});

/// Sweep CSV. runtime_seconds is the last column so that reruns can be
/// compared byte for byte without it.
void write_sweep_csv(const std::filesystem::path& path, const ExperimentConfig& config, const std::vector<SweepRow>& rows);

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y; // values <= 0 or non-finite are skipped
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label = "Q";
    bool log_y = true;
    /// Optional text for x ticks; when set, ticks sit at x = 0, 1, 2, ...
    std::vector<std::string> categories;
    /// When positive, x ticks also show x * scale with this unit.
    double secondary_scale = 0.0;
    std::string secondary_unit;
};

/// Line plot with markers as a standalone SVG document.
std::string render_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series);
void write_svg(const std::filesystem::path& path, const PlotSpec& spec, const std::vector<PlotSeries>& series);

/// Q against the sweep axis, log scale.
void write_sweep_plot(const std::filesystem::path& path, const ExperimentConfig& config, const std::vector<SweepRow>& rows);

/// CSV: k_index,kx,ky,band_index,freq_norm,parity. ky is the in-plane
/// transverse component (z here).
void write_bands_csv(const std::filesystem::path& path, const BandStructure& bands);

/// Canonical desk-scale suite: delta_n x {4, 6}, the delta_L scan, the
/// gradual rows and their matched single steps. Writes CSVs, plots and
/// report.md under out_dir and returns the report text.
struct ReplicateOptions {
    SolverSettings solver;
    LatticeSpec lattice;
    int workers = 1;
    std::uint64_t seed = 1;
    /// Smaller suite (fewer points) for smoke runs.
    bool quick = false;
};

std::string replicate(const std::filesystem::path& out_dir,
                      const ReplicateOptions& options,
                      const SweepProgress& progress = {});

} // namespace hetcav
