#pragma once

#include "hetcav/bands.hpp"
#include "hetcav/cavity.hpp"
#include "hetcav/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hetcav {

struct GradualRow {
    double l0 = 4.0;
    std::vector<double> steps{1.0, 1.0, 1.0, 1.0};
    double delta_n_step = 0.004;
};

enum class SweepAxis { None, DeltaN, CavityM, DeltaL, GradualRows };

std::string_view sweep_axis_name(SweepAxis axis);

struct SweepSpec {
    SweepAxis axis = SweepAxis::None;
    std::vector<double> values; // delta_n, m, or delta_L in nm
    std::vector<GradualRow> rows;

    std::size_t size() const;
};

/// Settings for the `bands` subcommand.
struct BandsSettings {
    enum class Kind { Bulk, Waveguide } kind = Kind::Bulk;
    Polarization polarization = Polarization::TE;
    int n_planewaves = 441;
    int per_segment = 30;
    int n_bands = 8;
    int supercell_rows = 9;
};

struct ExperimentConfig {
    std::string name = "experiment";
    LatticeSpec lattice;
    HeterostructureProfile profile;
    SolverSettings solver;
    BandsSettings bands;
    SweepSpec sweep;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;
    int workers = 1;

    /// Throws ConfigError on any violated invariant.
    void validate() const;
    std::size_t point_count() const { return sweep.size(); }
    /// Setup for sweep point i, with the sweep value applied to the base profile.
    CavitySetup point(std::size_t i) const;
    /// Base setup without any sweep value applied.
    CavitySetup base() const;
    /// Human-readable sweep value, e.g. "0.0175" or "l=4;1;1;1;1 dn=0.004".
    std::string point_label(std::size_t i) const;
};

/// Parses YAML or JSON text. Unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// JSON echo of every setting; parse_config reads it back unchanged.
std::string config_to_json(const ExperimentConfig& config);

} // namespace hetcav
