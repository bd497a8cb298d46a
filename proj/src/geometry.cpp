#include "hetcav/geometry.hpp"

#include "hetcav/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace hetcav {

namespace {

constexpr double kSqrt3 = std::numbers::sqrt3;
constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

int even_cells(double length, int resolution)
{
    return 2 * static_cast<int>(std::lround(length * resolution / 2.0));
}

// Area of the disc (radius r, centred at the origin) restricted to
// x < X and z < Z.
double quadrant_area(double X, double Z, double r)
{
    if (X <= -r || Z <= -r) {
        return 0.0;
    }
    const double xc = std::min(X, r);
    auto F = [r](double x) {
        x = std::clamp(x, -r, r);
        const double h = std::sqrt(std::max(0.0, r * r - x * x));
        return 0.5 * (x * h + r * r * std::asin(x / r)) + 0.25 * kPi * r * r;
    };
    if (Z >= r) {
        return 2.0 * F(xc);
    }
    const double xs = std::sqrt(std::max(0.0, r * r - Z * Z));
    double area = 0.0;
    if (Z >= 0.0) {
        area += 2.0 * F(std::min(-xs, xc));
    }
    if (xc > -xs) {
        const double e = std::min(xs, xc);
        area += Z * (e + xs) + F(e) - F(-xs);
    }
    if (Z >= 0.0 && xc > xs) {
        area += 2.0 * (F(xc) - F(xs));
    }
    return area;
}

} // namespace

void LatticeSpec::validate() const
{
    if (!(a > 0.0)) {
        throw ConfigError(fmt::format("lattice period a must be positive (got {})", a));
    }
    if (!(radius > 0.0 && radius < 0.5 * a)) {
        throw ConfigError(fmt::format("hole radius must satisfy 0 < R < a/2 (got R={}, a={})", radius, a));
    }
    if (!(thickness > 0.0)) {
        throw ConfigError(fmt::format("slab thickness must be positive (got {})", thickness));
    }
    if (!(n_hole >= 1.0 && n_slab > n_hole)) {
        throw ConfigError(fmt::format("indices must satisfy n_slab > n_hole >= 1 (got {}, {})", n_slab, n_hole));
    }
    if (periods_x < 1 || periods_z < 1) {
        throw ConfigError(fmt::format("periods must be >= 1 (got {} x {})", periods_x, periods_z));
    }
    if (!(a_nm > 0.0)) {
        throw ConfigError("a_nm must be positive");
    }
}

LatticeSpec LatticeSpec::normalized() const
{
    LatticeSpec out = *this;
    out.radius = radius / a;
    out.thickness = thickness / a;
    out.a = 1.0;
    return out;
}

double LatticeSpec::row_pitch() const { return 0.5 * kSqrt3 * a; }

HeterostructureProfile HeterostructureProfile::step(double delta_n, int m, double delta_length)
{
    HeterostructureProfile p;
    p.shape = StepProfile{delta_n, m, delta_length};
    return p;
}

HeterostructureProfile HeterostructureProfile::gradual(double l0, std::vector<double> steps, double delta_n_step)
{
    HeterostructureProfile p;
    p.shape = GradualProfile{l0, std::move(steps), delta_n_step};
    return p;
}

HeterostructureProfile HeterostructureProfile::uniform() { return step(0.0, 1); }

double HeterostructureProfile::center_index(const LatticeSpec& spec) const
{
    return n_center.value_or(spec.n_slab);
}

double HeterostructureProfile::total_length() const
{
    return std::visit(overloaded{
                          [](const StepProfile& s) { return s.m + s.delta_length; },
                          [](const GradualProfile& g) {
                              return g.l0 + 2.0 * std::accumulate(g.steps.begin(), g.steps.end(), 0.0);
                          },
                      },
                      shape);
}

double HeterostructureProfile::core_length() const
{
    return std::visit(overloaded{
                          [](const StepProfile& s) { return s.m + s.delta_length; },
                          [](const GradualProfile& g) { return g.l0; },
                      },
                      shape);
}

double HeterostructureProfile::outer_delta_n() const
{
    return std::visit(overloaded{
                          [](const StepProfile& s) { return s.delta_n; },
                          [](const GradualProfile& g) { return g.delta_n_step * static_cast<double>(g.steps.size()); },
                      },
                      shape);
}

int HeterostructureProfile::level_count() const
{
    return std::visit(overloaded{
                          [](const StepProfile&) { return 1; },
                          [](const GradualProfile& g) { return static_cast<int>(g.steps.size()); },
                      },
                      shape);
}

void HeterostructureProfile::validate(const LatticeSpec& spec) const
{
    const double nc = center_index(spec);
    if (!(nc > spec.n_hole)) {
        throw ConfigError(fmt::format("centre index {} must exceed the hole index {}", nc, spec.n_hole));
    }
    std::visit(overloaded{
                   [](const StepProfile& s) {
                       if (s.m < 1) {
                           throw ConfigError(fmt::format("step profile needs m >= 1 (got {})", s.m));
                       }
                       if (!(s.delta_n >= 0.0)) {
                           throw ConfigError(fmt::format("delta_n must be >= 0 (got {})", s.delta_n));
                       }
                       if (!(s.m + s.delta_length > 0.0)) {
                           throw ConfigError("cavity length must stay positive");
                       }
                   },
                   [](const GradualProfile& g) {
                       if (!(g.l0 > 0.0)) {
                           throw ConfigError(fmt::format("gradual profile needs l0 > 0 (got {})", g.l0));
                       }
                       if (g.steps.empty()) {
                           throw ConfigError("gradual profile needs at least one step");
                       }
                       for (double l : g.steps) {
                           if (!(l > 0.0)) {
                               throw ConfigError(fmt::format("gradual step lengths must be > 0 (got {})", l));
                           }
                       }
                       if (!(g.delta_n_step >= 0.0)) {
                           throw ConfigError("delta_n_step must be >= 0");
                       }
                   },
               },
               shape);
    if (total_length() >= spec.periods_x) {
        throw ConfigError(fmt::format("profile length {} does not fit inside {} periods", total_length(), spec.periods_x));
    }
    if (nc - outer_delta_n() < 1.0) {
        throw ConfigError(fmt::format("profile drives the index below 1 (n_center={}, drop={})", nc, outer_delta_n()));
    }
}

std::array<double, 3> DielectricGrid::center(int ix, int iz, int iy) const
{
    return {origin[0] + (ix + 0.5) * spacing[0], origin[1] + (iz + 0.5) * spacing[1],
            origin[2] + (iy + 0.5) * spacing[2]};
}

double DielectricGrid::cell_volume() const
{
    return dim == Dim::Three ? spacing[0] * spacing[1] * spacing[2] : spacing[0] * spacing[1];
}

std::vector<Point2> build_hole_centers(const LatticeSpec& spec)
{
    spec.validate();
    std::vector<Point2> holes;
    holes.reserve(static_cast<std::size_t>(spec.periods_x) * spec.periods_z);
    const int row_shift = spec.periods_z / 2;
    for (int j = 0; j < spec.periods_z; ++j) {
        const int row = j - row_shift;
        if (spec.w1_defect && row == 0) {
            continue;
        }
        const double offset = (row % 2 != 0) ? 0.5 : 0.0;
        for (int i = 0; i < spec.periods_x; ++i) {
            const double x = (i - 0.5 * (spec.periods_x - 1) + offset) * spec.a;
            holes.push_back({x, row * spec.row_pitch()});
        }
    }
    return holes;
}

double index_at(const LatticeSpec& spec, const HeterostructureProfile& profile, double x)
{
    const double nc = profile.center_index(spec);
    const double ax = std::abs(x) / spec.a;
    return std::visit(overloaded{
                          [&](const StepProfile& s) {
                              return ax < 0.5 * (s.m + s.delta_length) ? nc : nc - s.delta_n;
                          },
                          [&](const GradualProfile& g) {
                              double edge = 0.5 * g.l0;
                              if (ax < edge) {
                                  return nc;
                              }
                              for (std::size_t j = 0; j < g.steps.size(); ++j) {
                                  edge += g.steps[j];
                                  if (ax < edge) {
                                      return nc - static_cast<double>(j + 1) * g.delta_n_step;
                                  }
                              }
                              return nc - static_cast<double>(g.steps.size()) * g.delta_n_step;
                          },
                      },
                      profile.shape);
}

double disc_rect_overlap(double cx, double cz, double r, double x0, double x1, double z0, double z1)
{
    x0 -= cx;
    x1 -= cx;
    z0 -= cz;
    z1 -= cz;
    const double area = quadrant_area(x1, z1, r) - quadrant_area(x0, z1, r) - quadrant_area(x1, z0, r)
                        + quadrant_area(x0, z0, r);
    return std::max(0.0, area);
}

double snapped_length(double length, int resolution)
{
    const double per_side = std::ceil(length * resolution / 2.0 - 0.5);
    return 2.0 * std::max(0.0, per_side) / resolution;
}

namespace {

// Fill grid.eps from the unbounded lattice; grid dims, origin and spacing
// must be set. Works in normalized units.
void fill_slab(const LatticeSpec& spec, const HeterostructureProfile& profile, DielectricGrid& grid)
{
    const int nx = grid.dims[0];
    const int nz = grid.dims[1];
    const int ny = grid.dims[2];
    const double dx = grid.spacing[0];
    const double dz = grid.spacing[1];

    // In-plane hole fraction of each (x, z) column.
    std::vector<double> frac(static_cast<std::size_t>(nx) * nz, 0.0);
    const double r = spec.radius;
    const double x_lo = grid.origin[0];
    const double z_lo = grid.origin[1];
    const double x_hi = x_lo + nx * dx;
    const double z_hi = z_lo + nz * dz;
    const double pitch = spec.row_pitch();
    const int row_min = static_cast<int>(std::floor((z_lo - r) / pitch)) - 1;
    const int row_max = static_cast<int>(std::ceil((z_hi + r) / pitch)) + 1;
    for (int row = row_min; row <= row_max; ++row) {
        if (spec.w1_defect && row == 0) {
            continue;
        }
        const double zc = row * pitch;
        if (zc + r < z_lo || zc - r > z_hi) {
            continue;
        }
        const double offset = (row % 2 != 0) ? 0.5 : 0.0;
        const int i_min = static_cast<int>(std::floor(x_lo - r - offset)) - 1;
        const int i_max = static_cast<int>(std::ceil(x_hi + r - offset)) + 1;
        for (int i = i_min; i <= i_max; ++i) {
            const double xc = i + offset;
            const int cx0 = std::max(0, static_cast<int>(std::floor((xc - r - x_lo) / dx)));
            const int cx1 = std::min(nx - 1, static_cast<int>(std::floor((xc + r - x_lo) / dx)));
            const int cz0 = std::max(0, static_cast<int>(std::floor((zc - r - z_lo) / dz)));
            const int cz1 = std::min(nz - 1, static_cast<int>(std::floor((zc + r - z_lo) / dz)));
            for (int iz = cz0; iz <= cz1; ++iz) {
                const double z0 = z_lo + iz * dz;
                for (int ix = cx0; ix <= cx1; ++ix) {
                    const double x0 = x_lo + ix * dx;
                    frac[static_cast<std::size_t>(iz) * nx + ix] +=
                        disc_rect_overlap(xc, zc, r, x0, x0 + dx, z0, z0 + dz) / (dx * dz);
                }
            }
        }
    }

    const double eps_hole = spec.n_hole * spec.n_hole;
    std::vector<double> eps_bg(nx);
    for (int ix = 0; ix < nx; ++ix) {
        const double n = index_at(spec, profile, x_lo + (ix + 0.5) * dx);
        eps_bg[ix] = n * n;
    }

    grid.eps.resize(static_cast<std::size_t>(nx) * nz * ny);
    for (int iy = 0; iy < ny; ++iy) {
        double fy = 1.0;
        if (grid.dim == Dim::Three) {
            const double dy = grid.spacing[2];
            const double y0 = grid.origin[2] + iy * dy;
            const double half = 0.5 * spec.thickness;
            fy = std::max(0.0, std::min(y0 + dy, half) - std::max(y0, -half)) / dy;
        }
        for (int iz = 0; iz < nz; ++iz) {
            for (int ix = 0; ix < nx; ++ix) {
                const double f = std::min(1.0, frac[static_cast<std::size_t>(iz) * nx + ix]);
                const double in_slab = f * eps_hole + (1.0 - f) * eps_bg[ix];
                grid.eps[grid.index(ix, iz, iy)] = fy * in_slab + (1.0 - fy) * eps_hole;
            }
        }
    }
}

} // namespace

DielectricGrid rasterize(const LatticeSpec& spec_in,
                         const HeterostructureProfile& profile,
                         int resolution,
                         Dim dim,
                         const RasterOptions& options)
{
    spec_in.validate();
    profile.validate(spec_in);
    if (resolution < kMinResolution) {
        throw ConfigError(fmt::format("resolution {} is below the minimum of {} cells per period",
                                      resolution, kMinResolution));
    }
    const LatticeSpec spec = spec_in.normalized();
    const double d = 1.0 / resolution;
    const int pad = options.pad_cells;

    DielectricGrid grid;
    grid.resolution = resolution;
    grid.dim = dim;
    const double extent_x = options.extent_x.value_or(static_cast<double>(spec.periods_x));
    const int nx = even_cells(extent_x, resolution) + 2 * pad;
    const int nz = even_cells(spec.periods_z * spec.row_pitch(), resolution) + 2 * pad;
    int ny = 1;
    if (dim == Dim::Three) {
        ny = even_cells(spec.thickness + 2.0 * options.air_padding, resolution) + 2 * pad;
    }
    grid.dims = {nx, nz, ny};
    grid.spacing = {d, d, dim == Dim::Three ? d : 1.0};
    grid.origin = {-0.5 * nx * d, -0.5 * nz * d, dim == Dim::Three ? -0.5 * ny * d : 0.0};
    fill_slab(spec, profile, grid);
    return grid;
}

DielectricGrid rasterize_box(const LatticeSpec& spec_in,
                             const HeterostructureProfile& profile,
                             std::array<double, 2> lower,
                             std::array<int, 2> cells,
                             std::array<double, 2> spacing)
{
    spec_in.validate();
    profile.validate(spec_in);
    if (cells[0] < 1 || cells[1] < 1 || !(spacing[0] > 0.0) || !(spacing[1] > 0.0)) {
        throw ConfigError("rasterize_box needs positive cell counts and spacings");
    }
    const LatticeSpec spec = spec_in.normalized();
    DielectricGrid grid;
    grid.resolution = static_cast<int>(std::lround(1.0 / spacing[0]));
    grid.dim = Dim::Two;
    grid.dims = {cells[0], cells[1], 1};
    grid.spacing = {spacing[0], spacing[1], 1.0};
    grid.origin = {lower[0], lower[1], 0.0};
    fill_slab(spec, profile, grid);
    return grid;
}

double effective_slab_index(const LatticeSpec& spec, double core_index, double target_freq)
{
    if (!(target_freq > 0.0)) {
        throw ConfigError(fmt::format("target frequency must be positive (got {})", target_freq));
    }
    const double n1 = core_index;
    const double n2 = spec.n_hole;
    if (!(n1 > n2)) {
        throw NumericalError(fmt::format("below cutoff: core index {} does not exceed cladding {}", n1, n2));
    }
    const double k0h = 2.0 * kPi * target_freq * spec.thickness / spec.a;
    // Fundamental even TE mode: kappa*sin(kappa*h/2) = gamma*cos(kappa*h/2),
    // with kappa*h/2 in (0, pi/2).
    auto residual = [&](double ne) {
        const double kap = k0h * std::sqrt(std::max(0.0, n1 * n1 - ne * ne));
        const double gam = k0h * std::sqrt(std::max(0.0, ne * ne - n2 * n2));
        return kap * std::sin(0.5 * kap) - gam * std::cos(0.5 * kap);
    };
    const double floor_from_order = n1 * n1 - (kPi / k0h) * (kPi / k0h);
    double lo = std::max(n2, floor_from_order > 0.0 ? std::sqrt(floor_from_order) : n2);
    double hi = n1;
    if (!(residual(lo) > 0.0) || !(residual(hi) < 0.0)) {
        throw NumericalError(fmt::format("below cutoff: no guided TE mode at a/lambda={} for h={}",
                                         target_freq, spec.thickness));
    }
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (residual(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double effective_slab_index(const LatticeSpec& spec, double target_freq)
{
    spec.validate();
    return effective_slab_index(spec, spec.n_slab, target_freq);
}

Reduced2D reduce_to_2d(const LatticeSpec& spec, const HeterostructureProfile& profile, double target_freq)
{
    spec.validate();
    profile.validate(spec);
    Reduced2D out{spec, profile};
    const double nc = profile.center_index(spec);
    const double nc_eff = effective_slab_index(spec, nc, target_freq);
    out.spec.n_slab = effective_slab_index(spec, spec.n_slab, target_freq);
    out.profile.n_center = nc_eff;
    std::visit(overloaded{
                   [&](StepProfile& s) {
                       s.delta_n = s.delta_n > 0.0
                                       ? nc_eff - effective_slab_index(spec, nc - s.delta_n, target_freq)
                                       : 0.0;
                   },
                   [&](GradualProfile& g) {
                       const double levels = static_cast<double>(g.steps.size());
                       const double outer = nc - levels * g.delta_n_step;
                       g.delta_n_step = g.delta_n_step > 0.0
                                            ? (nc_eff - effective_slab_index(spec, outer, target_freq)) / levels
                                            : 0.0;
                   },
               },
               out.profile.shape);
    return out;
}

} // namespace hetcav
