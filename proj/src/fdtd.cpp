#include "hetcav/fdtd.hpp"

#include "hetcav/error.hpp"
#include "hetcav/parallel.hpp"
#include "hetcav/resonance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "json.hpp"

namespace hetcav {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Node offsets in cells along (x, z, y) for each component.
constexpr std::array<std::array<double, 3>, 6> kOffset{{
    {0.5, 0.0, 0.0}, // Ex
    {0.0, 0.0, 0.5}, // Ey
    {0.0, 0.5, 0.0}, // Ez
    {0.0, 0.5, 0.5}, // Hx
    {0.5, 0.5, 0.0}, // Hy
    {0.5, 0.0, 0.5}, // Hz
}};

bool half_offset(Component c, int axis) { return kOffset[static_cast<int>(c)][axis] != 0.0; }

template <class T>
T from_complex(cplx v)
{
    if constexpr (std::is_same_v<T, double>) {
        return v.real();
    } else {
        return v;
    }
}

template <class T>
T conj_of(T v)
{
    if constexpr (std::is_same_v<T, double>) {
        return v;
    } else {
        return std::conj(v);
    }
}

double abs2(double v) { return v * v; }
double abs2(cplx v) { return std::norm(v); }
double re(double v) { return v; }
double re(cplx v) { return v.real(); }

// Index arithmetic shared by the 2D and 3D engines. Nodes of every
// component live on an (nx+1)(nz+1)(ny+1) array; in 2D the y axis is absent.
struct Layout {
    int d = 2;
    std::array<int, 3> n{0, 0, 0};
    std::array<std::size_t, 3> stride{1, 0, 0};
    std::array<double, 3> h{1, 1, 1};
    std::array<double, 3> origin{0, 0, 0};
    std::array<Boundary, 3> bnd{Boundary::Pec, Boundary::Pec, Boundary::Pec};
    std::array<cplx, 3> phase{1.0, 1.0, 1.0};
    std::size_t nodes = 0;
    int pml = 0;

    explicit Layout(const SimulationDomain& dom)
    {
        const auto& g = dom.grid;
        d = dom.dimensionality();
        n = {g.dims[0], g.dims[1], d == 3 ? g.dims[2] : 0};
        h = g.spacing;
        origin = g.origin;
        bnd = dom.boundary;
        pml = dom.pml_cells;
        stride[0] = 1;
        stride[1] = static_cast<std::size_t>(n[0]) + 1;
        stride[2] = d == 3 ? stride[1] * (n[1] + 1) : 0;
        nodes = stride[1] * (n[1] + 1) * (d == 3 ? n[2] + 1 : 1);
        for (int a = 0; a < d; ++a) {
            if (bnd[a] == Boundary::Bloch) {
                phase[a] = std::polar(1.0, 2.0 * kPi * dom.bloch_k[a] * n[a] * h[a]);
            }
        }
    }

    int axes() const { return d; }

    std::size_t at(int ix, int iz, int iy = 0) const
    {
        return ix * stride[0] + iz * stride[1] + static_cast<std::size_t>(iy) * stride[2];
    }

    // Nodes and weights for multilinear interpolation of component c at p.
    // Bloch axes wrap with the boundary phase. With `drop_pec`, nodes that
    // are tangential E on a conducting wall are left out.
    std::vector<std::pair<std::size_t, cplx>> stencil(Component c, const std::array<double, 3>& p,
                                                      bool drop_pec) const
    {
        std::array<std::array<std::pair<int, cplx>, 2>, 3> per{};
        std::array<int, 3> count{1, 1, 1};
        for (int a = 0; a < 3; ++a) {
            if (a >= d) {
                per[a][0] = {0, 1.0};
                continue;
            }
            const bool half = half_offset(c, a);
            const double u = (p[a] - origin[a]) / h[a] - (half ? 0.5 : 0.0);
            int i0 = static_cast<int>(std::floor(u));
            double t = u - i0;
            const int last = half ? n[a] - 1 : n[a];
            count[a] = 0;
            for (int s = 0; s < 2; ++s) {
                int i = i0 + s;
                const double w = s == 0 ? 1.0 - t : t;
                if (w == 0.0) {
                    continue;
                }
                cplx f = w;
                if (bnd[a] == Boundary::Bloch) {
                    const int q = static_cast<int>(std::floor(static_cast<double>(i) / n[a]));
                    i -= q * n[a];
                    f *= std::pow(phase[a], q);
                } else {
                    i = std::clamp(i, 0, last);
                    if (drop_pec && is_electric(c) && !half && (i == 0 || i == n[a])) {
                        continue;
                    }
                }
                per[a][count[a]++] = {i, f};
            }
        }
        std::map<std::size_t, cplx> merged;
        for (int s0 = 0; s0 < count[0]; ++s0) {
            for (int s1 = 0; s1 < count[1]; ++s1) {
                for (int s2 = 0; s2 < count[2]; ++s2) {
                    const std::size_t idx = at(per[0][s0].first, per[1][s1].first, per[2][s2].first);
                    merged[idx] += per[0][s0].second * per[1][s1].second * per[2][s2].second;
                }
            }
        }
        return {merged.begin(), merged.end()};
    }

    // Cell containing node (i, k, j) of a component.
    std::array<int, 3> node_cell(int i, int k, int j) const
    {
        return {std::min(i, n[0] - 1), std::min(k, n[1] - 1), d == 3 ? std::min(j, n[2] - 1) : 0};
    }

    // Permittivity at an E node: mean over the cells sharing it.
    double node_eps(const DielectricGrid& g, Component c, int i, int k, int j) const
    {
        std::array<int, 3> idx{i, k, j};
        std::array<std::array<int, 2>, 3> cells{};
        std::array<int, 3> cnt{1, 1, 1};
        for (int a = 0; a < 3; ++a) {
            if (a >= d) {
                cells[a] = {0, 0};
                continue;
            }
            if (half_offset(c, a)) {
                cells[a][0] = idx[a];
                continue;
            }
            int lo = idx[a] - 1;
            int hi = idx[a];
            if (bnd[a] == Boundary::Bloch) {
                lo = (lo + n[a]) % n[a];
                hi = hi % n[a];
            } else {
                lo = std::clamp(lo, 0, n[a] - 1);
                hi = std::clamp(hi, 0, n[a] - 1);
            }
            cells[a] = {lo, hi};
            cnt[a] = 2;
        }
        double sum = 0.0;
        for (int s0 = 0; s0 < cnt[0]; ++s0) {
            for (int s1 = 0; s1 < cnt[1]; ++s1) {
                for (int s2 = 0; s2 < cnt[2]; ++s2) {
                    sum += g.at(cells[0][s0], cells[1][s1], cells[2][s2]);
                }
            }
        }
        return sum / (cnt[0] * cnt[1] * cnt[2]);
    }
};

// CPML recursion coefficients along one axis, at integer (node) and
// half-integer positions.
struct PmlAxis {
    std::vector<double> b_int, c_int, b_half, c_half;

    PmlAxis() = default;
    PmlAxis(int n, int cells, double h, double dt, double order, double alpha_max, double n_ref)
        : b_int(n + 1, 1.0), c_int(n + 1, 0.0), b_half(n, 1.0), c_half(n, 0.0)
    {
        const double sigma_max = 0.8 * (order + 1.0) / (h * n_ref);
        auto coef = [&](double p, double& b, double& c) {
            const double depth = std::max({0.0, cells - p, p - (n - cells)});
            if (depth <= 0.0) {
                return;
            }
            const double x = depth / cells;
            const double sigma = sigma_max * std::pow(x, order);
            const double alpha = alpha_max * (1.0 - x);
            b = std::exp(-(sigma + alpha) * dt);
            c = sigma / (sigma + alpha) * (b - 1.0);
        };
        for (int i = 0; i <= n; ++i) {
            coef(i, b_int[i], c_int[i]);
        }
        for (int i = 0; i < n; ++i) {
            coef(i + 0.5, b_half[i], c_half[i]);
        }
    }
};

double reference_index(const DielectricGrid& g)
{
    double s = 0.0;
    for (double e : g.eps) {
        s += e;
    }
    return std::sqrt(s / static_cast<double>(g.eps.size()));
}

struct SourceNodes {
    SourceSpec spec;
    Component comp;
    std::vector<std::pair<std::size_t, cplx>> nodes; // weight * dt / eps
};

struct RegionNodes {
    std::vector<std::uint32_t> e[3]; // nodes of each E component (x, y, z)
    std::vector<std::uint32_t> h[3];
};

// ---------------------------------------------------------------- 2D TE --

template <class T>
class TeSolver final : public FieldSolver {
public:
    TeSolver(const SimulationDomain& dom, const std::vector<SourceSpec>& sources)
        : dom_(dom), L_(dom), nx_(L_.n[0]), nz_(L_.n[1]), s_(L_.stride[1]),
          team_(dom.workers, nz_ + 1)
    {
        dt_ = dom.dt;
        const auto& g = dom_.grid;
        ex_.assign(L_.nodes, T{});
        ez_.assign(L_.nodes, T{});
        hy_.assign(L_.nodes, T{});
        cex_.assign(L_.nodes, 0.0);
        cez_.assign(L_.nodes, 0.0);
        epsx_.assign(L_.nodes, 0.0);
        epsz_.assign(L_.nodes, 0.0);
        for (int k = 0; k <= nz_; ++k) {
            for (int i = 0; i <= nx_; ++i) {
                const std::size_t n = L_.at(i, k);
                if (i < nx_) {
                    epsx_[n] = L_.node_eps(g, Component::Ex, i, k, 0);
                    cex_[n] = dt_ / epsx_[n];
                }
                if (k < nz_) {
                    epsz_[n] = L_.node_eps(g, Component::Ez, i, k, 0);
                    cez_[n] = dt_ / epsz_[n];
                }
            }
        }
        ph_x_ = from_complex<T>(L_.phase[0]);
        ph_z_ = from_complex<T>(L_.phase[1]);
        const double nref = reference_index(g);
        pml_x_ = dom.boundary[0] == Boundary::Pml;
        pml_z_ = dom.boundary[1] == Boundary::Pml;
        if (pml_x_) {
            px_ = PmlAxis(nx_, dom.pml_cells, L_.h[0], dt_, dom.pml_order, dom.pml_alpha, nref);
            psi_hy_x_.assign(L_.nodes, T{});
            psi_ez_x_.assign(L_.nodes, T{});
            for (int i = 0; i < nx_; ++i) {
                if (px_.c_half[i] != 0.0) {
                    cols_half_.push_back(i);
                }
            }
            for (int i = 1; i < nx_; ++i) {
                if (px_.c_int[i] != 0.0) {
                    cols_int_.push_back(i);
                }
            }
        }
        if (pml_z_) {
            pz_ = PmlAxis(nz_, dom.pml_cells, L_.h[1], dt_, dom.pml_order, dom.pml_alpha, nref);
            psi_hy_z_.assign(L_.nodes, T{});
            psi_ex_z_.assign(L_.nodes, T{});
        }
        for (const auto& src : sources) {
            if (src.component != Component::Ex && src.component != Component::Ez) {
                throw ConfigError(fmt::format("2D TE sources must drive Ex or Ez (got {})",
                                              component_name(src.component)));
            }
            SourceNodes sn{src, src.component, L_.stencil(src.component, src.position, true)};
            for (auto& [n, w] : sn.nodes) {
                w *= (src.component == Component::Ex ? cex_[n] : cez_[n]);
            }
            sources_.push_back(std::move(sn));
        }
        // interior (non-PML) nodes for electric_energy
        interior_ = region_nodes([this](int i, int k, int) { return dom_.interior_cell(i, k); });
    }

    void step() override
    {
        if (track_) {
            hprev_ = hy_;
        }
        team_.run([this](int b, int e) { update_h(b, std::min(e, nz_)); });
        if (track_) {
            discrete_energy_ = leapfrog_energy();
        }
        team_.run([this](int b, int e) { update_e(b, e); });
        const double t = (steps_ + 0.5) * dt_;
        for (const auto& s : sources_) {
            const double v = s.spec.value(t);
            if (v == 0.0) {
                continue;
            }
            auto& f = s.comp == Component::Ex ? ex_ : ez_;
            for (const auto& [n, w] : s.nodes) {
                f[n] += from_complex<T>(w * v);
            }
        }
        sync_ghosts();
        ++steps_;
    }

    int add_probe(const ProbeSpec& p) override
    {
        if (p.component != Component::Ex && p.component != Component::Ez && p.component != Component::Hy) {
            throw ConfigError(fmt::format("2D TE probes read Ex, Ez or Hy (got {})", component_name(p.component)));
        }
        probes_.push_back({p.component, L_.stencil(p.component, p.position, false)});
        return static_cast<int>(probes_.size()) - 1;
    }

    cplx sample(int probe) const override
    {
        const auto& pr = probes_.at(probe);
        const auto& f = field(pr.first);
        cplx acc = 0.0;
        for (const auto& [n, w] : pr.second) {
            acc += w * cplx(f[n]);
        }
        return acc;
    }

    int add_region(const RegionMonitor& r) override
    {
        regions_.push_back(region_nodes([&](int i, int k, int) {
            const auto c = dom_.grid.center(i, k);
            return r.contains(c[0], c[1], c[2]);
        }));
        return static_cast<int>(regions_.size()) - 1;
    }

    double region_energy(int region) const override
    {
        const auto& r = regions_.at(region);
        double e = 0.0;
        for (auto n : r.e[0]) e += epsx_[n] * abs2(ex_[n]);
        for (auto n : r.e[2]) e += epsz_[n] * abs2(ez_[n]);
        for (auto n : r.h[1]) e += abs2(hy_[n]);
        return 0.5 * e * L_.h[0] * L_.h[1];
    }

    double electric_energy() const override
    {
        double e = 0.0;
        for (auto n : interior_.e[0]) e += epsx_[n] * abs2(ex_[n]);
        for (auto n : interior_.e[2]) e += epsz_[n] * abs2(ez_[n]);
        return e * L_.h[0] * L_.h[1];
    }

    FieldSnapshot snapshot() const override
    {
        FieldSnapshot snap;
        snap.step = steps_;
        snap.time = time();
        snap.dims = dom_.grid.dims;
        snap.origin = dom_.grid.origin;
        snap.spacing = dom_.grid.spacing;
        const std::size_t cells = static_cast<std::size_t>(nx_) * nz_;
        std::vector<double> cx(cells), cz(cells), chy(cells);
        snap.energy_density.resize(cells);
        for (int k = 0; k < nz_; ++k) {
            for (int i = 0; i < nx_; ++i) {
                const std::size_t n = L_.at(i, k);
                const std::size_t c = static_cast<std::size_t>(k) * nx_ + i;
                const T ax = 0.5 * (ex_[n] + ex_[n + s_]);
                const T az = 0.5 * (ez_[n] + ez_[n + 1]);
                cx[c] = re(ax);
                cz[c] = re(az);
                chy[c] = re(hy_[n]);
                snap.energy_density[c] = dom_.grid.eps[c] * (abs2(ax) + abs2(az));
            }
        }
        snap.components = {{Component::Ex, std::move(cx)}, {Component::Ez, std::move(cz)}, {Component::Hy, std::move(chy)}};
        return snap;
    }

    void track_discrete_energy(bool on) override
    {
        track_ = on;
        if (!on) {
            hprev_.clear();
        }
    }

    void check_finite() const override
    {
        double s = 0.0;
        for (std::size_t n = 0; n < L_.nodes; ++n) {
            s += abs2(ex_[n]) + abs2(ez_[n]) + abs2(hy_[n]);
        }
        if (!std::isfinite(s)) {
            throw NumericalError(fmt::format(
                "field became non-finite by step {} (unstable update; lower the Courant factor)", steps_));
        }
    }

private:
    const std::vector<T>& field(Component c) const
    {
        return c == Component::Ex ? ex_ : c == Component::Ez ? ez_ : hy_;
    }

    template <class Pred>
    RegionNodes region_nodes(Pred pred) const
    {
        RegionNodes r;
        for (int k = 0; k <= nz_; ++k) {
            for (int i = 0; i <= nx_; ++i) {
                const auto cell = L_.node_cell(i, k, 0);
                if (!pred(cell[0], cell[1], 0)) {
                    continue;
                }
                const auto n = static_cast<std::uint32_t>(L_.at(i, k));
                // ghost rows/columns duplicate row 0 under Bloch boundaries
                const bool ghost_z = k == nz_ && dom_.boundary[1] == Boundary::Bloch;
                const bool ghost_x = i == nx_ && dom_.boundary[0] == Boundary::Bloch;
                if (i < nx_ && !ghost_z) r.e[0].push_back(n);
                if (k < nz_ && !ghost_x) r.e[2].push_back(n);
                if (i < nx_ && k < nz_) r.h[1].push_back(n);
            }
        }
        return r;
    }

    void update_h(int kb, int ke)
    {
        const double cx = dt_ / L_.h[0];
        const double cz = dt_ / L_.h[1];
        for (int k = kb; k < ke; ++k) {
            const std::size_t row = static_cast<std::size_t>(k) * s_;
            T* __restrict hy = hy_.data() + row;
            const T* __restrict ez = ez_.data() + row;
            const T* __restrict ex0 = ex_.data() + row;
            const T* __restrict ex1 = ex0 + s_;
            for (int i = 0; i < nx_; ++i) {
                hy[i] += cx * (ez[i + 1] - ez[i]) - cz * (ex1[i] - ex0[i]);
            }
            if (pml_x_) {
                T* psi = psi_hy_x_.data() + row;
                for (int i : cols_half_) {
                    psi[i] = px_.b_half[i] * psi[i] + px_.c_half[i] * (ez[i + 1] - ez[i]) / L_.h[0];
                    hy[i] += dt_ * psi[i];
                }
            }
            if (pml_z_ && pz_.c_half[k] != 0.0) {
                T* psi = psi_hy_z_.data() + row;
                const double b = pz_.b_half[k];
                const double c = pz_.c_half[k] / L_.h[1];
                for (int i = 0; i < nx_; ++i) {
                    psi[i] = b * psi[i] + c * (ex1[i] - ex0[i]);
                    hy[i] -= dt_ * psi[i];
                }
            }
        }
    }

    void update_e(int kb, int ke)
    {
        const double ix = 1.0 / L_.h[0];
        const double iz = 1.0 / L_.h[1];
        const bool bloch_x = dom_.boundary[0] == Boundary::Bloch;
        const bool bloch_z = dom_.boundary[1] == Boundary::Bloch;
        const T ph_x_inv = conj_of(ph_x_);
        const T ph_z_inv = conj_of(ph_z_);
        for (int k = kb; k < ke; ++k) {
            const std::size_t row = static_cast<std::size_t>(k) * s_;
            // Ex on row k: needs Hy rows k-1 and k.
            if (k > 0 && k < nz_) {
                T* __restrict ex = ex_.data() + row;
                const double* __restrict c = cex_.data() + row;
                const T* __restrict h1 = hy_.data() + row;
                const T* __restrict h0 = h1 - s_;
                for (int i = 0; i < nx_; ++i) {
                    ex[i] -= c[i] * iz * (h1[i] - h0[i]);
                }
                pml_ex(k, row, h0, h1);
            } else if (k == 0 && bloch_z) {
                T* ex = ex_.data();
                const T* h1 = hy_.data();
                const T* hw = hy_.data() + static_cast<std::size_t>(nz_ - 1) * s_;
                tmp_row_.resize(nx_);
                for (int i = 0; i < nx_; ++i) {
                    tmp_row_[i] = hw[i] * ph_z_inv;
                    ex[i] -= cex_[i] * iz * (h1[i] - tmp_row_[i]);
                }
                pml_ex(k, row, tmp_row_.data(), h1);
            }
            if (k >= nz_) {
                continue;
            }
            // Ez on row k: needs Hy columns i-1 and i.
            T* __restrict ez = ez_.data() + row;
            const double* __restrict c = cez_.data() + row;
            const T* __restrict h = hy_.data() + row;
            for (int i = 1; i < nx_; ++i) {
                ez[i] += c[i] * ix * (h[i] - h[i - 1]);
            }
            if (bloch_x) {
                ez[0] += c[0] * ix * (h[0] - h[nx_ - 1] * ph_x_inv);
            }
            if (pml_x_) {
                T* psi = psi_ez_x_.data() + row;
                for (int i : cols_int_) {
                    psi[i] = px_.b_int[i] * psi[i] + px_.c_int[i] * ix * (h[i] - h[i - 1]);
                    ez[i] += c[i] * psi[i];
                }
            }
        }
    }

    void pml_ex(int k, std::size_t row, const T* h0, const T* h1)
    {
        if (!pml_z_ || pz_.c_int[k] == 0.0) {
            return;
        }
        T* ex = ex_.data() + row;
        T* psi = psi_ex_z_.data() + row;
        const double* c = cex_.data() + row;
        const double b = pz_.b_int[k];
        const double cc = pz_.c_int[k] / L_.h[1];
        for (int i = 0; i < nx_; ++i) {
            psi[i] = b * psi[i] + cc * (h1[i] - h0[i]);
            ex[i] -= c[i] * psi[i];
        }
    }

    void sync_ghosts()
    {
        if (dom_.boundary[0] == Boundary::Bloch) {
            for (int k = 0; k < nz_; ++k) {
                const std::size_t row = static_cast<std::size_t>(k) * s_;
                ez_[row + nx_] = ph_x_ * ez_[row];
            }
        }
        if (dom_.boundary[1] == Boundary::Bloch) {
            const std::size_t top = static_cast<std::size_t>(nz_) * s_;
            for (int i = 0; i < nx_; ++i) {
                ex_[top + i] = ph_z_ * ex_[i];
            }
        }
    }

    double leapfrog_energy() const
    {
        double e = 0.0;
        for (auto n : interior_all().e[0]) e += epsx_[n] * abs2(ex_[n]);
        for (auto n : interior_all().e[2]) e += epsz_[n] * abs2(ez_[n]);
        for (auto n : interior_all().h[1]) e += re(hprev_[n] * conj_of(hy_[n]));
        return e * L_.h[0] * L_.h[1];
    }

    const RegionNodes& interior_all() const
    {
        if (all_.h[1].empty()) {
            all_ = region_nodes([](int, int, int) { return true; });
        }
        return all_;
    }

    SimulationDomain dom_;
    Layout L_;
    int nx_, nz_;
    std::size_t s_;
    SliceTeam team_;
    std::vector<T> ex_, ez_, hy_, hprev_;
    std::vector<double> cex_, cez_, epsx_, epsz_;
    T ph_x_{1.0}, ph_z_{1.0};
    bool pml_x_ = false, pml_z_ = false;
    PmlAxis px_, pz_;
    std::vector<int> cols_half_, cols_int_;
    std::vector<T> psi_hy_x_, psi_hy_z_, psi_ex_z_, psi_ez_x_;
    std::vector<T> tmp_row_;
    std::vector<SourceNodes> sources_;
    std::vector<std::pair<Component, std::vector<std::pair<std::size_t, cplx>>>> probes_;
    std::vector<RegionNodes> regions_;
    RegionNodes interior_;
    mutable RegionNodes all_;
    bool track_ = false;
};

// ------------------------------------------------------------------- 3D --

class YeeSolver3D final : public FieldSolver {
public:
    YeeSolver3D(const SimulationDomain& dom, const std::vector<SourceSpec>& sources)
        : dom_(dom), L_(dom), team_(dom.workers, L_.n[2] + 1)
    {
        dt_ = dom.dt;
        for (auto& f : f_) {
            f.assign(L_.nodes, 0.0);
        }
        const double nref = reference_index(dom.grid);
        for (int a = 0; a < 3; ++a) {
            if (dom.boundary[a] == Boundary::Pml) {
                pml_[a] = PmlAxis(L_.n[a], dom.pml_cells, L_.h[a], dt_, dom.pml_order, dom.pml_alpha, nref);
            } else {
                pml_[a] = PmlAxis(L_.n[a], 0, L_.h[a], dt_, dom.pml_order, dom.pml_alpha, nref);
            }
        }
        for (auto& p : psi_) {
            p.assign(L_.nodes, 0.0);
        }
        for (int c = 0; c < 3; ++c) {
            coef_[c].assign(L_.nodes, 0.0);
            eps_[c].assign(L_.nodes, 0.0);
            const auto comp = static_cast<Component>(c);
            for_nodes(comp, [&](int i, int k, int j, std::size_t n) {
                eps_[c][n] = L_.node_eps(dom.grid, comp, i, k, j);
                coef_[c][n] = dt_ / eps_[c][n];
            });
        }
        for (const auto& src : sources) {
            if (!is_electric(src.component)) {
                throw ConfigError("sources must drive an electric component");
            }
            SourceNodes sn{src, src.component, L_.stencil(src.component, src.position, true)};
            const int c = static_cast<int>(src.component);
            for (auto& [n, w] : sn.nodes) {
                w *= coef_[c][n];
            }
            sources_.push_back(std::move(sn));
        }
        interior_ = region_nodes([this](int i, int k, int j) { return dom_.interior_cell(i, k, j); });
        all_ = region_nodes([](int, int, int) { return true; });
    }

    void step() override
    {
        if (track_) {
            for (int c = 0; c < 3; ++c) {
                hprev_[c] = f_[3 + c];
            }
        }
        team_.run([this](int b, int e) {
            update(Component::Hx, b, e);
            update(Component::Hy, b, e);
            update(Component::Hz, b, e);
        });
        if (track_) {
            discrete_energy_ = leapfrog_energy();
        }
        team_.run([this](int b, int e) {
            update(Component::Ex, b, e);
            update(Component::Ey, b, e);
            update(Component::Ez, b, e);
        });
        const double t = (steps_ + 0.5) * dt_;
        for (const auto& s : sources_) {
            const double v = s.spec.value(t);
            auto& f = f_[static_cast<int>(s.comp)];
            for (const auto& [n, w] : s.nodes) {
                f[n] += w.real() * v;
            }
        }
        ++steps_;
    }

    int add_probe(const ProbeSpec& p) override
    {
        probes_.push_back({p.component, L_.stencil(p.component, p.position, false)});
        return static_cast<int>(probes_.size()) - 1;
    }

    cplx sample(int probe) const override
    {
        const auto& pr = probes_.at(probe);
        const auto& f = f_[static_cast<int>(pr.first)];
        double acc = 0.0;
        for (const auto& [n, w] : pr.second) {
            acc += w.real() * f[n];
        }
        return acc;
    }

    int add_region(const RegionMonitor& r) override
    {
        regions_.push_back(region_nodes([&](int i, int k, int j) {
            const auto c = dom_.grid.center(i, k, j);
            return r.contains(c[0], c[1], c[2]);
        }));
        return static_cast<int>(regions_.size()) - 1;
    }

    double region_energy(int region) const override
    {
        const auto& r = regions_.at(region);
        double e = 0.0;
        for (int c = 0; c < 3; ++c) {
            for (auto n : r.e[c]) e += eps_[c][n] * f_[c][n] * f_[c][n];
            for (auto n : r.h[c]) e += f_[3 + c][n] * f_[3 + c][n];
        }
        return 0.5 * e * dom_.grid.cell_volume();
    }

    double electric_energy() const override
    {
        double e = 0.0;
        for (int c = 0; c < 3; ++c) {
            for (auto n : interior_.e[c]) e += eps_[c][n] * f_[c][n] * f_[c][n];
        }
        return e * dom_.grid.cell_volume();
    }

    FieldSnapshot snapshot() const override
    {
        FieldSnapshot snap;
        snap.step = steps_;
        snap.time = time();
        snap.dims = dom_.grid.dims;
        snap.origin = dom_.grid.origin;
        snap.spacing = dom_.grid.spacing;
        const auto& g = dom_.grid;
        std::array<std::vector<double>, 3> comp;
        for (auto& v : comp) {
            v.assign(g.size(), 0.0);
        }
        snap.energy_density.assign(g.size(), 0.0);
        for (int j = 0; j < L_.n[2]; ++j) {
            for (int k = 0; k < L_.n[1]; ++k) {
                for (int i = 0; i < L_.n[0]; ++i) {
                    const std::size_t cell = g.index(i, k, j);
                    double e2 = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        // average the nodes of component c around the cell centre
                        double acc = 0.0;
                        int cnt = 0;
                        const auto comp_id = static_cast<Component>(c);
                        for (int dx = 0; dx <= (half_offset(comp_id, 0) ? 0 : 1); ++dx)
                            for (int dz = 0; dz <= (half_offset(comp_id, 1) ? 0 : 1); ++dz)
                                for (int dy = 0; dy <= (half_offset(comp_id, 2) ? 0 : 1); ++dy) {
                                    acc += f_[c][L_.at(i + dx, k + dz, j + dy)];
                                    ++cnt;
                                }
                        comp[c][cell] = acc / cnt;
                        e2 += comp[c][cell] * comp[c][cell];
                    }
                    snap.energy_density[cell] = g.eps[cell] * e2;
                }
            }
        }
        snap.components = {{Component::Ex, std::move(comp[0])},
                           {Component::Ey, std::move(comp[1])},
                           {Component::Ez, std::move(comp[2])}};
        return snap;
    }

    void track_discrete_energy(bool on) override { track_ = on; }

    void check_finite() const override
    {
        double s = 0.0;
        for (const auto& f : f_) {
            for (double v : f) {
                s += v * v;
            }
        }
        if (!std::isfinite(s)) {
            throw NumericalError(fmt::format(
                "field became non-finite by step {} (unstable update; lower the Courant factor)", steps_));
        }
    }

private:
    // Valid index range of a component along an axis. E nodes on conducting
    // walls are excluded from updates.
    std::pair<int, int> range(Component c, int a, bool for_update) const
    {
        if (half_offset(c, a)) {
            return {0, L_.n[a]};
        }
        if (for_update && is_electric(c)) {
            return {1, L_.n[a]};
        }
        return {0, L_.n[a] + 1};
    }

    template <class Fn>
    void for_nodes(Component c, Fn&& fn, int jb = 0, int je = 1 << 30, bool for_update = false) const
    {
        const auto [i0, i1] = range(c, 0, for_update);
        const auto [k0, k1] = range(c, 1, for_update);
        auto [j0, j1] = range(c, 2, for_update);
        j0 = std::max(j0, jb);
        j1 = std::min(j1, je);
        for (int j = j0; j < j1; ++j)
            for (int k = k0; k < k1; ++k)
                for (int i = i0; i < i1; ++i)
                    fn(i, k, j, L_.at(i, k, j));
    }

    // F += coef * (d_a1 G1 - d_a2 G2), forward differences for H, backward for E.
    void update(Component c, int jb, int je)
    {
        struct Curl {
            int g1, a1, g2, a2;
        };
        // physical curl in (x, y, z); axes indexed in storage order x=0, z=1, y=2
        static constexpr Curl curls[6] = {
            {5, 2, 4, 1}, // Ex: dy Hz - dz Hy
            {3, 1, 5, 0}, // Ey: dz Hx - dx Hz
            {4, 0, 3, 2}, // Ez: dx Hy - dy Hx
            {2, 2, 1, 1}, // Hx: dy Ez - dz Ey
            {0, 1, 2, 0}, // Hy: dz Ex - dx Ez
            {1, 0, 0, 2}, // Hz: dx Ey - dy Ex
        };
        const int id = static_cast<int>(c);
        const Curl cu = curls[id];
        const bool is_h = !is_electric(c);
        auto& F = f_[id];
        const auto& G1 = f_[cu.g1];
        const auto& G2 = f_[cu.g2];
        const std::size_t s1 = L_.stride[cu.a1];
        const std::size_t s2 = L_.stride[cu.a2];
        const double ih1 = 1.0 / L_.h[cu.a1];
        const double ih2 = 1.0 / L_.h[cu.a2];
        auto& psi1 = psi_[2 * id];
        auto& psi2 = psi_[2 * id + 1];
        const auto& P1 = pml_[cu.a1];
        const auto& P2 = pml_[cu.a2];
        const bool half1 = half_offset(c, cu.a1);
        const bool half2 = half_offset(c, cu.a2);
        for_nodes(c, [&](int i, int k, int j, std::size_t n) {
            double d1, d2;
            if (is_h) {
                d1 = (G1[n + s1] - G1[n]) * ih1;
                d2 = (G2[n + s2] - G2[n]) * ih2;
            } else {
                d1 = (G1[n] - G1[n - s1]) * ih1;
                d2 = (G2[n] - G2[n - s2]) * ih2;
            }
            const std::array<int, 3> idx{i, k, j};
            const int p1 = idx[cu.a1];
            const int p2 = idx[cu.a2];
            const double cb1 = half1 ? P1.c_half[p1] : P1.c_int[p1];
            const double cb2 = half2 ? P2.c_half[p2] : P2.c_int[p2];
            if (cb1 != 0.0) {
                psi1[n] = (half1 ? P1.b_half[p1] : P1.b_int[p1]) * psi1[n] + cb1 * d1;
                d1 += psi1[n];
            }
            if (cb2 != 0.0) {
                psi2[n] = (half2 ? P2.b_half[p2] : P2.b_int[p2]) * psi2[n] + cb2 * d2;
                d2 += psi2[n];
            }
            F[n] += (is_h ? -dt_ : coef_[id][n]) * (d1 - d2);
        }, jb, je, true);
    }

    template <class Pred>
    RegionNodes region_nodes(Pred pred) const
    {
        RegionNodes r;
        for (int c = 0; c < 6; ++c) {
            const auto comp = static_cast<Component>(c);
            for_nodes(comp, [&](int i, int k, int j, std::size_t n) {
                const auto cell = L_.node_cell(i, k, j);
                if (pred(cell[0], cell[1], cell[2])) {
                    (c < 3 ? r.e[c] : r.h[c - 3]).push_back(static_cast<std::uint32_t>(n));
                }
            });
        }
        return r;
    }

    double leapfrog_energy() const
    {
        double e = 0.0;
        for (int c = 0; c < 3; ++c) {
            for (auto n : all_.e[c]) e += eps_[c][n] * f_[c][n] * f_[c][n];
            for (auto n : all_.h[c]) e += hprev_[c][n] * f_[3 + c][n];
        }
        return e * dom_.grid.cell_volume();
    }

    SimulationDomain dom_;
    Layout L_;
    SliceTeam team_;
    std::array<std::vector<double>, 6> f_;
    std::array<std::vector<double>, 12> psi_;
    std::array<std::vector<double>, 3> coef_, eps_, hprev_;
    std::array<PmlAxis, 3> pml_;
    std::vector<SourceNodes> sources_;
    std::vector<std::pair<Component, std::vector<std::pair<std::size_t, cplx>>>> probes_;
    std::vector<RegionNodes> regions_;
    RegionNodes interior_, all_;
    bool track_ = false;
};

void write_raw(const std::filesystem::path& path, const std::vector<double>& data)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw NumericalError(fmt::format("cannot open {} for writing", path.string()));
    }
    for (double v : data) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap64(bits);
        }
        char bytes[8];
        std::memcpy(bytes, &bits, 8);
        out.write(bytes, 8);
    }
    if (!out) {
        throw NumericalError(fmt::format("write failed for {}", path.string()));
    }
}

} // namespace

std::string_view component_name(Component c)
{
    static constexpr std::string_view names[] = {"Ex", "Ey", "Ez", "Hx", "Hy", "Hz"};
    return names[static_cast<int>(c)];
}

Component parse_component(std::string_view name)
{
    for (int c = 0; c < 6; ++c) {
        const auto ref = component_name(static_cast<Component>(c));
        if (name.size() == 2 && std::tolower(name[0]) == std::tolower(ref[0]) &&
            std::tolower(name[1]) == std::tolower(ref[1])) {
            return static_cast<Component>(c);
        }
    }
    throw ConfigError(fmt::format("unknown field component '{}'", name));
}

bool is_electric(Component c) { return static_cast<int>(c) < 3; }

SimulationDomain SimulationDomain::create(DielectricGrid grid, double courant, int pml_cells)
{
    SimulationDomain d;
    d.grid = std::move(grid);
    d.courant = courant;
    d.pml_cells = pml_cells;
    const int dim = d.dimensionality();
    double hmin = std::min(d.grid.spacing[0], d.grid.spacing[1]);
    if (dim == 3) {
        hmin = std::min(hmin, d.grid.spacing[2]);
    }
    d.dt = courant * hmin / std::sqrt(static_cast<double>(dim));
    return d;
}

void SimulationDomain::validate() const
{
    const int dim = dimensionality();
    const std::size_t cells = static_cast<std::size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2];
    if (grid.dims[0] < 1 || grid.dims[1] < 1 || grid.dims[2] < 1 || grid.eps.size() != cells) {
        throw ConfigError("dielectric grid dimensions do not match its data");
    }
    if (dim == 2 && grid.dims[2] != 1) {
        throw ConfigError("2D grids must have one cell along y");
    }
    for (double e : grid.eps) {
        if (!(e >= 1.0) || !std::isfinite(e)) {
            throw ConfigError(fmt::format("relative permittivity must be finite and >= 1 (got {})", e));
        }
    }
    if (!(courant > 0.0 && courant < 1.0)) {
        throw ConfigError(fmt::format("courant factor must lie in (0, 1) (got {})", courant));
    }
    double hmin = std::min(grid.spacing[0], grid.spacing[1]);
    if (dim == 3) {
        hmin = std::min(hmin, grid.spacing[2]);
    }
    if (!(hmin > 0.0)) {
        throw ConfigError("grid spacing must be positive");
    }
    const double expect = courant * hmin / std::sqrt(static_cast<double>(dim));
    if (std::abs(dt - expect) > 1e-12 * expect) {
        throw ConfigError(fmt::format("dt {} inconsistent with courant {} (expected {})", dt, courant, expect));
    }
    bool any_pml = false;
    for (int a = 0; a < dim; ++a) {
        if (boundary[a] == Boundary::Pml) {
            any_pml = true;
            if (grid.dims[a] <= 2 * pml_cells) {
                throw ConfigError(fmt::format("axis {} has {} cells, too few for two {}-cell absorbing layers",
                                              a, grid.dims[a], pml_cells));
            }
        }
        if (boundary[a] == Boundary::Bloch && dim == 3) {
            throw ConfigError("Bloch boundaries are only available in 2D");
        }
    }
    if (any_pml && pml_cells < 8) {
        throw ConfigError(fmt::format("absorbing layers need at least 8 cells (got {})", pml_cells));
    }
    if (total_steps < 0 || snapshot_every < 0 || workers < 1) {
        throw ConfigError("total_steps and snapshot_every must be >= 0 and workers >= 1");
    }
}

bool SimulationDomain::complex_fields() const
{
    for (int a = 0; a < dimensionality(); ++a) {
        if (boundary[a] == Boundary::Bloch) {
            const double turns = 2.0 * bloch_k[a] * grid.dims[a] * grid.spacing[a];
            if (std::abs(turns - std::round(turns)) > 1e-12) {
                return true;
            }
        }
    }
    return false;
}

bool SimulationDomain::has_pml(int axis) const { return boundary[axis] == Boundary::Pml; }

bool SimulationDomain::interior_cell(int ix, int iz, int iy) const
{
    const std::array<int, 3> idx{ix, iz, iy};
    for (int a = 0; a < dimensionality(); ++a) {
        if (has_pml(a) && (idx[a] < pml_cells || idx[a] >= grid.dims[a] - pml_cells)) {
            return false;
        }
    }
    return true;
}

double SourceSpec::width() const { return 1.0 / (2.0 * kPi * bandwidth); }
double SourceSpec::peak_time() const { return cutoff * width(); }
double SourceSpec::end_time() const { return 2.0 * cutoff * width(); }

double SourceSpec::value(double t) const
{
    if (t < 0.0 || t > end_time()) {
        return 0.0;
    }
    const double tau = t - peak_time();
    const double w = width();
    return amplitude * std::exp(-0.5 * tau * tau / (w * w)) * std::sin(2.0 * kPi * center_freq * tau);
}

std::unique_ptr<FieldSolver> make_solver(const SimulationDomain& domain, const std::vector<SourceSpec>& sources)
{
    domain.validate();
    for (const auto& s : sources) {
        if (!(s.bandwidth > 0.0) || !(s.cutoff > 0.0) || !(s.center_freq >= 0.0)) {
            throw ConfigError("source needs bandwidth > 0, cutoff > 0 and centre frequency >= 0");
        }
        for (int a = 0; a < domain.dimensionality(); ++a) {
            const double lo = domain.grid.origin[a];
            const double h = domain.grid.spacing[a];
            const int n = domain.grid.dims[a];
            const int p = domain.has_pml(a) ? domain.pml_cells : 0;
            if (s.position[a] < lo + p * h || s.position[a] > lo + (n - p) * h) {
                throw ConfigError(fmt::format("source at ({}, {}, {}) lies outside the non-absorbing region",
                                              s.position[0], s.position[1], s.position[2]));
            }
        }
    }
    if (domain.dimensionality() == 3) {
        return std::make_unique<YeeSolver3D>(domain, sources);
    }
    if (domain.complex_fields()) {
        return std::make_unique<TeSolver<cplx>>(domain, sources);
    }
    return std::make_unique<TeSolver<double>>(domain, sources);
}

RunResult run(const SimulationDomain& domain,
              const std::vector<SourceSpec>& sources,
              const std::vector<ProbeSpec>& probes,
              const std::vector<RegionMonitor>& regions,
              const RunOptions& options)
{
    if (probes.empty()) {
        throw ConfigError("a run needs at least one probe");
    }
    auto solver = make_solver(domain, sources);
    const double dt = solver->dt();

    double off_time = 0.0;
    for (const auto& s : sources) {
        off_time = std::max(off_time, s.end_time());
    }
    RunResult result;
    result.source_off_step = static_cast<long>(std::ceil(off_time / dt));

    std::vector<int> handles;
    for (const auto& p : probes) {
        if (p.stride < 1) {
            throw ConfigError("probe stride must be >= 1");
        }
        handles.push_back(solver->add_probe(p));
        ProbeRecord rec;
        rec.position = p.position;
        rec.component = p.component;
        rec.stride = p.stride;
        rec.dt = p.stride * dt;
        rec.t0 = p.stride * dt - (is_electric(p.component) ? 0.0 : 0.5 * dt);
        rec.source_off_index = std::max<long>(0, static_cast<long>(std::ceil(off_time / rec.dt)) - 1);
        rec.samples.reserve(static_cast<std::size_t>(domain.total_steps / p.stride));
        result.probes.push_back(std::move(rec));
    }
    std::vector<int> region_ids;
    for (const auto& r : regions) {
        region_ids.push_back(solver->add_region(r));
    }
    if (options.snapshot_dir) {
        std::filesystem::create_directories(*options.snapshot_dir);
    }

    double best = -1.0;
    for (long s = 1; s <= domain.total_steps; ++s) {
        solver->step();
        for (std::size_t p = 0; p < probes.size(); ++p) {
            if (s % probes[p].stride == 0) {
                result.probes[p].samples.push_back(solver->sample(handles[p]));
            }
        }
        if (domain.snapshot_every > 0 && s % domain.snapshot_every == 0) {
            for (std::size_t r = 0; r < regions.size(); ++r) {
                result.energy.push_back({s, solver->time(), regions[r].name, solver->region_energy(region_ids[r])});
            }
            if (options.keep_snapshots || options.snapshot_dir) {
                auto snap = solver->snapshot();
                if (options.snapshot_dir) {
                    write_snapshot(snap, *options.snapshot_dir, fmt::format("snap_{:08d}", s));
                }
                if (options.keep_snapshots) {
                    result.snapshots.push_back(std::move(snap));
                }
            }
        }
        if (options.peak_window && s >= options.peak_window->first && s < options.peak_window->second) {
            const double e = solver->electric_energy();
            if (e > best) {
                best = e;
                result.peak = solver->snapshot();
            }
        }
        if (options.check_every > 0 && s % options.check_every == 0) {
            solver->check_finite();
        }
    }
    solver->check_finite();
    return result;
}

std::vector<std::filesystem::path> write_snapshot(const FieldSnapshot& snap,
                                                  const std::filesystem::path& dir,
                                                  const std::string& stem)
{
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::vector<double>& data) {
        const auto raw = dir / fmt::format("{}_{}.f64", stem, name);
        write_raw(raw, data);
        nlohmann::json meta = {
            {"component", name},
            {"step", snap.step},
            {"time", snap.time},
            {"dims", snap.dims},
            {"origin", snap.origin},
            {"spacing", snap.spacing},
            {"dtype", "float64"},
            {"byte_order", "little"},
            {"layout", "x fastest, then z, then y"},
        };
        auto side = raw;
        side.replace_extension(".json");
        std::ofstream out(side);
        out << meta.dump(2) << '\n';
        if (!out) {
            throw NumericalError(fmt::format("write failed for {}", side.string()));
        }
        written.push_back(raw);
    };
    for (const auto& [c, data] : snap.components) {
        emit(std::string(component_name(c)), data);
    }
    emit("energy_density", snap.energy_density);
    return written;
}

std::pair<std::vector<double>, std::array<int, 3>> read_snapshot_array(const std::filesystem::path& f64_path)
{
    auto side = f64_path;
    side.replace_extension(".json");
    std::ifstream meta_in(side);
    if (!meta_in) {
        throw ConfigError(fmt::format("missing sidecar {}", side.string()));
    }
    const auto meta = nlohmann::json::parse(meta_in);
    const auto dims = meta.at("dims").get<std::array<int, 3>>();
    const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    std::ifstream in(f64_path, std::ios::binary);
    if (!in) {
        throw ConfigError(fmt::format("cannot read {}", f64_path.string()));
    }
    std::vector<double> data(count);
    for (auto& v : data) {
        char bytes[8];
        in.read(bytes, 8);
        std::uint64_t bits;
        std::memcpy(&bits, bytes, 8);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap64(bits);
        }
        v = std::bit_cast<double>(bits);
    }
    if (!in) {
        throw ConfigError(fmt::format("{} is shorter than its sidecar dims", f64_path.string()));
    }
    return {std::move(data), dims};
}

void write_probe_csv(const std::filesystem::path& path, const ProbeRecord& record)
{
    bool complex = false;
    for (const auto& v : record.samples) {
        complex = complex || v.imag() != 0.0;
    }
    auto out = fmt::output_file(path.string());
    out.print("{}\n", complex ? "step,time,value,imag" : "step,time,value");
    for (std::size_t j = 0; j < record.samples.size(); ++j) {
        const long step = static_cast<long>(j + 1) * record.stride;
        if (complex) {
            out.print("{},{:.17g},{:.17g},{:.17g}\n", step, record.time(j), record.samples[j].real(),
                      record.samples[j].imag());
        } else {
            out.print("{},{:.17g},{:.17g}\n", step, record.time(j), record.samples[j].real());
        }
    }
}

ProbeRecord read_probe_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot read probe file {}", path.string()));
    }
    std::string line;
    std::getline(in, line);
    const bool complex = line.find("imag") != std::string::npos;
    ProbeRecord rec;
    std::vector<long> steps;
    std::vector<double> times;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string a, b, c, d;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        std::getline(ss, c, ',');
        double im = 0.0;
        if (complex) {
            std::getline(ss, d, ',');
            im = std::stod(d);
        }
        steps.push_back(std::stol(a));
        times.push_back(std::stod(b));
        rec.samples.emplace_back(std::stod(c), im);
    }
    if (times.size() < 2) {
        throw ConfigError(fmt::format("probe file {} has fewer than two samples", path.string()));
    }
    rec.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    rec.t0 = times.front();
    rec.stride = static_cast<int>(steps[1] - steps[0]);
    return rec;
}

void write_energy_csv(const std::filesystem::path& path, const std::vector<EnergySample>& samples)
{
    auto out = fmt::output_file(path.string());
    out.print("step,time,region_name,energy\n");
    for (const auto& s : samples) {
        out.print("{},{:.17g},{},{:.17g}\n", s.step, s.time, s.region, s.energy);
    }
}

DielectricGrid line_grid(const std::vector<double>& eps, double cell)
{
    if (eps.empty() || !(cell > 0.0)) {
        throw ConfigError("line grid needs at least one cell and a positive cell size");
    }
    DielectricGrid g;
    g.resolution = static_cast<int>(std::lround(1.0 / cell));
    g.dim = Dim::Two;
    g.dims = {static_cast<int>(eps.size()), 1, 1};
    g.spacing = {cell, cell, 1.0};
    g.origin = {0.0, -0.5 * cell, 0.0};
    g.eps = eps;
    return g;
}

std::vector<double> bloch_spectrum(const LatticeSpec& spec_in,
                                   Vec2 k,
                                   double background_index,
                                   const BlochOptions& opt)
{
    LatticeSpec spec = spec_in.normalized();
    spec.n_slab = background_index;
    if (opt.resolution < kMinResolution) {
        throw ConfigError(fmt::format("resolution {} is below the minimum of {} cells per period",
                                      opt.resolution, kMinResolution));
    }
    DielectricGrid grid;
    SimulationDomain dom;
    if (opt.rows == 0) {
        spec.w1_defect = false;
        const int nx = opt.resolution;
        const int nz = static_cast<int>(std::lround(std::sqrt(3.0) * opt.resolution));
        const double lz = std::sqrt(3.0);
        grid = rasterize_box(spec, HeterostructureProfile::uniform(), {-0.5, -0.5 * lz}, {nx, nz},
                             {1.0 / nx, lz / nz});
        dom = SimulationDomain::create(std::move(grid), opt.courant, 10);
        dom.boundary = {Boundary::Bloch, Boundary::Bloch, Boundary::Pec};
        dom.bloch_k = {k.x, k.z, 0.0};
    } else {
        if (opt.rows < 3 || opt.rows % 2 == 0) {
            throw ConfigError(fmt::format("supercell needs an odd number of rows >= 3 (got {})", opt.rows));
        }
        // Cell faces on integer multiples of 1/resolution, as in the cavity grids.
        const double d = 1.0 / opt.resolution;
        const int nz = 2 * static_cast<int>(std::lround(opt.rows * spec.row_pitch() * opt.resolution / 2.0));
        grid = rasterize_box(spec, HeterostructureProfile::uniform(),
                             {-std::floor(opt.resolution / 2.0) * d, -0.5 * nz * d}, {opt.resolution, nz}, {d, d});
        dom = SimulationDomain::create(std::move(grid), opt.courant, 10);
        dom.boundary = {Boundary::Bloch, Boundary::Pec, Boundary::Pec};
        dom.bloch_k = {k.x, 0.0, 0.0};
    }
    dom.workers = opt.workers;
    dom.total_steps = opt.steps;

    const double fc = 0.5 * (opt.f_min + opt.f_max);
    const double bw = 0.5 * (opt.f_max - opt.f_min);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> ux(dom.grid.origin[0], dom.grid.origin[0] + dom.grid.dims[0] * dom.grid.spacing[0]);
    std::uniform_real_distribution<double> uz(dom.grid.origin[1], dom.grid.origin[1] + dom.grid.dims[1] * dom.grid.spacing[1]);
    std::uniform_real_distribution<double> uamp(0.5, 1.5);
    std::vector<SourceSpec> sources;
    std::vector<ProbeSpec> probes;
    if (opt.symmetric_axis_source) {
        // Ez on the mirror axis excites only modes with Hy even in z.
        const double x0 = dom.grid.origin[0] + dom.grid.dims[0] * dom.grid.spacing[0] * 0.3;
        sources.push_back({{x0, 0.0, 0.0}, Component::Ez, fc, bw, 4.0, 1.0});
        for (int p = 0; p < opt.n_probes; ++p) {
            probes.push_back({{ux(rng), 0.0, 0.0}, Component::Ez, 1});
        }
    } else {
        for (int s = 0; s < opt.n_sources; ++s) {
            sources.push_back({{ux(rng), uz(rng), 0.0}, s % 2 ? Component::Ex : Component::Ez, fc, bw, 4.0, uamp(rng)});
        }
        for (int p = 0; p < opt.n_probes; ++p) {
            probes.push_back({{ux(rng), uz(rng), 0.0}, p % 2 ? Component::Ez : Component::Ex, 1});
        }
    }
    const long off = static_cast<long>(std::ceil(sources.front().end_time() / dom.dt));
    dom.total_steps = off + opt.steps;
    const auto res = run(dom, sources, probes);

    // Collect strong modes from every probe, then merge near-duplicates.
    std::vector<double> found;
    for (const auto& rec : res.probes) {
        const auto hi = harmonic_inversion(rec, opt.f_min, opt.f_max, off);
        double amax = 0.0;
        for (const auto& m : hi.modes) {
            amax = std::max(amax, m.amplitude);
        }
        for (const auto& m : hi.modes) {
            if (m.amplitude > 1e-3 * amax && m.Q > 1e3) {
                found.push_back(m.freq);
            }
        }
    }
    std::sort(found.begin(), found.end());
    // Clusters narrower than merge_tolerance become one frequency (their mean).
    std::vector<double> merged;
    std::size_t first = 0;
    for (std::size_t i = 1; i <= found.size(); ++i) {
        if (i == found.size() || found[i] - found[first] > opt.merge_tolerance * found[first]) {
            double sum = 0.0;
            for (std::size_t j = first; j < i; ++j) {
                sum += found[j];
            }
            merged.push_back(sum / static_cast<double>(i - first));
            first = i;
        }
    }
    return merged;
}

} // namespace hetcav
