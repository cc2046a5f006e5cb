#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fracrec/cutoff.hpp"
#include "fracrec/field.hpp"
#include "fracrec/grid.hpp"
#include "fracrec/profiles.hpp"

namespace fracrec {

enum class ProbeMode { dirichlet, neumann };

struct ProbeSpec {
    Vec2 x0{0.0, 0.0};
    Vec2 alpha{1.0, 0.0};
    double N = 16.0;
    ProbeMode mode = ProbeMode::dirichlet;
    int depth_k = 1;
    Order s{0.5};
    std::shared_ptr<CutoffProfile> eta;

    void check() const {
        double na = std::hypot(alpha[0], alpha[1]);
        if (std::fabs(na - 1.0) > 1e-12)
            throw std::invalid_argument("ProbeSpec: alpha must be a unit vector");
        if (!(N > 0.0)) throw std::invalid_argument("ProbeSpec: N must be positive");
        if (depth_k < 0) throw std::invalid_argument("ProbeSpec: depth_k must be >= 0");
        if (!eta) throw std::invalid_argument("ProbeSpec: missing cutoff profile");
    }
};

struct BoundaryData {
    CGrid field;
    double support_radius = 0.0;
    cplx mean{0.0, 0.0};
    ProbeMode kind = ProbeMode::dirichlet;

    double l1_norm() const {
        double a = 0.0;
        for (const auto& z : field.v) a += std::abs(z);
        return a * field.grid.h * field.grid.h;
    }
    double l2_norm_sq() const {
        double a = 0.0;
        for (const auto& z : field.v) a += std::norm(z);
        return a * field.grid.h * field.grid.h;
    }
};

namespace detail {

inline void check_probe_grid(const ProbeSpec& spec, const TangentialGrid& grid) {
    double rad = 1.0 / std::sqrt(spec.N);
    double need_h = 2.0 * M_PI / (8.0 * spec.N);
    if (grid.h > need_h) {
        std::ostringstream os;
        os << "probe data: grid spacing " << grid.h << " too coarse for N=" << spec.N
           << "; need h <= " << need_h << " (8 points per wavelength)";
        throw std::invalid_argument(os.str());
    }
    if (grid.half_width(0) < rad || (grid.dims[1] > 1 && grid.half_width(1) < rad))
        throw std::invalid_argument("probe data: grid box does not contain the probe support");
}

inline CGrid sample_probe(const ProbeSpec& spec, const TangentialGrid& grid, double amp) {
    CGrid f(grid);
    double rtN = std::sqrt(spec.N);
    for (int i = 0; i < grid.dims[0]; ++i)
        for (int j = 0; j < grid.dims[1]; ++j) {
            auto p = grid.point(i, j);
            double dx = p[0] - spec.x0[0], dy = p[1] - spec.x0[1];
            double e = spec.eta->evaluate({rtN * dx, rtN * dy});
            if (e == 0.0) continue;
            double ph = spec.N * (spec.alpha[0] * dx + spec.alpha[1] * dy);
            f.ref(i, j) = amp * e * cplx(std::cos(ph), std::sin(ph));
        }
    return f;
}

inline cplx grid_mean(const CGrid& f) {
    cplx a{0.0, 0.0};
    for (const auto& z : f.v) a += z;
    return a * (f.grid.h * f.grid.h);
}

} // namespace detail

// phi_N(x) = c_bar_s e^{iN alpha.(x-x0)} eta(sqrt(N)(x-x0)) on the grid.
inline BoundaryData dirichlet_data(const ProbeSpec& spec, const TangentialGrid& grid) {
    spec.check();
    if (spec.mode != ProbeMode::dirichlet)
        throw std::invalid_argument("dirichlet_data: spec.mode must be dirichlet");
    detail::check_probe_grid(spec, grid);
    double c_bar = std::exp2(spec.s.value() - 1.0) * std::tgamma(spec.s.value());
    BoundaryData b;
    b.field = detail::sample_probe(spec, grid, c_bar);
    b.support_radius = 1.0 / std::sqrt(spec.N);
    b.mean = detail::grid_mean(b.field);
    b.kind = ProbeMode::dirichlet;
    return b;
}

// f_N(x) = e^{iN alpha.(x-x0)} eta(sqrt(N)(x-x0)); requires admissible N
// (eta_hat(alpha sqrt(N)) = 0 so the datum is mean-free).
inline BoundaryData neumann_data(const ProbeSpec& spec, const TangentialGrid& grid) {
    spec.check();
    if (spec.mode != ProbeMode::neumann)
        throw std::invalid_argument("neumann_data: spec.mode must be neumann");
    detail::check_probe_grid(spec, grid);
    double rtN = std::sqrt(spec.N);
    double e0 = spec.eta->fourier(0.0, spec.alpha);
    double ehat = spec.eta->fourier(rtN, spec.alpha);
    if (std::fabs(ehat) > 1e-12 * std::fabs(e0)) {
        auto cand = admissible_frequencies(*spec.eta, spec.alpha, 64,
                                           std::max(1.0, 0.2 * spec.N));
        double best = cand.empty() ? -1.0 : cand.front();
        for (double c : cand)
            if (std::fabs(c - spec.N) < std::fabs(best - spec.N)) best = c;
        std::ostringstream os;
        os << "neumann_data: N=" << spec.N << " is not admissible (|eta_hat|="
           << std::fabs(ehat) << "); nearest admissible frequency is " << best;
        throw std::invalid_argument(os.str());
    }
    BoundaryData b;
    b.field = detail::sample_probe(spec, grid, 1.0);
    b.support_radius = 1.0 / rtN;
    b.mean = detail::grid_mean(b.field);
    b.kind = ProbeMode::neumann;
    return b;
}

namespace detail {

// Taylor coefficients d^beta f(x0) / beta! by tensor-product central
// differences; the step grows with the order to balance rounding noise.
class Taylor2 {
  public:
    template <class F>
    static double coeff(const F& f, const Vec2& x0, int b1, int b2, double noise = 2.2e-16) {
        int tot = b1 + b2;
        double h = std::pow(noise, 1.0 / (tot + 2));
        auto s1 = stencil(b1), s2 = stencil(b2);
        double acc = 0.0;
        for (const auto& [o1, c1] : s1)
            for (const auto& [o2, c2] : s2)
                acc += c1 * c2 * f(Vec2{x0[0] + o1 * h, x0[1] + o2 * h});
        double fact = 1.0;
        for (int i = 2; i <= b1; ++i) fact *= i;
        for (int i = 2; i <= b2; ++i) fact *= i;
        return acc / std::pow(h, tot) / fact;
    }

  private:
    static std::vector<std::pair<int, double>> stencil(int d) {
        switch (d) {
            case 0: return {{0, 1.0}};
            case 1: return {{-1, -0.5}, {1, 0.5}};
            case 2: return {{-1, 1.0}, {0, -2.0}, {1, 1.0}};
            case 3: return {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}};
            case 4: return {{-2, 1.0}, {-1, -4.0}, {0, 6.0}, {1, -4.0}, {2, 1.0}};
            default: throw std::invalid_argument("Taylor2: derivative order > 4");
        }
    }
};

struct HierarchyTables {
    // gamma Taylor coefficients per multi-index, and of d_l = sum_j d_j(c g_jl)/c
    std::map<std::pair<int, int>, Eigen::Matrix2d> g;
    std::map<std::pair<int, int>, Eigen::Vector2d> d;
};

inline HierarchyTables build_tables(const ConductivityField& field, const Vec2& x0, int k) {
    HierarchyTables t;
    int gmax = 2 * k, dmax = std::max(0, 2 * k - 2);
    for (int b1 = 0; b1 <= gmax; ++b1)
        for (int b2 = 0; b1 + b2 <= gmax; ++b2) {
            Eigen::Matrix2d m;
            for (int a = 0; a < 2; ++a)
                for (int b = a; b < 2; ++b)
                    m(a, b) = Taylor2::coeff(
                        [&](const Vec2& x) { return field.gamma(x)(a, b); }, x0, b1, b2);
            m(1, 0) = m(0, 1);
            t.g[{b1, b2}] = m;
        }
    // d_l(x) evaluated by an inner first-difference of c*gamma, then Taylor
    // with steps adapted to the inner noise (~3e-11).
    const double hin = 5.8e-6;
    auto dl = [&](int l, const Vec2& x) {
        double acc = 0.0;
        for (int j = 0; j < 2; ++j) {
            Vec2 xp = x, xm = x;
            (j == 0 ? xp[0] : xp[1]) += hin;
            (j == 0 ? xm[0] : xm[1]) -= hin;
            double fp = field.c(xp) * field.gamma(xp)(j, l);
            double fm = field.c(xm) * field.gamma(xm)(j, l);
            acc += (fp - fm) / (2.0 * hin);
        }
        return acc / field.c(x);
    };
    for (int b1 = 0; b1 <= dmax; ++b1)
        for (int b2 = 0; b1 + b2 <= dmax; ++b2) {
            Eigen::Vector2d v;
            for (int l = 0; l < 2; ++l)
                v(l) = Taylor2::coeff([&](const Vec2& x) { return dl(l, x); }, x0, b1, b2,
                                      3e-11);
            t.d[{b1, b2}] = v;
        }
    return t;
}

inline CGrid zmul(const CGrid& f, int b1, int b2) {
    CGrid r(f.grid);
    for (int i = 0; i < f.grid.dims[0]; ++i)
        for (int j = 0; j < f.grid.dims[1]; ++j) {
            auto z = f.grid.point(i, j);
            r.ref(i, j) = f.at(i, j) * std::pow(z[0], b1) * std::pow(z[1], b2);
        }
    return r;
}

inline void axpy_grid(CGrid& acc, cplx a, const CGrid& x) {
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += a * x.v[i];
}

// Normalized tangential operator T_q = L_{2-q/2} / N^{2-q/2} acting on a
// stored factor; see the hierarchy expansion of the bulk equation.
inline CGrid apply_T(int q, const CGrid& f, const HierarchyTables& tab, const Vec2& alpha) {
    CGrid r(f.grid);
    CGrid df[2] = {fd::deriv(f, 0), fd::deriv(f, 1)};
    CGrid d2f[2][2];
    d2f[0][0] = fd::deriv2(f, 0);
    d2f[1][1] = fd::deriv2(f, 1);
    d2f[0][1] = fd::mixed(f);
    d2f[1][0] = d2f[0][1];
    const cplx I(0.0, 1.0);

    auto each_beta = [](int order, auto&& fn) {
        if (order < 0) return;
        for (int b1 = 0; b1 <= order; ++b1) fn(b1, order - b1);
    };

    // -(gamma z^beta alpha.alpha) f, |beta| = q
    each_beta(q, [&](int b1, int b2) {
        auto it = tab.g.find({b1, b2});
        if (it == tab.g.end()) return;
        double coef = 0.0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) coef += it->second(a, b) * alpha[a] * alpha[b];
        if (coef != 0.0) axpy_grid(r, cplx(-coef), zmul(f, b1, b2));
    });
    // 2i gamma_{jl} z^beta alpha_l d_{z_j} f, |beta| = q-1
    each_beta(q - 1, [&](int b1, int b2) {
        auto it = tab.g.find({b1, b2});
        if (it == tab.g.end()) return;
        for (int j = 0; j < 2; ++j) {
            double coef = it->second(j, 0) * alpha[0] + it->second(j, 1) * alpha[1];
            if (coef != 0.0) axpy_grid(r, 2.0 * I * coef, zmul(df[j], b1, b2));
        }
    });
    // gamma_{jl} z^beta d2_{jl} f + i d_l z^beta alpha_l f, |beta| = q-2
    each_beta(q - 2, [&](int b1, int b2) {
        auto itg = tab.g.find({b1, b2});
        if (itg != tab.g.end())
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    if (itg->second(a, b) != 0.0)
                        axpy_grid(r, cplx(itg->second(a, b)), zmul(d2f[a][b], b1, b2));
        auto itd = tab.d.find({b1, b2});
        if (itd != tab.d.end()) {
            double coef = itd->second(0) * alpha[0] + itd->second(1) * alpha[1];
            if (coef != 0.0) axpy_grid(r, I * coef, zmul(f, b1, b2));
        }
    });
    // d_l z^beta d_{z_l} f, |beta| = q-3
    each_beta(q - 3, [&](int b1, int b2) {
        auto itd = tab.d.find({b1, b2});
        if (itd == tab.d.end()) return;
        for (int l = 0; l < 2; ++l)
            if (itd->second(l) != 0.0)
                axpy_grid(r, cplx(itd->second(l)), zmul(df[l], b1, b2));
    });
    return r;
}

} // namespace detail

// Approximate solution u_N = e^{iN alpha.(x-x0)} sum_r N^{-r/2} v_r with
// v_r = sum_l Q_r^l(z) (C0 z_{n+1})^s W_l(C0 z_{n+1}), z = sqrt(N)(x-x0),
// z_{n+1} = N x_{n+1}. All correction profiles collapse to the single chain
// W_0 = K_s, W_l = solve_inhomogeneous(W_{l-1}).
struct AnsatzSolution {
    ProbeSpec spec;
    double C0 = 0.0;
    double normalization = 1.0;
    std::vector<std::vector<CGrid>> Q; // Q[r][l], l = 0..r
    std::vector<RadialProfile> W;      // bare chain profiles
    std::vector<double> kappa;         // weighted flux of t^s W_l at 0
    double c_bar = 0.0, c_hat = 0.0;

    // (t^s W_l)(t); analytic limits at t -> 0.
    double phi(int l, double t) const {
        if (t <= 0.0) return l == 0 ? c_bar : 0.0;
        if (t < W[l].grid.front()) {
            if (l == 0) return c_bar; // t^s K_s -> c_bar
            return 0.0;               // o(1) vanishing
        }
        return std::pow(t, spec.s.value()) * W[l].evaluate(t);
    }
    double dphi(int l, double t) const { // d/dt (t^s W_l)
        double sv = spec.s.value();
        double ts = std::pow(t, sv);
        if (l == 0) return -ts * eval_K_sm1(spec.s, t); // d/dt t^s K_s = -t^s K_{1-s}
        return ts * (W[l].evaluate_derivative(t) + sv / t * W[l].evaluate(t));
    }

    // Trace at x_{n+1}=0 on a tangential grid (only v_0 survives).
    CGrid trace(const TangentialGrid& grid) const {
        CGrid out(grid);
        double rtN = std::sqrt(spec.N);
        for (int i = 0; i < grid.dims[0]; ++i)
            for (int j = 0; j < grid.dims[1]; ++j) {
                auto p = grid.point(i, j);
                double dx = p[0] - spec.x0[0], dy = p[1] - spec.x0[1];
                // v_0's tangential factor is eta itself; evaluate it directly
                cplx q = spec.eta->evaluate({rtN * dx, rtN * dy});
                double ph = spec.N * (spec.alpha[0] * dx + spec.alpha[1] * dy);
                out.ref(i, j) =
                    normalization * c_bar * q * cplx(std::cos(ph), std::sin(ph));
            }
        return out;
    }

    // Pointwise evaluation u_N(x, x_{n+1}).
    cplx evaluate(const Vec2& x, double xn1) const {
        double rtN = std::sqrt(spec.N);
        double zx = rtN * (x[0] - spec.x0[0]), zy = rtN * (x[1] - spec.x0[1]);
        double t = C0 * spec.N * xn1;
        cplx acc{0.0, 0.0};
        double Nr = 1.0;
        for (std::size_t r = 0; r < Q.size(); ++r) {
            for (std::size_t l = 0; l < Q[r].size(); ++l) {
                cplx q = Q[r][l].interpolate(zx, zy);
                if (q != cplx(0.0)) acc += Nr * q * phi(static_cast<int>(l), t);
            }
            Nr /= rtN;
        }
        double ph = spec.N * (spec.alpha[0] * (x[0] - spec.x0[0]) +
                              spec.alpha[1] * (x[1] - spec.x0[1]));
        return normalization * acc * cplx(std::cos(ph), std::sin(ph));
    }

    // Conormal weighted flux -lim x_{n+1}^{1-2s} d_{x_{n+1}} u at a tangential
    // point, in x-variables (the N^{2s} rescale from z_{n+1} = N x_{n+1} included).
    cplx weighted_flux(const Vec2& x) const {
        double sv = spec.s.value();
        double rtN = std::sqrt(spec.N);
        double zx = rtN * (x[0] - spec.x0[0]), zy = rtN * (x[1] - spec.x0[1]);
        cplx acc{0.0, 0.0};
        double Nr = 1.0;
        for (std::size_t r = 0; r < Q.size(); ++r) {
            for (std::size_t l = 0; l < Q[r].size(); ++l) {
                cplx q = Q[r][l].interpolate(zx, zy);
                if (q != cplx(0.0))
                    acc += Nr * q * std::pow(C0, 2.0 * sv) * kappa[l];
            }
            Nr /= rtN;
        }
        double ph = spec.N * (spec.alpha[0] * (x[0] - spec.x0[0]) +
                              spec.alpha[1] * (x[1] - spec.x0[1]));
        return -normalization * std::pow(spec.N, 2.0 * sv) * acc *
               cplx(std::cos(ph), std::sin(ph));
    }
};

inline AnsatzSolution build_ansatz(const ProbeSpec& spec, const ConductivityField& field) {
    spec.check();
    if (field.n != 2) throw std::invalid_argument("build_ansatz: n=2 required");
    if (2 * spec.depth_k > field.smoothness)
        throw std::invalid_argument("build_ansatz: depth_k exceeds field smoothness order");

    AnsatzSolution a;
    a.spec = spec;
    const double sv = spec.s.value();
    a.c_bar = std::exp2(sv - 1.0) * std::tgamma(sv);
    a.c_hat = std::exp2(-sv) * std::tgamma(1.0 - sv);

    Eigen::Matrix2d g0 = field.gamma(spec.x0);
    Eigen::Vector2d al(spec.alpha[0], spec.alpha[1]);
    double C0sq = al.dot(g0 * al);
    if (!(C0sq > 0.0)) throw std::invalid_argument("build_ansatz: alpha.gamma(x0)alpha <= 0");
    a.C0 = std::sqrt(C0sq);

    const int k = spec.depth_k;
    const int R = 2 * k;

    // chain profiles and their weighted flux limits
    a.W.push_back(bessel_k_profile(spec.s));
    a.kappa.push_back(-a.c_hat);
    for (int l = 1; l <= R; ++l) {
        a.W.push_back(solve_inhomogeneous(spec.s, a.W.back()));
        a.kappa.push_back(weighted_flux_limit(a.W.back(), spec.s));
    }

    // Q[0][0] = eta samples (complex copy)
    a.Q.resize(R + 1);
    a.Q[0].emplace_back(spec.eta->samples.grid);
    a.Q[0][0].v = spec.eta->samples.v;

    if (R == 0) {
        if (spec.mode == ProbeMode::neumann)
            a.normalization = 1.0 / (a.c_hat * std::pow(spec.N, 2.0 * sv) *
                                     std::pow(a.C0, 2.0 * sv));
        return a;
    }

    auto tables = detail::build_tables(field, spec.x0, k);

    for (int r = 0; r < R; ++r) {
        // S^l = sum_q T_q Q[r+1-q][l]; Q[r+1][l+1] = -S^l / C0^2 so the solved
        // orders of the bulk expansion cancel.
        a.Q[r + 1].assign(r + 2, CGrid(a.Q[0][0].grid));
        for (int q = 1; q <= r + 1; ++q) {
            const auto& prev = a.Q[r + 1 - q];
            for (std::size_t l = 0; l < prev.size(); ++l) {
                if (prev[l].max_abs() == 0.0) continue;
                CGrid t = detail::apply_T(q, prev[l], tables, spec.alpha);
                detail::axpy_grid(a.Q[r + 1][l + 1], cplx(-1.0 / C0sq), t);
            }
        }
        if (spec.mode == ProbeMode::neumann) {
            // Cancel the weighted flux of v_{r+1} by adding a homogeneous
            // K_s term: flux(t^s K_s) = -c_hat, so Q^0 = (1/c_hat) sum_l kappa_l Q^l.
            for (std::size_t l = 1; l < a.Q[r + 1].size(); ++l)
                detail::axpy_grid(a.Q[r + 1][0], cplx(a.kappa[l] / a.c_hat),
                                  a.Q[r + 1][l]);
        }
    }

    if (spec.mode == ProbeMode::neumann)
        a.normalization =
            1.0 / (a.c_hat * std::pow(spec.N, 2.0 * sv) * std::pow(a.C0, 2.0 * sv));
    return a;
}

// Weighted bulk residual sup |div x_{n+1}^{1-2s} gamma~ grad u_N| / z_{n+1}^{1-2s}
// over the probe support, evaluated semi-analytically from the stored expansion
// with the true coefficient fields (the solved orders cancel; what remains is
// the Taylor remainder plus the unsolved tail orders).
inline double ansatz_residual(const AnsatzSolution& a, const ConductivityField& field,
                              int tangential_stride = 3) {
    const ProbeSpec& spec = a.spec;
    const double sv = spec.s.value();
    const double N = spec.N, rtN = std::sqrt(N);
    const double C0sq = a.C0 * a.C0;
    const auto& g = a.Q[0][0].grid;

    // precompute tangential derivative grids
    std::vector<std::vector<CGrid>> dQ0(a.Q.size()), dQ1(a.Q.size());
    std::vector<std::vector<CGrid>> d00(a.Q.size()), d11(a.Q.size()), d01(a.Q.size());
    for (std::size_t r = 0; r < a.Q.size(); ++r)
        for (std::size_t l = 0; l < a.Q[r].size(); ++l) {
            dQ0[r].push_back(fd::deriv(a.Q[r][l], 0));
            dQ1[r].push_back(fd::deriv(a.Q[r][l], 1));
            d00[r].push_back(fd::deriv2(a.Q[r][l], 0));
            d11[r].push_back(fd::deriv2(a.Q[r][l], 1));
            d01[r].push_back(fd::mixed(a.Q[r][l]));
        }

    // normal samples in t = C0 z_{n+1}
    std::vector<double> tsamples;
    for (double t = 0.05; t < 25.0; t *= 1.35) tsamples.push_back(t);

    const double hin = 5.8e-6;
    const cplx I(0.0, 1.0);
    double worst = 0.0;
    for (int i = 2; i < g.dims[0] - 2; i += tangential_stride)
        for (int j = 2; j < g.dims[1] - 2; j += tangential_stride) {
            auto z = g.point(i, j);
            if (z[0] * z[0] + z[1] * z[1] >= 1.0) continue;
            bool active = false;
            for (std::size_t r = 0; r < a.Q.size() && !active; ++r)
                for (std::size_t l = 0; l < a.Q[r].size(); ++l)
                    if (std::abs(a.Q[r][l].at(i, j)) > 1e-14) { active = true; break; }
            if (!active) continue;

            Vec2 x{spec.x0[0] + z[0] / rtN, spec.x0[1] + z[1] / rtN};
            Eigen::Matrix2d gm = field.gamma(x);
            double cx = field.c(x);
            double gaa = spec.alpha[0] * (gm(0, 0) * spec.alpha[0] + gm(0, 1) * spec.alpha[1]) +
                         spec.alpha[1] * (gm(1, 0) * spec.alpha[0] + gm(1, 1) * spec.alpha[1]);
            Eigen::Vector2d dl;
            for (int l = 0; l < 2; ++l) {
                double acc = 0.0;
                for (int jj = 0; jj < 2; ++jj) {
                    Vec2 xp = x, xm = x;
                    (jj == 0 ? xp[0] : xp[1]) += hin;
                    (jj == 0 ? xm[0] : xm[1]) -= hin;
                    acc += (field.c(xp) * field.gamma(xp)(jj, l) -
                            field.c(xm) * field.gamma(xm)(jj, l)) /
                           (2.0 * hin);
                }
                dl(l) = acc / cx;
            }

            for (double t : tsamples) {
                cplx B{0.0, 0.0};
                double Nr = 1.0;
                for (std::size_t r = 0; r < a.Q.size(); ++r) {
                    for (std::size_t l = 0; l < a.Q[r].size(); ++l) {
                        cplx q = a.Q[r][l].at(i, j);
                        double pl = a.phi(static_cast<int>(l), t);
                        double plm =
                            l == 0 ? 0.0 : a.phi(static_cast<int>(l) - 1, t);
                        // N^2 block: ODE identity leaves the Taylor remainder
                        cplx term = N * N * q * ((C0sq - gaa) * pl + C0sq * plm);
                        // N^{3/2}: 2i gamma alpha . grad_z
                        cplx gdq0 = gm(0, 0) * dQ0[r][l].at(i, j) + gm(0, 1) * dQ1[r][l].at(i, j);
                        cplx gdq1 = gm(1, 0) * dQ0[r][l].at(i, j) + gm(1, 1) * dQ1[r][l].at(i, j);
                        term += std::pow(N, 1.5) * 2.0 * I *
                                (spec.alpha[0] * gdq0 + spec.alpha[1] * gdq1) * pl;
                        // N^1: gamma : D2 + i d.alpha
                        cplx lap = gm(0, 0) * d00[r][l].at(i, j) + gm(1, 1) * d11[r][l].at(i, j) +
                                   2.0 * gm(0, 1) * d01[r][l].at(i, j);
                        term += N * (lap + I * (dl(0) * spec.alpha[0] + dl(1) * spec.alpha[1]) * q) * pl;
                        // N^{1/2}: d . grad_z
                        term += std::sqrt(N) *
                                (dl(0) * dQ0[r][l].at(i, j) + dl(1) * dQ1[r][l].at(i, j)) * pl;
                        B += Nr * term;
                    }
                    Nr /= rtN;
                }
                worst = std::max(worst, cx * std::abs(B));
            }
        }
    return std::pow(N, 2.0 * sv - 1.0) * worst * a.normalization;
}

} // namespace fracrec
