#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fracrec/bessel.hpp"
#include "fracrec/order.hpp"

namespace fracrec {

// Graded grid for the normal-direction profiles: geometric from t_min up to
// t_mid (resolves the t^{-s} layer), uniform from t_mid to t_max.
struct ProfileGridSpec {
    double t_min = 1e-6;
    double t_mid = 2.0;
    double t_max = 40.0;
    double ratio = 1.05;      // geometric growth factor below t_mid
    double uniform_dt = 0.05; // spacing above t_mid

    ProfileGridSpec refined() const {
        ProfileGridSpec r = *this;
        r.ratio = std::sqrt(ratio);
        r.uniform_dt = 0.5 * uniform_dt;
        return r;
    }

    std::vector<double> build() const {
        if (!(t_min > 0 && t_min < t_mid && t_mid < t_max && ratio > 1.0 && uniform_dt > 0))
            throw std::invalid_argument("ProfileGridSpec: inconsistent parameters");
        std::vector<double> g;
        for (double t = t_min; t < t_mid; t *= ratio) g.push_back(t);
        for (double t = t_mid; t <= t_max + 0.5 * uniform_dt; t += uniform_dt) g.push_back(t);
        return g;
    }
};

// Normal-direction profile w(t) on a graded grid with endpoint descriptors.
// `weighted` profiles carry the t^s factor (the h_A family); bare profiles
// are solutions of t^2 w'' + t w' - (s^2+t^2) w = t^2 v.
struct RadialProfile {
    std::vector<double> grid;
    std::vector<double> values;
    std::vector<double> d_values;
    double zero_exponent = 0.0; // w(t) = O(t^{zero_exponent}) as t -> 0
    double decay_power = 0.0;   // w(t) = O(t^{decay_power} e^{-decay_rate t}) at infinity
    double decay_rate = 1.0;
    double tail_coeff = 0.0; // measured leading coefficient of the tail law
    double tail_cut = 0.0;   // beyond this, the tail law represents the profile
    bool weighted = false;
    double scale = 1.0; // A for homogeneous profiles

    std::size_t size() const { return grid.size(); }

    // Cubic Hermite evaluation; tail law beyond tail_cut.
    double evaluate(double t) const {
        if (t >= tail_cut)
            return tail_coeff * std::pow(t, decay_power) * std::exp(-decay_rate * t);
        auto it = std::lower_bound(grid.begin(), grid.end(), t);
        std::size_t j = (it == grid.begin()) ? 0 : (it - grid.begin() - 1);
        j = std::min(j, grid.size() - 2);
        double h = grid[j + 1] - grid[j];
        double u = (t - grid[j]) / h;
        double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
        double h10 = u * (1 - u) * (1 - u);
        double h01 = u * u * (3 - 2 * u);
        double h11 = u * u * (u - 1);
        return h00 * values[j] + h10 * h * d_values[j] + h01 * values[j + 1] +
               h11 * h * d_values[j + 1];
    }

    double evaluate_derivative(double t) const {
        if (t >= tail_cut)
            return tail_coeff * std::exp(-decay_rate * t) *
                   (decay_power * std::pow(t, decay_power - 1.0) -
                    decay_rate * std::pow(t, decay_power));
        auto it = std::lower_bound(grid.begin(), grid.end(), t);
        std::size_t j = (it == grid.begin()) ? 0 : (it - grid.begin() - 1);
        j = std::min(j, grid.size() - 2);
        double h = grid[j + 1] - grid[j];
        double u = (t - grid[j]) / h;
        double g00 = (6 * u * u - 6 * u) / h;
        double g10 = 3 * u * u - 4 * u + 1;
        double g01 = (6 * u - 6 * u * u) / h;
        double g11 = 3 * u * u - 2 * u;
        return g00 * values[j] + g10 * d_values[j] + g01 * values[j + 1] +
               g11 * d_values[j + 1];
    }
};

// h_A(t) = (At)^s K_s(At), the decaying solution of the normal ODE.
inline RadialProfile homogeneous_profile(const Order& s, double A,
                                         const ProfileGridSpec& spec = {}) {
    if (!(A > 0)) throw std::invalid_argument("homogeneous_profile: A must be positive");
    const double sv = s.value();
    RadialProfile p;
    p.grid = spec.build();
    p.values.resize(p.grid.size());
    p.d_values.resize(p.grid.size());
    for (std::size_t j = 0; j < p.grid.size(); ++j) {
        double z = A * p.grid[j];
        double zs = std::pow(z, sv);
        p.values[j] = zs * eval_K(s, z);
        // d/dt (At)^s K_s(At) = -A (At)^s K_{s-1}(At)
        p.d_values[j] = -A * zs * eval_K_sm1(s, z);
    }
    p.zero_exponent = 0.0;
    p.decay_power = sv - 0.5;
    p.decay_rate = A;
    p.tail_cut = p.grid.back();
    p.tail_coeff = std::sqrt(M_PI / 2.0) * std::pow(A, sv - 0.5);
    p.weighted = true;
    p.scale = A;
    return p;
}

// Bare K_s profile, the seed of the correction chain (source v = K_s).
inline RadialProfile bessel_k_profile(const Order& s, const ProfileGridSpec& spec = {}) {
    RadialProfile p;
    p.grid = spec.build();
    p.values.resize(p.grid.size());
    p.d_values.resize(p.grid.size());
    for (std::size_t j = 0; j < p.grid.size(); ++j) {
        BesselIK r = bessel_ik(s, p.grid[j]);
        p.values[j] = r.k;
        p.d_values[j] = r.kp;
    }
    p.zero_exponent = -s.value();
    p.decay_power = -0.5;
    p.decay_rate = 1.0;
    p.tail_cut = p.grid.back();
    p.tail_coeff = std::sqrt(M_PI / 2.0);
    p.weighted = false;
    return p;
}

inline RadialProfile zero_profile(const ProfileGridSpec& spec = {}) {
    RadialProfile p;
    p.grid = spec.build();
    p.values.assign(p.grid.size(), 0.0);
    p.d_values.assign(p.grid.size(), 0.0);
    p.zero_exponent = 0.0;
    p.decay_power = 0.0;
    p.decay_rate = 1.0;
    p.tail_cut = p.grid.back();
    p.tail_coeff = 0.0;
    p.weighted = false;
    return p;
}

namespace detail {

// Cumulative integral of f over the profile grid by per-cell cubic Hermite
// quadrature: int_{t_j}^{t_{j+1}} f = h/2 (f_j + f_{j+1}) + h^2/12 (f'_j - f'_{j+1}).
inline std::vector<double> cumulative_hermite(const std::vector<double>& grid,
                                              const std::vector<double>& f,
                                              const std::vector<double>& df) {
    std::vector<double> F(grid.size(), 0.0);
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        double h = grid[j + 1] - grid[j];
        F[j + 1] = F[j] + 0.5 * h * (f[j] + f[j + 1]) + h * h / 12.0 * (df[j] - df[j + 1]);
    }
    return F;
}

} // namespace detail

// Variation-of-parameters solution of t^2 w'' + t w' - (s^2+t^2) w = t^2 v:
//   w(t) = -I_s(t) int_t^inf K_s v tau dtau - K_s(t) int_0^t I_s v tau dtau.
inline RadialProfile solve_inhomogeneous(const Order& s, const RadialProfile& source) {
    const double sv = s.value();
    if (source.weighted)
        throw std::invalid_argument("solve_inhomogeneous: source must be a bare profile");
    if (source.zero_exponent < -sv - 1e-12)
        throw std::invalid_argument(
            "solve_inhomogeneous: source grows faster than t^{-s} at 0 (zero_exponent=" +
            std::to_string(source.zero_exponent) + ")");
    if (source.decay_power < -0.5 - 1e-12)
        throw std::invalid_argument(
            "solve_inhomogeneous: source decay_power below -1/2 (decay_power=" +
            std::to_string(source.decay_power) + ")");

    const auto& g = source.grid;
    const std::size_t M = g.size();
    std::vector<double> Iv(M), Kv(M), Ipv(M), Kpv(M);
    for (std::size_t j = 0; j < M; ++j) {
        BesselIK r = bessel_ik(s, g[j]);
        Iv[j] = r.i;
        Kv[j] = r.k;
        Ipv[j] = r.ip;
        Kpv[j] = r.kp;
    }

    // Integrands f_K = K_s v t and f_I = I_s v t with analytic derivatives.
    std::vector<double> fK(M), dfK(M), fI(M), dfI(M);
    for (std::size_t j = 0; j < M; ++j) {
        double t = g[j], v = source.values[j], dv = source.d_values[j];
        fK[j] = Kv[j] * v * t;
        dfK[j] = Kpv[j] * v * t + Kv[j] * dv * t + Kv[j] * v;
        fI[j] = Iv[j] * v * t;
        dfI[j] = Ipv[j] * v * t + Iv[j] * dv * t + Iv[j] * v;
    }
    std::vector<double> L = detail::cumulative_hermite(g, fI, dfI); // int_0^t I v tau
    // The portion of int_0^{t_1} I v tau below the grid: integrand ~ t^{1+s+a0},
    // one Hermite cell from 0 with f(0) = 0.
    double L0 = 0.5 * g[0] * fI[0];
    // Analytic tail of int_t^inf K v tau beyond t_max: integrand
    // ~ c sqrt(pi/2) tau^{a+1/2} e^{-2 tau}, leading term of the incomplete integral.
    double T = g.back();
    double tail = source.tail_coeff * std::sqrt(M_PI / 2.0) *
                  std::pow(T, source.decay_power + 0.5) * std::exp(-2.0 * T) / 2.0;
    // R = int_t^inf K v tau, accumulated backward so it stays a sum of
    // same-magnitude terms (forward Ktot - CK[j] cancels catastrophically
    // and the e^t factor in I_s amplifies the jitter).
    std::vector<double> Rv(M);
    Rv[M - 1] = tail;
    for (std::size_t j = M - 1; j > 0; --j) {
        double h = g[j] - g[j - 1];
        Rv[j - 1] = Rv[j] + 0.5 * h * (fK[j - 1] + fK[j]) +
                    h * h / 12.0 * (dfK[j - 1] - dfK[j]);
    }

    RadialProfile w;
    w.grid = g;
    w.values.resize(M);
    w.d_values.resize(M);
    for (std::size_t j = 0; j < M; ++j) {
        double R = Rv[j];
        double Lj = L[j] + L0;
        w.values[j] = -Iv[j] * R - Kv[j] * Lj;
        // d/dt via the analytic rewrite: w' = -I_{s-1} R + K_{s-1} L - (s/t) w
        double ism1 = eval_I_sm1(s, g[j]);
        double ksm1 = eval_K_sm1(s, g[j]);
        w.d_values[j] = -ism1 * R + ksm1 * Lj - sv / g[j] * w.values[j];
    }
    w.zero_exponent = std::min(2.0 * sv, 2.0 - sv) - sv; // t^s w = O(t^{min(2s,2-s)})
    w.decay_power = source.decay_power + 1.0;
    w.decay_rate = 1.0;
    w.tail_cut = T;
    double tl = std::pow(T, w.decay_power) * std::exp(-T);
    w.tail_coeff = (tl != 0.0) ? w.values.back() / tl : 0.0;
    w.weighted = false;
    return w;
}

// Discrete residual of t^2 w'' + t w' - (s^2+t^2) w - t^2 v over the interior
// grid; w'' from a centered nonuniform difference of the stored derivatives.
inline double ode_residual(const RadialProfile& w, const Order& s, const RadialProfile& v) {
    const double sv = s.value();
    double global = 1e-30;
    for (std::size_t j = 0; j < w.grid.size(); ++j) {
        double t = w.grid[j];
        global = std::max(global, (sv * sv + t * t) * std::fabs(w.values[j]));
    }
    double worst = 0.0;
    for (std::size_t j = 1; j + 1 < w.grid.size(); ++j) {
        double hm = w.grid[j] - w.grid[j - 1];
        double hp = w.grid[j + 1] - w.grid[j];
        // second-order nonuniform derivative of the stored derivatives
        double wpp = (hm * hm * w.d_values[j + 1] + (hp * hp - hm * hm) * w.d_values[j] -
                      hp * hp * w.d_values[j - 1]) /
                     (hm * hp * (hm + hp));
        double t = w.grid[j];
        double a = t * t * wpp, b = t * w.d_values[j];
        double c = (sv * sv + t * t) * w.values[j], d = t * t * v.values[j];
        double scale = std::max({std::fabs(a), std::fabs(b), std::fabs(c), std::fabs(d),
                                 1e-8 * global});
        worst = std::max(worst, std::fabs(a + b - c - d) / scale);
    }
    return worst;
}

// lim_{t->0} t^{1-2s} d/dt((At)^s w(At)) by extrapolation over the smallest
// grid points, eliminating the known t^{2-2s} correction.
inline double weighted_flux_limit(const RadialProfile& profile, const Order& s, double A = 1.0) {
    const double sv = s.value();
    if (profile.size() < 3)
        throw std::invalid_argument("weighted_flux_limit: need at least 3 grid points");
    auto G = [&](std::size_t j) {
        double t = profile.grid[j];
        if (profile.weighted) {
            // Weighted values already carry their scale; the limit is in t.
            return std::pow(t, 1.0 - 2.0 * sv) * profile.d_values[j];
        }
        double u = t / A;
        double w = profile.values[j], dw = profile.d_values[j];
        // d/du (Au)^s w(Au) = A^s (s u^{s-1} w + A u^s dw)
        double d = std::pow(A, sv) * (sv * std::pow(u, sv - 1.0) * w +
                                      A * std::pow(u, sv) * dw);
        return std::pow(u, 1.0 - 2.0 * sv) * d;
    };
    double g0 = G(0), g1 = G(1), g2 = G(2);
    double p = 2.0 - 2.0 * sv;
    double r01 = std::pow(profile.grid[0] / profile.grid[1], p);
    double a01 = (g0 - r01 * g1) / (1.0 - r01);
    double r12 = std::pow(profile.grid[1] / profile.grid[2], p);
    double a12 = (g1 - r12 * g2) / (1.0 - r12);
    double denom = std::max({std::fabs(a01), std::fabs(a12), 1e-14});
    if (std::fabs(a01 - a12) > 1e-3 * denom + 1e-10)
        throw std::runtime_error("weighted_flux_limit: extrapolation did not settle (" +
                                 std::to_string(a01) + " vs " + std::to_string(a12) + ")");
    return a01;
}

// Pointwise linear combination a*x + b*y of profiles on a shared grid.
inline RadialProfile axpy(double a, const RadialProfile& x, double b, const RadialProfile& y) {
    if (x.grid.size() != y.grid.size())
        throw std::invalid_argument("axpy: profile grids differ");
    RadialProfile r = x;
    for (std::size_t j = 0; j < r.size(); ++j) {
        r.values[j] = a * x.values[j] + b * y.values[j];
        r.d_values[j] = a * x.d_values[j] + b * y.d_values[j];
    }
    r.zero_exponent = std::min(x.zero_exponent, y.zero_exponent);
    r.decay_power = std::max(x.decay_power, y.decay_power);
    r.tail_coeff = a * x.tail_coeff * (x.decay_power >= y.decay_power ? 1.0 : 0.0) +
                   b * y.tail_coeff * (y.decay_power >= x.decay_power ? 1.0 : 0.0);
    return r;
}

} // namespace fracrec
