#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fracrec/grid.hpp"

namespace fracrec {

enum class CutoffKind { mollified_box, radial_bump };

namespace detail {

// Standard bump mollifier on (-1,1), unnormalized.
inline double bump(double x) {
    if (std::fabs(x) >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - x * x));
}

inline double bump_mass() {
    static const double z = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [](double x) { return bump(x); }, -1.0, 1.0, 12, 1e-14);
    return z;
}

// CDF of the normalized bump, tabulated once (cumulative Simpson on a fine
// uniform grid) and evaluated by cubic Hermite with the density as slope.
class BumpCdf {
  public:
    BumpCdf() : h_(2.0 / (kN - 1)), val_(kN), der_(kN) {
        const double z = bump_mass();
        for (int i = 0; i < kN; ++i) der_[i] = bump(-1.0 + i * h_) / z;
        val_[0] = 0.0;
        for (int i = 0; i + 2 < kN; i += 2) {
            double add = h_ / 3.0 * (der_[i] + 4.0 * der_[i + 1] + der_[i + 2]);
            val_[i + 2] = val_[i] + add;
            // midpoint by half-interval Simpson
            val_[i + 1] = val_[i] + h_ / 6.0 * (der_[i] + 4.0 * bump(-1.0 + (i + 0.5) * h_) / z +
                                                der_[i + 1]);
        }
        val_[kN - 1] = 1.0;
    }
    double operator()(double x) const {
        if (x <= -1.0) return 0.0;
        if (x >= 1.0) return 1.0;
        double f = (x + 1.0) / h_;
        int i = std::min(static_cast<int>(f), kN - 2);
        double u = f - i;
        double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
        double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
        return h00 * val_[i] + h10 * h_ * der_[i] + h01 * val_[i + 1] + h11 * h_ * der_[i + 1];
    }

  private:
    static constexpr int kN = 4001; // odd so Simpson pairs tile [-1,1]
    double h_;
    std::vector<double> val_, der_;
};

inline const BumpCdf& bump_cdf() {
    static const BumpCdf c;
    return c;
}

// Fourier cosine transform of the normalized bump, int rho(x) cos(ux) dx.
// Fixed high-order Gauss rule: the integrand is entire in x and the rule is
// accurate to machine precision for |u| up to several hundred.
inline double bump_ft(double u) {
    const double z = bump_mass();
    // composite 30-point Gauss; segment count tracks the oscillation so the
    // rule stays machine-accurate for |u| up to several thousand
    using G = boost::math::quadrature::gauss<double, 30>;
    const int K = std::max(4, static_cast<int>(std::ceil(std::fabs(u) / 12.0)));
    double acc = 0.0;
    for (int k = 0; k < K; ++k) {
        const double a = -1.0 + 2.0 * k / K, b = -1.0 + 2.0 * (k + 1) / K;
        acc += G::integrate([u](double x) { return bump(x) * std::cos(u * x); }, a, b);
    }
    return acc / z;
}

} // namespace detail

// Compactly supported cutoff with unit L2 mass, support in the open unit
// ball. mollified_box: eta(z) = C * prod_j m(sigma z_j) with m = rho_eps * chi_[-1/2,1/2];
// radial_bump: eta(z) = C * bump(|z|).
struct CutoffProfile {
    CutoffKind kind = CutoffKind::mollified_box;
    double epsilon = 0.1;
    int n = 2;
    double sigma = 0.0;   // argument rescale for the box factors
    double C = 0.0;       // normalization constant (sup bound: 0 <= eta <= C)
    double I2 = 0.0;      // 1-D int m^2 (mollified_box)
    CGrid samples;        // tangential samples on [-1,1]^n

    // 1-D factor m and its transform (mollified_box machinery).
    double m1(double x) const {
        const auto& P = detail::bump_cdf();
        return P((x + 0.5) / epsilon) - P((x - 0.5) / epsilon);
    }
    double m1_hat(double r) const {
        // exact convolution identity for the constructed m
        double sinc = (std::fabs(r) < 1e-8) ? 1.0 - r * r / 24.0
                                            : std::sin(0.5 * r) / (0.5 * r);
        return sinc * detail::bump_ft(epsilon * r);
    }

    double evaluate(const std::array<double, 2>& z) const {
        if (kind == CutoffKind::mollified_box) {
            double p = m1(sigma * z[0]);
            if (n == 2) p *= m1(sigma * z[1]);
            return C * p;
        }
        double r2 = z[0] * z[0] + (n == 2 ? z[1] * z[1] : 0.0);
        return C * detail::bump(std::sqrt(r2));
    }

    // eta_hat(zeta) for zeta = r * alpha (real, even).
    double fourier(double r, const std::array<double, 2>& alpha) const {
        if (kind == CutoffKind::mollified_box) {
            double p = m1_hat(r * alpha[0] / sigma) / sigma;
            if (n == 2) p *= m1_hat(r * alpha[1] / sigma) / sigma;
            return C * p;
        }
        // radial: n=2 Hankel transform, n=1 cosine transform. The integrand is
        // smooth on [0,1]; a composite fixed Gauss rule whose segment count
        // tracks the oscillation q*t is exact to machine precision and much
        // cheaper than adaptive refinement for repeated evaluation.
        double q = std::fabs(r);
        const int K = std::max(12, static_cast<int>(std::ceil(q / 4.0)));
        const auto& gx = boost::math::quadrature::gauss<double, 15>::abscissa();
        const auto& gw = boost::math::quadrature::gauss<double, 15>::weights();
        double acc = 0.0;
        for (int k = 0; k < K; ++k) {
            const double mid = (k + 0.5) / K, hw = 0.5 / K;
            for (std::size_t i = 0; i < gx.size(); ++i)
                for (double sgn : {-1.0, 1.0}) {
                    if (gx[i] == 0.0 && sgn < 0.0) continue;
                    const double t = mid + sgn * hw * gx[i];
                    const double w = hw * gw[i] * detail::bump(t);
                    acc += n == 2 ? w * std::cyl_bessel_j(0, q * t) * t
                                  : w * std::cos(q * t);
                }
        }
        return C * (n == 2 ? 2.0 * M_PI : 2.0) * acc;
    }
};

inline CutoffProfile make_cutoff(CutoffKind kind, double epsilon, int samples_per_axis = 161,
                                 int n = 2) {
    if (!(epsilon > 0.0 && epsilon < 0.25))
        throw std::invalid_argument("make_cutoff: epsilon must lie in (0, 1/4)");
    if (n != 1 && n != 2) throw std::invalid_argument("make_cutoff: n must be 1 or 2");
    CutoffProfile p;
    p.kind = kind;
    p.epsilon = epsilon;
    p.n = n;
    if (kind == CutoffKind::mollified_box) {
        // support box |z_j| <= (1/2+eps)/sigma; corners on the unit sphere
        p.sigma = std::sqrt(static_cast<double>(n)) * (0.5 + epsilon);
        p.I2 = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&p](double x) { double m = p.m1(x); return m * m; }, -(0.5 + epsilon),
            0.5 + epsilon, 12, 1e-13);
        p.C = std::pow(p.sigma / p.I2, 0.5 * n);
    } else {
        p.sigma = 1.0;
        double q2;
        if (n == 2)
            q2 = 2.0 * M_PI *
                 boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                     [](double t) { double b = detail::bump(t); return b * b * t; }, 0.0,
                     1.0, 12, 1e-13);
        else
            q2 = 2.0 * boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                     [](double t) { double b = detail::bump(t); return b * b; }, 0.0, 1.0,
                     12, 1e-13);
        p.C = 1.0 / std::sqrt(q2);
    }
    TangentialGrid g;
    g.center = {0.0, 0.0};
    g.h = 2.0 / (samples_per_axis - 1);
    g.dims = {samples_per_axis, n == 2 ? samples_per_axis : 1};
    p.samples = CGrid(g);
    for (int i = 0; i < g.dims[0]; ++i)
        for (int j = 0; j < g.dims[1]; ++j) {
            auto z = g.point(i, j);
            p.samples.ref(i, j) = p.evaluate({z[0], n == 2 ? z[1] : 0.0});
        }
    return p;
}

// Frequencies N with eta_hat(alpha*sqrt(N)) = 0, found per 1-D factor so that
// even-multiplicity zeros of the product (equal |alpha_j|) are not missed.
inline std::vector<double> admissible_frequencies(const CutoffProfile& eta,
                                                  const std::array<double, 2>& alpha,
                                                  int count, double N_min) {
    if (count < 1) throw std::invalid_argument("admissible_frequencies: count >= 1 required");
    double na = std::sqrt(alpha[0] * alpha[0] + alpha[1] * alpha[1]);
    if (std::fabs(na - 1.0) > 1e-12)
        throw std::invalid_argument("admissible_frequencies: alpha must be a unit vector");

    const double r_min = std::sqrt(std::max(N_min, 0.0));
    const double r_ceiling = 2000.0; // N up to 4e6
    std::vector<double> roots;

    auto scan = [&](const std::function<double(double)>& f, double scale) {
        // zeros of f(r * scale) in r; scan step resolves the ~2*pi spacing
        double du = 0.4 / std::max(scale, 1e-12);
        double r0 = std::max(1e-9, r_min - 2.0 * du), f0 = f(r0 * scale);
        for (double r = r0 + du; r < r_ceiling; r += du) {
            double f1 = f(r * scale);
            if (f0 == 0.0) roots.push_back(r - du);
            else if (f0 * f1 < 0.0) {
                double a = r - du, b = r, fa = f0;
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (a + b), fm = f(mid * scale);
                    if (fa * fm <= 0.0) b = mid;
                    else { a = mid; fa = fm; }
                }
                roots.push_back(0.5 * (a + b));
            }
            f0 = f1;
            if (roots.size() >= static_cast<std::size_t>(2 * count + 8)) break;
        }
    };

    if (eta.kind == CutoffKind::mollified_box) {
        auto mhat = [&eta](double u) { return eta.m1_hat(u); };
        for (int j = 0; j < eta.n; ++j) {
            double aj = std::fabs(alpha[j]);
            if (aj < 1e-14) continue;
            scan(mhat, aj / eta.sigma);
        }
    } else {
        scan([&](double r) { return eta.fourier(r, alpha); }, 1.0);
    }

    std::sort(roots.begin(), roots.end());
    std::vector<double> out;
    const double eta0 = eta.fourier(0.0, alpha);
    for (double r : roots) {
        if (r < r_min) continue;
        if (!out.empty() && std::fabs(r * r - out.back()) < 1e-9 * out.back()) continue;
        if (std::fabs(eta.fourier(r, alpha)) > 1e-12 * std::fabs(eta0)) continue;
        out.push_back(r * r);
        if (static_cast<int>(out.size()) == count) break;
    }
    return out; // possibly shorter than count (caller checks)
}

} // namespace fracrec
