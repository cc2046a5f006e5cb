#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fracrec/order.hpp"

namespace fracrec {

// Modified Bessel functions I_nu, K_nu of real order nu in (0,1) together
// with their derivatives. Power/Temme series below t = 2, Steed's continued
// fraction above; the continued-fraction branch produces e^t K_nu natively,
// so scaled evaluation works for arbitrarily large arguments.
struct BesselIK {
    double i;  // I_nu(t), or e^{-t} I_nu(t) when scaled
    double k;  // K_nu(t), or e^{ t} K_nu(t) when scaled
    double ip; // d/dt I_nu, same scaling as i
    double kp; // d/dt K_nu, same scaling as k
};

namespace detail {

inline double chebev(const double* c, int m, double x) {
    double d = 0.0, dd = 0.0;
    double y2 = 2.0 * x;
    for (int j = m - 1; j > 0; j--) {
        double sv = d;
        d = y2 * d - dd + c[j];
        dd = sv;
    }
    return x * d - dd + 0.5 * c[0];
}

// Chebyshev fits for the Temme gamma coefficients, |x| <= 1/2.
inline void beschb(double x, double& gam1, double& gam2, double& gampl, double& gammi) {
    static const double c1[] = {-1.142022680371172e0, 6.516511267076e-3,
                                3.08709017308e-4,     -3.470626964e-6,
                                6.943764e-9,          3.6780e-11,
                                -1.36e-13};
    static const double c2[] = {1.843740587300906e0, -0.076852840844786e0,
                                1.271927136655e-3,   -4.971736704e-6,
                                -3.3126120e-8,       2.42310e-10,
                                -1.70e-13,           -1.0e-15};
    double xx = 8.0 * x * x - 1.0;
    gam1 = chebev(c1, 7, xx);
    gam2 = chebev(c2, 8, xx);
    gampl = gam2 - x * gam1;
    gammi = gam2 + x * gam1;
}

// Temme/Steed evaluation of I_nu, K_nu and derivatives for nu in [0,1),
// always returning the scaled pair (e^{-t} I, e^{t} K).
inline BesselIK bessik_scaled(double nu, double x) {
    constexpr double EPS = std::numeric_limits<double>::epsilon();
    const double FPMIN = std::numeric_limits<double>::min() / EPS;
    constexpr int MAXIT = 10000;
    constexpr double XMIN = 2.0;
    const double PI = 3.141592653589793238462643383279502884;

    int nl = static_cast<int>(nu + 0.5);
    double xmu = nu - nl;
    double xmu2 = xmu * xmu;
    double xi = 1.0 / x;
    double xi2 = 2.0 * xi;

    // CF1 for I'_nu / I_nu.
    double h = nu * xi;
    if (h < FPMIN) h = FPMIN;
    double b = xi2 * nu;
    double d = 0.0, c = h;
    int i = 1;
    for (; i <= MAXIT; i++) {
        b += xi2;
        d = 1.0 / (b + d);
        c = b + 1.0 / c;
        double del = c * d;
        h = del * h;
        if (std::fabs(del - 1.0) < EPS) break;
    }
    if (i > MAXIT) throw std::runtime_error("bessik: CF1 failed to converge");

    double ril = FPMIN;
    double ripl = h * ril;
    double ril1 = ril, rip1 = ripl;
    double fact = nu * xi;
    for (int l = nl; l >= 1; l--) {
        double ritemp = fact * ril + ripl;
        fact -= xi;
        ripl = fact * ritemp + ril;
        ril = ritemp;
    }
    double f = ripl / ril;

    double rkmu, rk1; // scaled K_xmu, K_{xmu+1}
    if (x < XMIN) {
        double x2 = 0.5 * x;
        double pimu = PI * xmu;
        double fct = (std::fabs(pimu) < EPS) ? 1.0 : pimu / std::sin(pimu);
        double dlg = -std::log(x2);
        double e = xmu * dlg;
        double fact2 = (std::fabs(e) < EPS) ? 1.0 : std::sinh(e) / e;
        double gam1, gam2, gampl, gammi;
        beschb(xmu, gam1, gam2, gampl, gammi);
        double ff = fct * (gam1 * std::cosh(e) + gam2 * fact2 * dlg);
        double sum = ff;
        e = std::exp(e);
        double p = 0.5 * e / gampl;
        double q = 0.5 / (e * gammi);
        double cc = 1.0;
        double dd = x2 * x2;
        double sum1 = p;
        int it = 1;
        for (; it <= MAXIT; it++) {
            ff = (it * ff + p + q) / (it * it - xmu2);
            cc *= dd / it;
            p /= (it - xmu);
            q /= (it + xmu);
            double del = cc * ff;
            sum += del;
            double del1 = cc * (p - it * ff);
            sum1 += del1;
            if (std::fabs(del) < std::fabs(sum) * EPS) break;
        }
        if (it > MAXIT) throw std::runtime_error("bessik: K series failed to converge");
        double ex = std::exp(x);
        rkmu = sum * ex;
        rk1 = sum1 * xi2 * ex;
    } else {
        // CF2 (Steed) yields e^x K directly.
        b = 2.0 * (1.0 + x);
        d = 1.0 / b;
        double delh = d;
        h = d;
        double q1 = 0.0, q2 = 1.0;
        double a1 = 0.25 - xmu2;
        double q = a1, cc = a1;
        double a = -a1;
        double s = 1.0 + q * delh;
        int it = 2;
        for (; it <= MAXIT; it++) {
            a -= 2 * (it - 1);
            cc = -a * cc / it;
            double qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += cc * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            double dels = q * delh;
            s += dels;
            if (std::fabs(dels / s) < EPS) break;
        }
        if (it > MAXIT) throw std::runtime_error("bessik: CF2 failed to converge");
        h = a1 * h;
        rkmu = std::sqrt(PI / (2.0 * x)) / s;
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi;
    }

    double rkmup = xmu * xi * rkmu - rk1;
    double rimu = xi / (f * rkmu - rkmup); // Wronskian, scaled consistently
    BesselIK out;
    out.i = rimu * ril1 / ril;
    out.ip = rimu * rip1 / ril;
    for (int l = 1; l <= nl; l++) {
        double rktemp = (xmu + l) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = rktemp;
    }
    out.k = rkmu;
    out.kp = nu * xi * rkmu - rk1;
    return out;
}

// Largest argument for which the unscaled values stay representable.
constexpr double kUnscaledMax = 690.0;

} // namespace detail

inline BesselIK bessel_ik(const Order& s, double t, bool scaled = false) {
    if (!(t > 0.0)) throw std::domain_error("bessel_ik: argument must be positive");
    BesselIK r = detail::bessik_scaled(s.value(), t);
    if (!scaled) {
        if (t > detail::kUnscaledMax)
            throw std::overflow_error(
                "bessel_ik: unscaled values not representable at t=" + std::to_string(t) +
                "; use scaled mode");
        double ex = std::exp(t);
        r.i *= ex;
        r.ip *= ex;
        r.k /= ex;
        r.kp /= ex;
    }
    // In scaled mode ip/kp carry the same exponential factors as i/k, i.e.
    // they are e^{-t} I'(t) and e^{t} K'(t).
    return r;
}

inline double eval_K(const Order& s, double t, bool scaled = false) {
    return bessel_ik(s, t, scaled).k;
}

inline double eval_I(const Order& s, double t, bool scaled = false) {
    return bessel_ik(s, t, scaled).i;
}

// K_{s-1}(t) = K_{1-s}(t): K is even in its order.
inline double eval_K_sm1(const Order& s, double t, bool scaled = false) {
    return eval_K(Order(1.0 - s.value()), t, scaled);
}

// K_{s+1} from the recurrence K_s' = (s/t) K_s - K_{s+1}.
inline double eval_K_sp1(const Order& s, double t, bool scaled = false) {
    BesselIK r = detail::bessik_scaled(s.value(), t);
    double v = s.value() / t * r.k - r.kp;
    if (!scaled) {
        if (t > detail::kUnscaledMax)
            throw std::overflow_error("eval_K_sp1: use scaled mode for large t");
        v *= std::exp(-t);
    }
    return v;
}

// I_{s-1}(t) = I_{1-s}(t) + (2/pi) sin((1-s) pi) K_{1-s}(t), order s-1 in (-1,0).
inline double eval_I_sm1(const Order& s, double t, bool scaled = false) {
    const double PI = 3.141592653589793238462643383279502884;
    double nu = 1.0 - s.value();
    BesselIK r = detail::bessik_scaled(nu, t);
    double i_scaled = r.i + 2.0 / PI * std::sin(nu * PI) * r.k * std::exp(-2.0 * t);
    if (scaled) return i_scaled;
    if (t > detail::kUnscaledMax)
        throw std::overflow_error("eval_I_sm1: use scaled mode for large t");
    return i_scaled * std::exp(t);
}

// The five limit constants attached to an order s.
struct PaperConstants {
    double c_s;     // -2^{2s-1} Gamma(s)/Gamma(1-s), negative
    double c_hat_s; // 2^{-s} Gamma(1-s)
    double c_bar_s; // 2^{s-1} Gamma(s)
    double c1;      // int_0^inf t K_s(t)^2 dt
    double c2;      // int_0^inf t K_{1-s}(t)^2 dt
    double c_sum;   // c1 + c2
    double quad_error; // achieved absolute quadrature error estimate for c1+c2
};

namespace detail {

// int_0^inf t K_nu(t)^2 dt by adaptive Gauss-Kronrod on [0,2] u [2,60];
// the tail beyond 60 is below (pi/4) e^{-120} and is folded into the error.
inline double tail_energy_integral(double nu, double tol, double& err_out) {
    namespace bq = boost::math::quadrature;
    Order o(nu);
    // Near 0 the integrand behaves like t^{1-2nu}; grade it away with
    // t = 2 u^q, q = 1/(1-nu), which makes the transformed integrand ~ u.
    const double q = 2.0 / (1.0 - nu);
    auto f_near = [&](double u) {
        if (u <= 0.0) return 0.0;
        double t = 2.0 * std::pow(u, q);
        double k = eval_K(o, t);
        return t * k * k * 2.0 * q * std::pow(u, q - 1.0);
    };
    auto f_far = [&](double t) {
        double ks = eval_K(o, t, /*scaled=*/true);
        return t * ks * ks * std::exp(-2.0 * t);
    };
    double e1 = 0.0, e2 = 0.0;
    double rel = std::min(1e-12, tol);
    double v1 = bq::gauss_kronrod<double, 15>::integrate(f_near, 0.0, 1.0, 18, rel, &e1);
    double v2 = bq::gauss_kronrod<double, 15>::integrate(f_far, 2.0, 60.0, 18, rel, &e2);
    err_out = e1 + e2 + 1e-30;
    return v1 + v2;
}

} // namespace detail

inline PaperConstants paper_constants(const Order& s, double quad_tol = 1e-10) {
    if (!(quad_tol > 0.0 && quad_tol <= 1e-4))
        throw std::invalid_argument("paper_constants: quad_tol must lie in (0, 1e-4]");
    const double sv = s.value();
    PaperConstants pc;
    pc.c_s = -std::exp2(2.0 * sv - 1.0) * std::tgamma(sv) / std::tgamma(1.0 - sv);
    pc.c_hat_s = std::exp2(-sv) * std::tgamma(1.0 - sv);
    pc.c_bar_s = std::exp2(sv - 1.0) * std::tgamma(sv);
    double e1 = 0.0, e2 = 0.0;
    pc.c1 = detail::tail_energy_integral(sv, quad_tol, e1);
    pc.c2 = detail::tail_energy_integral(1.0 - sv, quad_tol, e2);
    pc.c_sum = pc.c1 + pc.c2;
    pc.quad_error = e1 + e2;
    if (pc.quad_error > quad_tol)
        throw std::runtime_error("paper_constants: quadrature achieved only " +
                                 std::to_string(pc.quad_error) + " (requested " +
                                 std::to_string(quad_tol) + ")");
    return pc;
}

// Relative deviations of the three working identities over a grid of
// arguments. Each residual is normalized by the largest participating term so
// the report stays meaningful where K_{s+1}(t) ~ t^{-s-1} is astronomically
// large.
struct IdentityReport {
    double max_wronskian;   // | t (I' K - I K') - 1 |
    double max_recurrence;  // | K' - (s/t) K + K_{s+1} | / max-term
    double max_weighted_der; // | |d/dt(t^s K_s)|_fd - t^s K_{1-s} | / target
};

inline IdentityReport check_bessel_identities(const Order& s, const std::vector<double>& grid) {
    IdentityReport rep{0.0, 0.0, 0.0};
    const double sv = s.value();
    for (double t : grid) {
        if (!(t > 0.0 && t <= 50.0))
            throw std::domain_error("check_bessel_identities: grid must lie in (0,50]");
        BesselIK r = bessel_ik(s, t);
        double w = t * (r.ip * r.k - r.i * r.kp) - 1.0;
        rep.max_wronskian = std::max(rep.max_wronskian, std::fabs(w));
        double ksp1 = eval_K_sp1(s, t);
        double rec = r.kp - sv / t * r.k + ksp1;
        double rec_scale = std::max({std::fabs(r.kp), std::fabs(sv / t * r.k),
                                     std::fabs(ksp1)});
        rep.max_recurrence = std::max(rep.max_recurrence, std::fabs(rec) / rec_scale);
        // central difference of t^s K_s(t); the step must stay small relative
        // to both the local scale t (small arguments) and the e^{-t} decay
        // scale (large arguments)
        double htd = 3e-4 * std::min(t, 1.0);
        auto g = [&](double u) { return std::pow(u, sv) * eval_K(s, u); };
        double fd = (g(t + htd) - g(t - htd)) / (2.0 * htd);
        double target = std::pow(t, sv) * eval_K_sm1(s, t);
        // normalize by the larger of the derivative target and the function
        // scale itself: near t = 0 with s > 1/2 the derivative vanishes like
        // t^{2s-1} while g stays O(1), and the difference quotient cannot
        // resolve the tiny slope relative to the function magnitude
        double dev = (std::fabs(fd) - target) / std::max(target, g(t));
        rep.max_weighted_der = std::max(rep.max_weighted_der, std::fabs(dev));
    }
    return rep;
}

} // namespace fracrec
