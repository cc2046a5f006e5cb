// Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "fracrec/reconstruct.hpp"

using namespace fracrec;

namespace {

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

void report(int idx, const char* what, bool ok, double secs) {
    std::printf("[%s] criterion %2d: %s (%.1fs)\n", ok ? "PASS" : "FAIL", idx, what,
                secs);
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::vector<double> log_grid(double lo, double hi, int m) {
    std::vector<double> g(m);
    for (int i = 0; i < m; ++i)
        g[i] = lo * std::pow(hi / lo, double(i) / (m - 1));
    return g;
}

// Independent check of c1 + c2 = int_0^inf t (K_s^2 + K_{1-s}^2) dt by composite
// Simpson under the substitution t = u^2 (regularizes the origin).
double energy_sum_oracle(double sv) {
    auto f = [sv](double u) {
        double t = u * u;
        double ks = eval_K(Order(sv), t), k1s = eval_K(Order(1.0 - sv), t);
        return 2.0 * u * t * (ks * ks + k1s * k1s);
    };
    const double a = 1e-8, b = std::sqrt(60.0);
    const int m = 40000;
    const double h = (b - a) / m;
    double acc = f(a) + f(b);
    for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return acc * h / 3.0;
}

Eigen::Matrix2d random_spd(std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Matrix2d m;
    m << 1.0 + u(rng), u(rng), u(rng), 1.0 + u(rng);
    return m.transpose() * m + 0.2 * Eigen::Matrix2d::Identity();
}

std::shared_ptr<CutoffProfile> radial_eta() {
    static auto p =
        std::make_shared<CutoffProfile>(make_cutoff(CutoffKind::radial_bump, 0.1));
    return p;
}

std::shared_ptr<CutoffProfile> box_eta() {
    static auto p =
        std::make_shared<CutoffProfile>(make_cutoff(CutoffKind::mollified_box, 0.1));
    return p;
}

bool relok(double got, double want, double tol) {
    return std::isfinite(got) && std::fabs(got - want) <= tol * std::fabs(want);
}

// 1: modified-Bessel Wronskian and recurrence identities across orders.
void criterion_identities() {
    Timer tm;
    bool ok = true;
    auto grid = log_grid(1e-6, 40.0, 120);
    for (double sv : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        IdentityReport rep = check_bessel_identities(Order(sv), grid);
        ok = ok && rep.max_wronskian <= 1e-8 && rep.max_recurrence <= 1e-8;
    }
    report(1, "Bessel Wronskian/recurrence identities to 1e-8", ok, tm.seconds());
}

// 2: closed-form constants at s = 1/2 plus the independent energy-sum oracle.
void criterion_constants() {
    Timer tm;
    PaperConstants pc = paper_constants(Order(0.5));
    const double rpi2 = std::sqrt(M_PI / 2.0);
    bool ok = std::fabs(pc.c_s + 1.0) <= 1e-12 &&
              std::fabs(pc.c_hat_s - rpi2) <= 1e-12 &&
              std::fabs(pc.c_bar_s - rpi2) <= 1e-12 &&
              std::fabs(pc.c_sum - energy_sum_oracle(0.5)) <= 1e-8;
    for (double sv : {0.3, 0.5, 0.7}) {
        PaperConstants p = paper_constants(Order(sv));
        ok = ok && std::fabs(p.c_sum - M_PI / (2.0 * std::sin(M_PI * sv))) <= 1e-8 &&
             std::fabs(p.c_sum - energy_sum_oracle(sv)) <= 1e-8;
    }
    report(2, "constants vs closed forms and quadrature oracle", ok, tm.seconds());
}

// 3: constant-coefficient Dirichlet solve against the separable Fourier reference.
void criterion_forward_solver() {
    Timer tm;
    bool ok = true;
    auto field = constant_field(Eigen::Matrix2d::Identity());
    for (double sv : {0.5, 0.3}) {
        ResolutionSpec rs;
        rs.N_min = 1.0;
        rs.half_width = M_PI;
        rs.L_z = 8.0;
        rs.lateral = LateralBC::periodic;
        WeightedGrid g = build_domain(field, 16.0, rs);
        ExtensionOperator op(field, g);
        std::vector<cplx> phi(g.ntang());
        for (int jy = 0; jy < g.nx[1]; ++jy)
            for (int ix = 0; ix < g.nx[0]; ++ix) {
                auto p = g.point(ix, jy);
                phi[g.tindex(ix, jy)] = std::exp(cplx(0.0, p[0]));
            }
        ExtensionSolution sol = solve_dirichlet(op, Order(sv), phi);
        ReferenceSolution ref =
            fourier_reference(Order(sv), {1.0, 0.0}, Eigen::Matrix2d::Identity(), 1.0);
        double num = 0.0, den = 0.0;
        for (int jy = 0; jy < g.nx[1]; ++jy)
            for (int ix = 0; ix < g.nx[0]; ++ix) {
                auto p = g.point(ix, jy);
                for (int k = 0; k < g.mz(); ++k) {
                    cplx ex = ref.value({p[0], p[1]}, g.z[k]);
                    cplx got = sol.u[g.tindex(ix, jy) * std::size_t(g.mz()) + k];
                    num += std::norm(got - ex);
                    den += std::norm(ex);
                }
            }
        const double area = 4.0 * M_PI * M_PI;
        const double exact = ref.energy_per_area() * area;
        ok = ok && std::sqrt(num / den) <= 1e-3 &&
             std::fabs(sol.energy - exact) / exact <= 1e-2;
    }
    report(3, "forward solver matches Fourier reference (s=0.5, 0.3)", ok, tm.seconds());
}

// 4: extrapolated scaled Dirichlet-to-Neumann pairing hits its limit constant.
void criterion_dtn_limit() {
    Timer tm;
    const Order s(0.5);
    auto eta = radial_eta();
    std::vector<double> sched{16.0, 32.0, 64.0};
    const double csum = paper_constants(s).c_sum;  // pi/2 at s = 1/2
    auto id = constant_field(Eigen::Matrix2d::Identity());
    PairingSeries p1 =
        probe_direction_fast(id, s, {0, 0}, {1, 0}, sched, PairingMode::dtn, eta);
    Eigen::Matrix2d d;
    d << 4.0, 0.0, 0.0, 1.0;
    auto dg = constant_field(d);
    PairingSeries p2 =
        probe_direction_fast(dg, s, {0, 0}, {1, 0}, sched, PairingMode::dtn, eta);
    bool ok = relok(p1.fit.limit, csum, 0.02) && relok(p2.fit.limit, 2.0 * csum, 0.03);
    report(4, "scaled DtN pairing limits (identity 2%, diag(4,1) 3%)", ok, tm.seconds());
}

// 5: extrapolated scaled Neumann-to-Dirichlet pairing over an admissible schedule.
void criterion_ntd_limit() {
    Timer tm;
    const Order s(0.5);
    auto eta = radial_eta();
    PaperConstants pc = paper_constants(s);
    std::vector<double> base{16.0, 32.0, 64.0};
    auto sched1 = admissible_schedule(*eta, {1.0, 0.0}, base);
    auto id = constant_field(Eigen::Matrix2d::Identity());
    PairingSeries p1 =
        probe_direction_fast(id, s, {0, 0}, {1, 0}, sched1, PairingMode::ntd, eta);
    Eigen::Matrix2d d;
    d << 4.0, 0.0, 0.0, 1.0;
    auto dg = constant_field(d);
    PairingSeries p2 =
        probe_direction_fast(dg, s, {0, 0}, {1, 0}, sched1, PairingMode::ntd, eta);
    const double c2 = pc.c_hat_s * pc.c_hat_s;
    bool ok = relok(p1.fit.limit, pc.c_sum / c2, 0.05) &&
              relok(p2.fit.limit, pc.c_sum / (c2 * 2.0), 0.05);
    report(5, "scaled NtD pairing limits at admissible frequencies (5%)", ok,
           tm.seconds());
}

// 6: grid-based recovery of a variable anisotropic conductivity at one point.
void criterion_variable_reconstruction() {
    Timer tm;
    const Order s(0.5);
    auto eta = radial_eta();
    Eigen::Matrix2d amp;
    amp << 1.0, 0.3, 0.3, 0.5;
    auto field = bump_field(Eigen::Matrix2d::Identity(), 0.5 * amp, 0.5);
    Eigen::Matrix2d truth = Eigen::Matrix2d::Identity() + 0.5 * amp;

    ResolutionSpec rs;
    rs.points_per_wavelength = 16;
    rs.N_min = 4.0;
    rs.half_width = 0.785;
    rs.lateral = LateralBC::dirichlet_zero;
    std::vector<double> sched{16.0, 32.0, 64.0};
    WeightedGrid g = build_domain(field, sched.back(), rs);
    ExtensionOperator op(field, g);
    ReconstructionResult res =
        reconstruct_at(field, &op, s, {0.0, 0.0}, sched, PairingMode::dtn, eta, 1e-8);
    bool ok = true;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            ok = ok && std::fabs(res.tensor.matrix(a, b) - truth(a, b)) <=
                           0.05 * std::fabs(truth(a, b));
    report(6, "variable-coefficient recovery of gamma(0) within 5%", ok, tm.seconds());
}

// 7: ansatz interior residual decays at the advertised rate in N.
void criterion_ansatz_order() {
    Timer tm;
    bool ok = true;
    auto eta = box_eta();
    auto id = constant_field(Eigen::Matrix2d::Identity());
    for (double sv : {0.3, 0.5}) {
        for (double N : {16.0, 32.0}) {
            ProbeSpec sp;
            sp.N = N;
            sp.s = Order(sv);
            sp.eta = eta;
            sp.depth_k = 1;
            double rN = ansatz_residual(build_ansatz(sp, id), id);
            ProbeSpec sp2 = sp;
            sp2.N = 2.0 * N;
            double r2N = ansatz_residual(build_ansatz(sp2, id), id);
            ok = ok && r2N / rN <= std::exp2(2.0 * sv) * 1.2;
        }
    }
    report(7, "ansatz residual ratio r(2N)/r(N) <= 2^{2s} * 1.2 (k=1)", ok,
           tm.seconds());
}

// 8: Neumann probe data integrates to zero at admissible frequencies.
void criterion_mean_zero() {
    Timer tm;
    bool ok = true;
    auto eta = radial_eta();
    const double r = 1.0 / std::sqrt(2.0);
    for (Vec2 alpha : {Vec2{1.0, 0.0}, Vec2{r, r}}) {
        auto Ns = admissible_frequencies(*eta, alpha, 3, 8.0);
        ok = ok && Ns.size() == 3;
        for (double N : Ns) {
            TangentialGrid tg;
            tg.h = 2.0 * M_PI / (128.0 * N);
            double hw = 1.2 / std::sqrt(N);
            int m = 2 * int(std::ceil(hw / tg.h)) + 1;
            tg.dims = {m, m};
            ProbeSpec sp;
            sp.alpha = alpha;
            sp.N = N;
            sp.mode = ProbeMode::neumann;
            sp.eta = eta;
            BoundaryData b = neumann_data(sp, tg);
            ok = ok && std::abs(b.mean) <= 1e-10 * b.l1_norm();
        }
    }
    report(8, "mean-zero Neumann data at the first 3 admissible N", ok, tm.seconds());
}

// 9: metric recovery inverts its weighted-tensor map on random SPD inputs.
void criterion_metric_recovery() {
    Timer tm;
    bool ok = true;
    std::mt19937 rng(40409);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::Matrix2d g = random_spd(rng);
        for (double sv : {0.3, 0.5, 0.7}) {
            Order s(sv);
            Eigen::Matrix2d B =
                std::pow(g.determinant(), 1.0 / (2.0 * sv)) * g.inverse();
            Eigen::Matrix2d rec = recover_metric_from_weighted(B, s);
            ok = ok && (rec - g).cwiseAbs().maxCoeff() <= 1e-10;
        }
    }
    report(9, "metric recovery on 100 random SPD matrices to 1e-10", ok, tm.seconds());
}

// 10: polarization assembly reproduces quadratic forms exactly.
void criterion_polarization() {
    Timer tm;
    bool ok = true;
    std::mt19937 rng(7771);
    const double rr = 1.0 / std::sqrt(2.0);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::Matrix2d g = random_spd(rng);
        auto qf = [&g](double ax, double ay) {
            Eigen::Vector2d a(ax, ay);
            return double(a.transpose() * g * a);
        };
        std::map<std::string, double> q{
            {"e1", qf(1, 0)}, {"e2", qf(0, 1)}, {"e12", qf(rr, rr)}};
        RecoveredTensor t = assemble_tensor({0, 0}, q);
        ok = ok && (t.matrix - g).cwiseAbs().maxCoeff() <=
                       1e-13 * g.cwiseAbs().maxCoeff();
    }
    report(10, "polarization assembly exact on 100 random SPD matrices", ok,
           tm.seconds());
}

// 11: empirical stability ratio is nearly constant across perturbation sizes.
void criterion_stability() {
    Timer tm;
    const Order s(0.5);
    auto eta = radial_eta();
    auto base = constant_field(Eigen::Matrix2d::Identity());
    std::vector<ProbePoint> probes{{{0.0, 0.0}, {1.0, 0.0}},
                                   {{0.0, 0.0}, {0.0, 1.0}}};
    std::vector<double> ratios;
    bool ok = true;
    for (double delta : {0.05, 0.1, 0.2}) {
        auto pert = constant_field((1.0 + delta) * Eigen::Matrix2d::Identity());
        GapReport rep = stability_gap(base, pert, s, probes, {16.0, 32.0, 64.0}, eta);
        ok = ok && rep.gap_proxy > 0.0 && std::isfinite(rep.ratio);
        ratios.push_back(rep.ratio);
    }
    double lo = *std::min_element(ratios.begin(), ratios.end());
    double hi = *std::max_element(ratios.begin(), ratios.end());
    ok = ok && (hi - lo) / lo <= 0.25;
    report(11, "stability ratio varies <= 25% across delta in {.05,.1,.2}", ok,
           tm.seconds());
}

}  // namespace

int main() {
    criterion_identities();
    criterion_constants();
    criterion_forward_solver();
    criterion_dtn_limit();
    criterion_ntd_limit();
    criterion_variable_reconstruction();
    criterion_ansatz_order();
    criterion_mean_zero();
    criterion_metric_recovery();
    criterion_polarization();
    criterion_stability();
    std::printf("%d of 11 criteria passed\n", 11 - failures);
    return failures == 0 ? 0 : 1;
}
