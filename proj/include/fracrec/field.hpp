#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fracrec {

using Vec2 = std::array<double, 2>;

// Anisotropic conductivity data: x -> SPD matrix gamma(x) and scalar c(x) > 0.
struct ConductivityField {
    int n = 2;
    std::function<Eigen::Matrix2d(const Vec2&)> gamma;
    std::function<double(const Vec2&)> c;
    double C1 = 0.0, C2 = 0.0;          // ellipticity bounds for gamma
    double c_lower = 0.0, c_upper = 0.0; // bounds for c
    int smoothness = 4;                  // 2k
    std::string spec_text;               // canonical text spec (empty if programmatic)
    std::string hash;

    // Spot checks of the type invariants on a probe grid around x0.
    void validate(const Vec2& x0 = {0.0, 0.0}, double radius = 1.0) const {
        for (int i = -4; i <= 4; ++i)
            for (int j = -4; j <= 4; ++j) {
                Vec2 x{x0[0] + radius * i / 4.0, x0[1] + radius * j / 4.0};
                Eigen::Matrix2d g = gamma(x);
                if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                    throw std::runtime_error("ConductivityField: gamma not symmetric");
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g);
                double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
                if (lo < C1 - 1e-9 || hi > C2 + 1e-9)
                    throw std::runtime_error("ConductivityField: ellipticity bounds violated");
                double cv = c(x);
                if (cv < c_lower - 1e-12 || cv > c_upper + 1e-12 || cv <= 0.0)
                    throw std::runtime_error("ConductivityField: c out of bounds");
            }
    }
};

namespace detail {

inline std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

// C-infinity compact bump, = 1 at the center, support |x - center| < width.
inline double bump_profile(const Vec2& x, const Vec2& center, double width) {
    double dx = x[0] - center[0], dy = x[1] - center[1];
    double r2 = (dx * dx + dy * dy) / (width * width);
    if (r2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - r2));
}

inline Eigen::Matrix2d parse_matrix(const nlohmann::json& j) {
    Eigen::Matrix2d m;
    if (!j.is_array() || j.size() != 2 || !j[0].is_array() || j[0].size() != 2)
        throw std::invalid_argument("field spec: matrix must be 2x2 nested array");
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) m(a, b) = j[a][b].get<double>();
    return m;
}

inline void bounds_from_samples(ConductivityField& f) {
    double lo = 1e300, hi = -1e300, clo = 1e300, chi = -1e300;
    for (int i = -8; i <= 8; ++i)
        for (int j = -8; j <= 8; ++j) {
            Vec2 x{i / 4.0, j / 4.0};
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(f.gamma(x));
            lo = std::min(lo, es.eigenvalues().minCoeff());
            hi = std::max(hi, es.eigenvalues().maxCoeff());
            clo = std::min(clo, f.c(x));
            chi = std::max(chi, f.c(x));
        }
    f.C1 = lo;
    f.C2 = hi;
    f.c_lower = clo;
    f.c_upper = chi;
}

} // namespace detail

inline ConductivityField constant_field(const Eigen::Matrix2d& g0, double c0 = 1.0) {
    ConductivityField f;
    f.gamma = [g0](const Vec2&) { return g0; };
    f.c = [c0](const Vec2&) { return c0; };
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g0);
    f.C1 = es.eigenvalues().minCoeff();
    f.C2 = es.eigenvalues().maxCoeff();
    if (f.C1 <= 0.0) throw std::invalid_argument("constant_field: gamma not SPD");
    if (c0 <= 0.0) throw std::invalid_argument("constant_field: c must be positive");
    f.c_lower = f.c_upper = c0;
    std::ostringstream os;
    os << "constant:" << g0(0, 0) << "," << g0(0, 1) << "," << g0(1, 1) << ";c=" << c0;
    f.spec_text = os.str();
    f.hash = detail::fnv1a_hex(f.spec_text);
    return f;
}

// gamma(x) = base + bump(x) * amplitude, c analogous.
inline ConductivityField bump_field(const Eigen::Matrix2d& base, const Eigen::Matrix2d& amp,
                                    double width, const Vec2& center = {0.0, 0.0},
                                    double c_base = 1.0, double c_amp = 0.0) {
    if (width <= 0.0) throw std::invalid_argument("bump_field: width must be positive");
    ConductivityField f;
    f.gamma = [=](const Vec2& x) -> Eigen::Matrix2d {
        return base + detail::bump_profile(x, center, width) * amp;
    };
    f.c = [=](const Vec2& x) { return c_base + detail::bump_profile(x, center, width) * c_amp; };
    detail::bounds_from_samples(f);
    if (f.C1 <= 0.0) throw std::invalid_argument("bump_field: gamma loses ellipticity");
    if (f.c_lower <= 0.0) throw std::invalid_argument("bump_field: c loses positivity");
    std::ostringstream os;
    os << "bump:base=" << base(0, 0) << "," << base(0, 1) << "," << base(1, 1)
       << ";amp=" << amp(0, 0) << "," << amp(0, 1) << "," << amp(1, 1) << ";w=" << width
       << ";center=" << center[0] << "," << center[1] << ";c=" << c_base << "+" << c_amp;
    f.spec_text = os.str();
    f.hash = detail::fnv1a_hex(f.spec_text);
    return f;
}

// Structured text spec (JSON):
//   {"n": 2,
//    "gamma": {"family":"constant","matrix":[[..],[..]]}
//           | {"family":"bump","base":[[..],[..]],"amplitude":[[..],[..]],
//              "width":0.5,"center":[0,0]},
//    "c": {"family":"constant","value":1.0}
//       | {"family":"bump","base":1.0,"amplitude":0.2,"width":0.5,"center":[0,0]}}
inline ConductivityField load_field(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("field spec: invalid JSON: ") + e.what());
    }
    if (j.value("n", 2) != 2) throw std::invalid_argument("field spec: only n=2 supported");
    if (!j.contains("gamma")) throw std::invalid_argument("field spec: missing gamma");
    const auto& jg = j["gamma"];
    std::string fam = jg.value("family", "");

    double c_base = 1.0, c_amp = 0.0, c_width = 1.0;
    Vec2 c_center{0.0, 0.0};
    if (j.contains("c")) {
        const auto& jc = j["c"];
        std::string cf = jc.value("family", "constant");
        if (cf == "constant") {
            c_base = jc.value("value", 1.0);
        } else if (cf == "bump") {
            c_base = jc.value("base", 1.0);
            c_amp = jc.value("amplitude", 0.0);
            c_width = jc.value("width", 1.0);
            if (jc.contains("center"))
                c_center = {jc["center"][0].get<double>(), jc["center"][1].get<double>()};
        } else {
            throw std::invalid_argument("field spec: unknown c family '" + cf + "'");
        }
    }

    ConductivityField f;
    if (fam == "constant") {
        Eigen::Matrix2d g0 = detail::parse_matrix(jg.at("matrix"));
        f.gamma = [g0](const Vec2&) { return g0; };
    } else if (fam == "bump") {
        Eigen::Matrix2d base = detail::parse_matrix(jg.at("base"));
        Eigen::Matrix2d amp = detail::parse_matrix(jg.at("amplitude"));
        double width = jg.at("width").get<double>();
        Vec2 center{0.0, 0.0};
        if (jg.contains("center"))
            center = {jg["center"][0].get<double>(), jg["center"][1].get<double>()};
        if (width <= 0.0) throw std::invalid_argument("field spec: width must be positive");
        f.gamma = [=](const Vec2& x) -> Eigen::Matrix2d {
            return base + detail::bump_profile(x, center, width) * amp;
        };
    } else {
        throw std::invalid_argument("field spec: unknown gamma family '" + fam + "'");
    }
    f.c = [=](const Vec2& x) {
        return c_base + (c_amp != 0.0 ? detail::bump_profile(x, c_center, c_width) * c_amp : 0.0);
    };
    detail::bounds_from_samples(f);
    if (f.C1 <= 0.0) throw std::invalid_argument("field spec: gamma not uniformly SPD");
    if (f.c_lower <= 0.0) throw std::invalid_argument("field spec: c not uniformly positive");
    f.spec_text = j.dump();
    f.hash = detail::fnv1a_hex(f.spec_text);
    return f;
}

} // namespace fracrec
