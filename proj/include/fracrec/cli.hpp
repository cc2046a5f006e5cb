#pragma once

// Batch driver: parse experiment configs, run validations / probes /
// reconstructions, and emit deterministic CSV / JSON / SVG artifacts.
//
// Config format: a single JSON document with nested sections.  Parsing is
// strict: unknown keys anywhere in the document are rejected with the key
// path in the diagnostic.  All artifacts are byte-stable for a fixed config
// and seed: object keys are sorted and every floating-point value is routed
// through a fixed 12-significant-digit formatter before serialization.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracrec/reconstruct.hpp"

namespace fracrec {
namespace cli {

using nlohmann::json;

// Configuration problems (bad file, unknown key, out-of-range value): exit 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A validation task ran to completion but a check exceeded tolerance: exit 4.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Deterministic formatting
// ---------------------------------------------------------------------------

inline std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

// Round a double through the 12-significant-digit formatter so that every
// number placed in a JSON report serializes identically across runs.
inline json jnum(double v) {
    return json::parse(fmt12(v));
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    out += "\r\n";
    return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cli: cannot open output file " + p.string());
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!os) throw std::runtime_error("cli: write failed for " + p.string());
}

// ---------------------------------------------------------------------------
// Strict config parsing
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!j.is_object())
        throw ConfigError("config: section '" + where + "' must be an object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            std::string list;
            for (const auto& k : allowed) list += (list.empty() ? "" : ", ") + k;
            throw ConfigError("config: unknown key '" + item.key() + "' in '" + where +
                              "' (allowed: " + list + ")");
        }
    }
}

inline double get_num(const json& j, const std::string& where) {
    if (!j.is_number())
        throw ConfigError("config: '" + where + "' must be a number");
    return j.get<double>();
}

inline Vec2 get_vec2(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError("config: '" + where + "' must be an array of two numbers");
    return {get_num(j[0], where + "[0]"), get_num(j[1], where + "[1]")};
}

inline void check_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_array() || j[0].size() != 2 ||
        !j[1].is_array() || j[1].size() != 2)
        throw ConfigError("config: '" + where + "' must be a 2x2 nested array");
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            get_num(j[a][b], where);
}

// The field spec is handed to load_field verbatim; here we only enforce the
// strict-key contract, which load_field (tolerant by design) does not.
inline void check_field_spec(const json& j, const std::string& where) {
    check_keys(j, where, {"n", "gamma", "c"});
    if (!j.contains("gamma"))
        throw ConfigError("config: '" + where + "' must contain 'gamma'");
    const json& jg = j["gamma"];
    std::string fam = jg.is_object() ? jg.value("family", "") : "";
    if (fam == "constant") {
        check_keys(jg, where + ".gamma", {"family", "matrix"});
        if (!jg.contains("matrix"))
            throw ConfigError("config: '" + where + ".gamma' missing 'matrix'");
        check_matrix(jg["matrix"], where + ".gamma.matrix");
    } else if (fam == "bump") {
        check_keys(jg, where + ".gamma",
                   {"family", "base", "amplitude", "width", "center"});
        for (const char* k : {"base", "amplitude", "width"})
            if (!jg.contains(k))
                throw ConfigError("config: '" + where + ".gamma' missing '" +
                                  std::string(k) + "'");
        check_matrix(jg["base"], where + ".gamma.base");
        check_matrix(jg["amplitude"], where + ".gamma.amplitude");
    } else {
        throw ConfigError("config: '" + where +
                          ".gamma.family' must be 'constant' or 'bump'");
    }
    if (j.contains("c")) {
        const json& jc = j["c"];
        std::string cf = jc.is_object() ? jc.value("family", "constant") : "?";
        if (cf == "constant")
            check_keys(jc, where + ".c", {"family", "value"});
        else if (cf == "bump")
            check_keys(jc, where + ".c", {"family", "base", "amplitude", "width", "center"});
        else
            throw ConfigError("config: '" + where +
                              ".c.family' must be 'constant' or 'bump'");
    }
}

} // namespace detail

struct RunConfig {
    std::string task;
    double s_value = 0.5;
    int n = 2;
    unsigned long seed = 0;

    json field_spec;   // strict-checked, forwarded to load_field
    json field2_spec;  // second field for the stability task
    bool has_field2 = false;

    CutoffKind cutoff_kind = CutoffKind::radial_bump;
    double cutoff_epsilon = 0.1;
    int cutoff_samples = 161;

    ResolutionSpec grid;

    Vec2 x0{0.0, 0.0};
    Vec2 alpha{1.0, 0.0};
    PairingMode mode = PairingMode::dtn;
    std::string backend = "fast";  // "fast" | "grid"
    double rel_tol = 1e-8;
    double probe_N = 0.0;  // solve task frequency; 0 => schedule maximum

    std::vector<double> schedule{16.0, 32.0, 64.0};
    std::vector<ProbePoint> probes;
    bool probes_given = false;

    std::string out_dir = "out";
    bool svg = false;

    json raw;  // canonical parsed document (for round-tripping)

    Order order() const { return Order(s_value); }
};

inline const std::set<std::string>& known_tasks() {
    static const std::set<std::string> t{"constants", "validate",    "solve",
                                         "probe",     "reconstruct", "stability"};
    return t;
}

inline RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    detail::check_keys(j, "<root>",
                       {"task", "s", "n", "seed", "field", "field2", "cutoff", "grid",
                        "probe", "schedule", "probes", "output"});

    RunConfig c;
    c.raw = j;

    if (!j.contains("task") || !j["task"].is_string())
        throw ConfigError("config: 'task' (string) is required");
    c.task = j["task"].get<std::string>();
    if (!known_tasks().count(c.task))
        throw ConfigError("config: unknown task '" + c.task + "'");

    if (!j.contains("s")) throw ConfigError("config: 's' is required");
    c.s_value = detail::get_num(j["s"], "s");
    if (!(c.s_value > 0.0 && c.s_value < 1.0))
        throw ConfigError("config: 's' must lie in (0, 1)");

    if (j.contains("n")) {
        if (!j["n"].is_number_integer() || j["n"].get<int>() != 2)
            throw ConfigError("config: 'n' must be 2 (only the planar boundary is supported)");
        c.n = 2;
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned())
            throw ConfigError("config: 'seed' must be a non-negative integer");
        c.seed = j["seed"].get<unsigned long>();
    }

    if (j.contains("field")) detail::check_field_spec(j["field"], "field");
    c.field_spec = j.value("field", json::object());
    if (j.contains("field2")) {
        detail::check_field_spec(j["field2"], "field2");
        c.field2_spec = j["field2"];
        c.has_field2 = true;
    }

    if (j.contains("cutoff")) {
        const json& jc = j["cutoff"];
        detail::check_keys(jc, "cutoff", {"kind", "epsilon", "samples_per_axis"});
        std::string kind = jc.value("kind", "radial_bump");
        if (kind == "radial_bump") c.cutoff_kind = CutoffKind::radial_bump;
        else if (kind == "mollified_box") c.cutoff_kind = CutoffKind::mollified_box;
        else throw ConfigError("config: 'cutoff.kind' must be 'radial_bump' or 'mollified_box'");
        if (jc.contains("epsilon"))
            c.cutoff_epsilon = detail::get_num(jc["epsilon"], "cutoff.epsilon");
        if (!(c.cutoff_epsilon > 0.0 && c.cutoff_epsilon < 0.25))
            throw ConfigError("config: 'cutoff.epsilon' must lie in (0, 1/4)");
        if (jc.contains("samples_per_axis")) {
            if (!jc["samples_per_axis"].is_number_integer())
                throw ConfigError("config: 'cutoff.samples_per_axis' must be an integer");
            c.cutoff_samples = jc["samples_per_axis"].get<int>();
            if (c.cutoff_samples < 33)
                throw ConfigError("config: 'cutoff.samples_per_axis' must be >= 33");
        }
    }

    c.grid.s = Order(c.s_value);
    if (j.contains("grid")) {
        const json& jg = j["grid"];
        detail::check_keys(jg, "grid",
                           {"points_per_wavelength", "normal_nodes", "grading", "N_min",
                            "half_width", "L_z", "lateral"});
        if (jg.contains("points_per_wavelength"))
            c.grid.points_per_wavelength =
                detail::get_num(jg["points_per_wavelength"], "grid.points_per_wavelength");
        if (jg.contains("normal_nodes")) {
            if (!jg["normal_nodes"].is_number_integer())
                throw ConfigError("config: 'grid.normal_nodes' must be an integer");
            c.grid.normal_nodes = jg["normal_nodes"].get<int>();
        }
        if (jg.contains("grading"))
            c.grid.grading = detail::get_num(jg["grading"], "grid.grading");
        if (jg.contains("N_min")) c.grid.N_min = detail::get_num(jg["N_min"], "grid.N_min");
        if (jg.contains("half_width"))
            c.grid.half_width = detail::get_num(jg["half_width"], "grid.half_width");
        if (jg.contains("L_z")) c.grid.L_z = detail::get_num(jg["L_z"], "grid.L_z");
        if (jg.contains("lateral")) {
            std::string lat = jg["lateral"].get<std::string>();
            if (lat == "periodic") c.grid.lateral = LateralBC::periodic;
            else if (lat == "dirichlet") c.grid.lateral = LateralBC::dirichlet_zero;
            else throw ConfigError("config: 'grid.lateral' must be 'periodic' or 'dirichlet'");
        }
    }

    if (j.contains("probe")) {
        const json& jp = j["probe"];
        detail::check_keys(jp, "probe", {"x0", "alpha", "mode", "backend", "N", "rel_tol"});
        if (jp.contains("x0")) c.x0 = detail::get_vec2(jp["x0"], "probe.x0");
        if (jp.contains("alpha")) {
            c.alpha = detail::get_vec2(jp["alpha"], "probe.alpha");
            double na = std::hypot(c.alpha[0], c.alpha[1]);
            if (!(na > 0.0))
                throw ConfigError("config: 'probe.alpha' must be nonzero");
            c.alpha = {c.alpha[0] / na, c.alpha[1] / na};
        }
        if (jp.contains("mode")) {
            std::string m = jp["mode"].get<std::string>();
            if (m == "dtn") c.mode = PairingMode::dtn;
            else if (m == "ntd") c.mode = PairingMode::ntd;
            else throw ConfigError("config: 'probe.mode' must be 'dtn' or 'ntd'");
        }
        if (jp.contains("backend")) {
            c.backend = jp["backend"].get<std::string>();
            if (c.backend != "fast" && c.backend != "grid")
                throw ConfigError("config: 'probe.backend' must be 'fast' or 'grid'");
        }
        if (jp.contains("N")) {
            c.probe_N = detail::get_num(jp["N"], "probe.N");
            if (!(c.probe_N > 0.0)) throw ConfigError("config: 'probe.N' must be positive");
        }
        if (jp.contains("rel_tol")) {
            c.rel_tol = detail::get_num(jp["rel_tol"], "probe.rel_tol");
            if (!(c.rel_tol > 0.0 && c.rel_tol < 1.0))
                throw ConfigError("config: 'probe.rel_tol' must lie in (0, 1)");
        }
    }

    if (j.contains("schedule")) {
        if (!j["schedule"].is_array())
            throw ConfigError("config: 'schedule' must be an array of numbers");
        c.schedule.clear();
        for (std::size_t i = 0; i < j["schedule"].size(); ++i)
            c.schedule.push_back(
                detail::get_num(j["schedule"][i], "schedule[" + std::to_string(i) + "]"));
        double prev = 0.0;
        for (double v : c.schedule) {
            if (!(v > prev))
                throw ConfigError(
                    "config: 'schedule' must be strictly increasing and positive");
            prev = v;
        }
    }

    if (j.contains("probes")) {
        if (!j["probes"].is_array())
            throw ConfigError("config: 'probes' must be an array");
        c.probes_given = true;
        for (std::size_t i = 0; i < j["probes"].size(); ++i) {
            const json& jp = j["probes"][i];
            std::string where = "probes[" + std::to_string(i) + "]";
            detail::check_keys(jp, where, {"x0", "alpha"});
            ProbePoint p;
            if (jp.contains("x0")) p.x0 = detail::get_vec2(jp["x0"], where + ".x0");
            if (jp.contains("alpha")) {
                p.alpha = detail::get_vec2(jp["alpha"], where + ".alpha");
                double na = std::hypot(p.alpha[0], p.alpha[1]);
                if (!(na > 0.0))
                    throw ConfigError("config: '" + where + ".alpha' must be nonzero");
                p.alpha = {p.alpha[0] / na, p.alpha[1] / na};
            }
            c.probes.push_back(p);
        }
    }

    if (j.contains("output")) {
        const json& jo = j["output"];
        detail::check_keys(jo, "output", {"dir", "svg"});
        if (jo.contains("dir")) {
            if (!jo["dir"].is_string())
                throw ConfigError("config: 'output.dir' must be a string");
            c.out_dir = jo["dir"].get<std::string>();
        }
        if (jo.contains("svg")) {
            if (!jo["svg"].is_boolean())
                throw ConfigError("config: 'output.svg' must be a boolean");
            c.svg = jo["svg"].get<bool>();
        }
    }

    // task-specific requirements
    if (c.task != "constants" && c.task != "validate" && !j.contains("field"))
        throw ConfigError("config: task '" + c.task + "' requires a 'field' section");
    if (c.task == "stability" && !c.has_field2)
        throw ConfigError("config: task 'stability' requires a 'field2' section");
    if (c.task == "stability" && !c.probes_given)
        throw ConfigError("config: task 'stability' requires a 'probes' array");

    return c;
}

// Canonical serialization: sorted keys, 2-space indent, trailing newline.
// parse_config(serialize_config(parse_config(text))) reproduces the document.
inline std::string serialize_config(const RunConfig& c) {
    return c.raw.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// SVG convergence plot: scaled pairing against N^{-1/2}, with the fitted
// extrapolation curve, an intercept marker at the fitted limit, and (for
// constant-coefficient fields) a horizontal overlay at the predicted constant.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
}

} // namespace detail

inline std::string svg_convergence(const PairingSeries& ps, bool has_target,
                                   double target) {
    const double W = 640.0, H = 480.0, ml = 72.0, mr = 24.0, mt = 24.0, mb = 56.0;
    double xmax = 0.0, ymin = ps.fit.limit, ymax = ps.fit.limit;
    for (std::size_t i = 0; i < ps.schedule.size(); ++i) {
        xmax = std::max(xmax, 1.0 / std::sqrt(ps.schedule[i]));
        ymin = std::min(ymin, ps.scaled[i]);
        ymax = std::max(ymax, ps.scaled[i]);
    }
    if (has_target) {
        ymin = std::min(ymin, target);
        ymax = std::max(ymax, target);
    }
    if (xmax <= 0.0) xmax = 1.0;
    double pad = 0.08 * std::max(ymax - ymin, 1e-12 * std::max(std::fabs(ymax), 1.0));
    ymin -= pad;
    ymax += pad;
    xmax *= 1.05;
    auto X = [&](double x) { return ml + (W - ml - mr) * (x / xmax); };
    auto Y = [&](double y) { return H - mb - (H - mt - mb) * ((y - ymin) / (ymax - ymin)); };

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" "
         "height=\"480\" viewBox=\"0 0 640 480\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
    // axes
    s += "<line x1=\"" + detail::svg_num(ml) + "\" y1=\"" + detail::svg_num(H - mb) +
         "\" x2=\"" + detail::svg_num(W - mr) + "\" y2=\"" + detail::svg_num(H - mb) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    s += "<line x1=\"" + detail::svg_num(ml) + "\" y1=\"" + detail::svg_num(mt) +
         "\" x2=\"" + detail::svg_num(ml) + "\" y2=\"" + detail::svg_num(H - mb) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    s += "<text x=\"" + detail::svg_num((ml + W - mr) / 2.0) + "\" y=\"" +
         detail::svg_num(H - 16.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
         "N^(-1/2)</text>\n";
    s += "<text x=\"18\" y=\"" + detail::svg_num((mt + H - mb) / 2.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
         "transform=\"rotate(-90 18 " +
         detail::svg_num((mt + H - mb) / 2.0) + ")\">scaled pairing</text>\n";
    // axis range labels carry full precision for machine checking
    s += "<text x=\"" + detail::svg_num(ml) + "\" y=\"" + detail::svg_num(H - 40.0) +
         "\" font-family=\"sans-serif\" font-size=\"10\">x: 0 to " + fmt12(xmax) +
         "</text>\n";
    s += "<text x=\"" + detail::svg_num(ml) + "\" y=\"" + detail::svg_num(H - 28.0) +
         "\" font-family=\"sans-serif\" font-size=\"10\">y: " + fmt12(ymin) + " to " +
         fmt12(ymax) + "</text>\n";

    if (has_target) {
        s += "<line class=\"target\" x1=\"" + detail::svg_num(ml) + "\" y1=\"" +
             detail::svg_num(Y(target)) + "\" x2=\"" + detail::svg_num(W - mr) +
             "\" y2=\"" + detail::svg_num(Y(target)) +
             "\" stroke=\"green\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n";
        s += "<text x=\"" + detail::svg_num(W - mr) + "\" y=\"" +
             detail::svg_num(Y(target) - 4.0) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" "
             "fill=\"green\">target " +
             fmt12(target) + "</text>\n";
    }

    // fitted curve limit + slope*x + curvature*x^2 sampled over the x-range
    s += "<path class=\"fit\" d=\"";
    const int K = 64;
    for (int k = 0; k <= K; ++k) {
        double x = xmax * k / K;
        double y = ps.fit.limit + ps.fit.slope * x + ps.fit.curvature * x * x;
        s += (k == 0 ? "M" : " L") + detail::svg_num(X(x)) + " " + detail::svg_num(Y(y));
    }
    s += "\" fill=\"none\" stroke=\"blue\" stroke-width=\"1.5\"/>\n";

    for (std::size_t i = 0; i < ps.schedule.size(); ++i) {
        double x = 1.0 / std::sqrt(ps.schedule[i]);
        s += "<circle class=\"data\" cx=\"" + detail::svg_num(X(x)) + "\" cy=\"" +
             detail::svg_num(Y(ps.scaled[i])) + "\" r=\"4\" fill=\"black\"/>\n";
    }

    // intercept marker at the extrapolated limit (x = 0)
    s += "<circle class=\"intercept\" cx=\"" + detail::svg_num(X(0.0)) + "\" cy=\"" +
         detail::svg_num(Y(ps.fit.limit)) +
         "\" r=\"5\" fill=\"none\" stroke=\"red\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + detail::svg_num(ml + 8.0) + "\" y=\"" + detail::svg_num(mt + 14.0) +
         "\" font-family=\"sans-serif\" font-size=\"11\">limit " + fmt12(ps.fit.limit) +
         "</text>\n";
    s += "</svg>\n";
    return s;
}

// ---------------------------------------------------------------------------
// Task implementations
// ---------------------------------------------------------------------------

namespace detail {

inline json series_json(const PairingSeries& ps) {
    json j;
    j["mode"] = ps.mode == PairingMode::dtn ? "dtn" : "ntd";
    j["x0"] = json::array({jnum(ps.x0[0]), jnum(ps.x0[1])});
    j["alpha"] = json::array({jnum(ps.alpha[0]), jnum(ps.alpha[1])});
    j["schedule"] = json::array();
    j["raw"] = json::array();
    j["scaled"] = json::array();
    for (std::size_t i = 0; i < ps.schedule.size(); ++i) {
        j["schedule"].push_back(jnum(ps.schedule[i]));
        j["raw"].push_back(jnum(ps.raw[i]));
        j["scaled"].push_back(jnum(ps.scaled[i]));
    }
    j["fit"] = {{"curvature", jnum(ps.fit.curvature)},
                {"limit", jnum(ps.fit.limit)},
                {"residual", jnum(ps.fit.residual)},
                {"slope", jnum(ps.fit.slope)}};
    j["warning"] = ps.warning;
    return j;
}

inline std::string series_csv(const PairingSeries& ps, const std::string& label) {
    std::string out = csv_row({"direction", "N", "raw", "scaled", "fit"});
    for (std::size_t i = 0; i < ps.schedule.size(); ++i) {
        double x = 1.0 / std::sqrt(ps.schedule[i]);
        double fit = ps.fit.limit + ps.fit.slope * x + ps.fit.curvature * x * x;
        out += csv_row({label, fmt12(ps.schedule[i]), fmt12(ps.raw[i]),
                        fmt12(ps.scaled[i]), fmt12(fit)});
    }
    return out;
}

inline bool constant_field_spec(const json& fs) {
    if (!fs.contains("gamma") || fs["gamma"].value("family", "") != "constant")
        return false;
    if (fs.contains("c") && fs["c"].value("family", "constant") != "constant")
        return false;
    return true;
}

// Predicted pairing limit for a constant-coefficient field (target overlay).
inline double constant_target(const json& fs, Order s, const Vec2& alpha,
                              PairingMode mode) {
    Eigen::Matrix2d g0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) g0(a, b) = fs["gamma"]["matrix"][a][b].get<double>();
    double c0 = fs.contains("c") ? fs["c"].value("value", 1.0) : 1.0;
    Eigen::Vector2d al(alpha[0], alpha[1]);
    double cbar2 = std::pow(c0, 1.0 / s.value()) * al.dot(g0 * al);
    const PaperConstants pc = paper_constants(s);
    if (mode == PairingMode::dtn) return pc.c_sum * std::pow(cbar2, s.value());
    return pc.c_sum / (pc.c_hat_s * pc.c_hat_s * std::pow(cbar2, s.value()));
}

inline std::shared_ptr<CutoffProfile> make_eta(const RunConfig& c) {
    return std::make_shared<CutoffProfile>(
        make_cutoff(c.cutoff_kind, c.cutoff_epsilon, c.cutoff_samples));
}

inline TangentialGrid boundary_layer(const WeightedGrid& g) {
    TangentialGrid tg;
    tg.h = g.hx;
    tg.dims = {g.nx[0], g.n == 2 ? g.nx[1] : 1};
    tg.center = {g.x_lo[0] + 0.5 * g.hx * (g.nx[0] - 1),
                 g.n == 2 ? g.x_lo[1] + 0.5 * g.hx * (g.nx[1] - 1) : 0.0};
    return tg;
}

inline int task_constants(const RunConfig& c, const std::filesystem::path& out) {
    const Order s = c.order();
    const PaperConstants pc = paper_constants(s);
    const double closed = M_PI / (2.0 * std::sin(M_PI * s.value()));
    std::map<std::string, double> rows{
        {"c1", pc.c1},
        {"c2", pc.c2},
        {"c_bar_s", pc.c_bar_s},
        {"c_hat_s", pc.c_hat_s},
        {"c_s", pc.c_s},
        {"c_sum", pc.c_sum},
        {"c_sum_closed_form", closed},
        {"quad_error", pc.quad_error},
        {"s", s.value()},
    };
    std::string csv = csv_row({"name", "value"});
    json j;
    for (const auto& [k, v] : rows) {
        csv += csv_row({k, fmt12(v)});
        j[k] = jnum(v);
    }
    write_file(out / "constants.csv", csv);
    write_file(out / "constants.json", j.dump(2) + "\n");
    return 0;
}

inline int task_validate(const RunConfig& c, const std::filesystem::path& out) {
    const Order s = c.order();
    json j;
    bool ok = true;
    auto record = [&](const std::string& name, double value, double tol) {
        bool pass = value <= tol;
        ok = ok && pass;
        j[name] = {{"pass", pass}, {"tolerance", jnum(tol)}, {"value", jnum(value)}};
    };

    // special-function identities over a logarithmic argument grid
    std::vector<double> ts;
    for (int i = 0; i < 120; ++i)
        ts.push_back(1e-6 * std::pow(4e7, i / 119.0));  // 1e-6 .. 40
    IdentityReport rep = check_bessel_identities(s, ts);
    record("bessel_wronskian", rep.max_wronskian, 1e-8);
    record("bessel_recurrence", rep.max_recurrence, 1e-8);
    record("bessel_weighted_derivative", rep.max_weighted_der, 1e-6);

    // normalization constant against its closed form
    const PaperConstants pc = paper_constants(s);
    const double closed = M_PI / (2.0 * std::sin(M_PI * s.value()));
    record("constants_closed_form", std::fabs(pc.c_sum - closed) / closed, 1e-8);

    // forward solver against the separable single-mode reference
    auto id = constant_field(Eigen::Matrix2d::Identity());
    ResolutionSpec rs;
    rs.s = s;
    rs.N_min = 1.0;
    rs.half_width = M_PI;
    rs.lateral = LateralBC::periodic;
    rs.L_z = 8.0;
    WeightedGrid g = build_domain(id, 16.0, rs);
    ExtensionOperator op(id, g);
    std::vector<cplx> phi(g.ntang());
    for (int jy = 0; jy < g.nx[1]; ++jy)
        for (int ix = 0; ix < g.nx[0]; ++ix) {
            auto p = g.point(ix, jy);
            phi[g.tindex(ix, jy)] = std::exp(cplx(0.0, p[0]));
        }
    ExtensionSolution sol = solve_dirichlet(op, s, phi);
    ReferenceSolution ref = fourier_reference(s, {1.0, 0.0}, Eigen::Matrix2d::Identity(), 1.0);
    double num = 0.0, den = 0.0;
    for (int jy = 0; jy < g.nx[1]; ++jy)
        for (int ix = 0; ix < g.nx[0]; ++ix) {
            auto p = g.point(ix, jy);
            for (int k = 0; k < g.mz(); ++k) {
                cplx ex = ref.value({p[0], p[1]}, g.z[k]);
                cplx got = sol.u[g.tindex(ix, jy) * g.mz() + k];
                num += std::norm(got - ex);
                den += std::norm(ex);
            }
        }
    const double area = 4.0 * M_PI * M_PI;
    const double exact_pairing = ref.energy_per_area() * area;
    record("solver_l2_error", std::sqrt(num / den), 1e-3);
    record("solver_pairing_error",
           std::fabs(sol.energy - exact_pairing) / exact_pairing, 1e-2);

    j["all_pass"] = ok;
    std::string csv = csv_row({"check", "value", "tolerance", "pass"});
    for (const auto& item : j.items()) {
        if (!item.value().is_object()) continue;
        csv += csv_row({item.key(), fmt12(item.value()["value"].get<double>()),
                        fmt12(item.value()["tolerance"].get<double>()),
                        item.value()["pass"].get<bool>() ? "true" : "false"});
    }
    write_file(out / "validate.csv", csv);
    write_file(out / "validate.json", j.dump(2) + "\n");
    if (!ok) throw ValidationError("validate: at least one check exceeded tolerance");
    return 0;
}

inline int task_solve(const RunConfig& c, const std::filesystem::path& out) {
    const Order s = c.order();
    ConductivityField field = load_field(c.field_spec.dump());
    auto eta = make_eta(c);
    double N = c.probe_N > 0.0 ? c.probe_N : c.schedule.back();

    WeightedGrid g = build_domain(field, N, c.grid);
    ExtensionOperator op(field, g);
    TangentialGrid tg = boundary_layer(g);

    ProbeSpec sp;
    sp.x0 = c.x0;
    sp.alpha = c.alpha;
    sp.N = N;
    sp.s = s;
    sp.eta = eta;
    sp.mode = c.mode == PairingMode::dtn ? ProbeMode::dirichlet : ProbeMode::neumann;

    ExtensionSolution sol;
    double pairing = 0.0, pairing_imag = 0.0;
    if (c.mode == PairingMode::dtn) {
        BoundaryData bd = dirichlet_data(sp, tg);
        sol = solve_dirichlet(op, s, sample_boundary(g, bd), c.rel_tol);
        pairing = sol.energy;
    } else {
        BoundaryData bd = neumann_data(sp, tg);
        std::vector<cplx> f = sample_boundary(g, bd);
        sol = solve_neumann(op, s, f, c.rel_tol);
        std::vector<cplx> Mf;
        op.boundary_mass(f, Mf);
        cplx acc(0.0);
        for (std::size_t t = 0; t < g.ntang(); ++t)
            acc += Mf[t] * std::conj(sol.u[t * g.mz()]);
        pairing = std::real(acc);
        pairing_imag = std::imag(acc);
    }

    json j;
    j["N"] = jnum(N);
    j["energy"] = jnum(sol.energy);
    j["grid"] = {{"hx", jnum(g.hx)},
                 {"mz", g.mz()},
                 {"nodes", static_cast<std::uint64_t>(g.nodes())},
                 {"nx", json::array({g.nx[0], g.nx[1]})},
                 {"z_max", jnum(g.z.back())}};
    j["iterations"] = sol.diag.iterations;
    j["mode"] = c.mode == PairingMode::dtn ? "dtn" : "ntd";
    j["pairing"] = jnum(pairing);
    j["pairing_imag"] = jnum(pairing_imag);
    j["relative_residual"] = jnum(sol.diag.relative_residual);
    write_file(out / "solve.json", j.dump(2) + "\n");
    std::string csv = csv_row({"N", "mode", "pairing", "energy", "iterations",
                               "relative_residual"});
    csv += csv_row({fmt12(N), c.mode == PairingMode::dtn ? "dtn" : "ntd", fmt12(pairing),
                    fmt12(sol.energy), std::to_string(sol.diag.iterations),
                    fmt12(sol.diag.relative_residual)});
    write_file(out / "solve.csv", csv);
    return 0;
}

inline int task_probe(const RunConfig& c, const std::filesystem::path& out) {
    const Order s = c.order();
    ConductivityField field = load_field(c.field_spec.dump());
    auto eta = make_eta(c);

    std::vector<double> sched = c.schedule;
    if (c.mode == PairingMode::ntd) sched = admissible_schedule(*eta, c.alpha, sched);

    PairingSeries ps;
    if (c.backend == "fast") {
        ps = probe_direction_fast(field, s, c.x0, c.alpha, sched, c.mode, eta);
    } else {
        WeightedGrid g = build_domain(field, sched.back(), c.grid);
        ExtensionOperator op(field, g);
        ps = probe_direction(field, op, s, c.x0, c.alpha, sched, c.mode, eta, c.rel_tol);
    }

    json j = series_json(ps);
    bool has_target = constant_field_spec(c.field_spec);
    double target = 0.0;
    if (has_target) {
        target = constant_target(c.field_spec, s, c.alpha, c.mode);
        j["target"] = jnum(target);
    }
    write_file(out / "probe.json", j.dump(2) + "\n");
    write_file(out / "probe.csv", series_csv(ps, "probe"));
    if (c.svg) write_file(out / "probe.svg", svg_convergence(ps, has_target, target));
    return 0;
}

inline int task_reconstruct(const RunConfig& c, const std::filesystem::path& out) {
    const Order s = c.order();
    ConductivityField field = load_field(c.field_spec.dump());
    auto eta = make_eta(c);

    ReconstructionResult res;
    if (c.backend == "fast") {
        res = reconstruct_at(field, nullptr, s, c.x0, c.schedule, c.mode, eta, c.rel_tol);
    } else {
        WeightedGrid g = build_domain(field, c.schedule.back(), c.grid);
        ExtensionOperator op(field, g);
        res = reconstruct_at(field, &op, s, c.x0, c.schedule, c.mode, eta, c.rel_tol);
    }

    const RecoveredTensor& t = res.tensor;
    json j;
    j["matrix"] = json::array({json::array({jnum(t.matrix(0, 0)), jnum(t.matrix(0, 1))}),
                               json::array({jnum(t.matrix(1, 0)), jnum(t.matrix(1, 1))})});
    j["min_eigenvalue"] = jnum(t.min_eigenvalue);
    j["mode"] = c.mode == PairingMode::dtn ? "dtn" : "ntd";
    j["q_values"] = json::object();
    for (const auto& [k, v] : t.q_values) j["q_values"][k] = jnum(v);
    j["fit_residuals"] = json::object();
    for (const auto& [k, v] : t.fit_residuals) j["fit_residuals"][k] = jnum(v);
    j["series"] = json::object();
    for (const auto& [k, ps] : res.series) j["series"][k] = series_json(ps);
    j["warning"] = t.warning;
    j["x0"] = json::array({jnum(t.x0[0]), jnum(t.x0[1])});
    write_file(out / "reconstruct.json", j.dump(2) + "\n");

    std::string csv = csv_row({"direction", "N", "raw", "scaled", "fit"});
    for (const auto& [k, ps] : res.series) {
        std::string rows = series_csv(ps, k);
        csv += rows.substr(rows.find("\r\n") + 2);  // drop the repeated header
    }
    write_file(out / "reconstruct.csv", csv);
    return 0;
}

inline int task_stability(const RunConfig& c, const std::filesystem::path& out) {
    const Order s = c.order();
    std::string head = csv_row(
        {"x0_1", "x0_2", "alpha_1", "alpha_2", "N", "scaled1", "scaled2"});
    if (c.probes.empty()) {
        // empty probe set: valid empty-table artifacts
        json j;
        j["entries"] = json::array();
        j["exact_equality"] = false;
        j["field_diff"] = jnum(0.0);
        j["gap_proxy"] = jnum(0.0);
        j["ratio"] = jnum(0.0);
        write_file(out / "stability.json", j.dump(2) + "\n");
        write_file(out / "stability.csv", head);
        return 0;
    }
    ConductivityField f1 = load_field(c.field_spec.dump());
    ConductivityField f2 = load_field(c.field2_spec.dump());
    auto eta = make_eta(c);
    GapReport rep = stability_gap(f1, f2, s, c.probes, c.schedule, eta);

    json j;
    j["entries"] = json::array();
    std::string csv = head;
    for (const auto& e : rep.entries) {
        j["entries"].push_back({{"N", jnum(e.N)},
                                {"alpha", json::array({jnum(e.alpha[0]), jnum(e.alpha[1])})},
                                {"scaled1", jnum(e.scaled1)},
                                {"scaled2", jnum(e.scaled2)},
                                {"x0", json::array({jnum(e.x0[0]), jnum(e.x0[1])})}});
        csv += csv_row({fmt12(e.x0[0]), fmt12(e.x0[1]), fmt12(e.alpha[0]),
                        fmt12(e.alpha[1]), fmt12(e.N), fmt12(e.scaled1),
                        fmt12(e.scaled2)});
    }
    j["exact_equality"] = rep.exact_equality;
    j["field_diff"] = jnum(rep.field_diff);
    j["gap_proxy"] = jnum(rep.gap_proxy);
    j["ratio"] = jnum(rep.ratio);
    write_file(out / "stability.json", j.dump(2) + "\n");
    write_file(out / "stability.csv", csv);
    return 0;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

// Runs one parsed config. Artifacts land in the output directory; exceptions
// carry failures upward (ConfigError -> 2, ValidationError -> 4, others -> 3).
inline int run(const RunConfig& cfg) {
    std::filesystem::path out(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec && !std::filesystem::is_directory(out))
        throw std::runtime_error("cli: cannot create output directory " + out.string());

    if (cfg.task == "constants") return detail::task_constants(cfg, out);
    if (cfg.task == "validate") return detail::task_validate(cfg, out);
    if (cfg.task == "solve") return detail::task_solve(cfg, out);
    if (cfg.task == "probe") return detail::task_probe(cfg, out);
    if (cfg.task == "reconstruct") return detail::task_reconstruct(cfg, out);
    if (cfg.task == "stability") return detail::task_stability(cfg, out);
    throw ConfigError("config: unknown task '" + cfg.task + "'");
}

// Full command-line entry point:
//   <binary> <config-path> [--task X] [--out DIR] [--threads K]
// The FRACREC_THREADS environment variable overrides the default thread
// count; --threads overrides both.  Execution is currently serial (the
// numerical kernels are single-threaded), so the value is validated and the
// worker pool is clamped to it without further effect.
inline int run_cli(int argc, const char* const* argv) {
    std::string config_path, task_override, out_override;
    long threads = 0;
    std::vector<std::string> args(argv + 1, argv + argc);
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        auto next = [&](const char* flag) -> std::string {
            if (i + 1 >= args.size())
                throw ConfigError(std::string("cli: missing value for ") + flag);
            return args[++i];
        };
        if (a == "--task") task_override = next("--task");
        else if (a == "--out") out_override = next("--out");
        else if (a == "--threads") {
            std::string v = next("--threads");
            try {
                threads = std::stol(v);
            } catch (const std::exception&) {
                throw ConfigError("cli: --threads expects an integer, got '" + v + "'");
            }
        } else if (a == "--help" || a == "-h") {
            std::fprintf(stdout,
                         "usage: %s <config-path> [--task X] [--out DIR] [--threads K]\n",
                         argc > 0 ? argv[0] : "fracrec");
            return 0;
        } else if (!a.empty() && a[0] == '-') {
            throw ConfigError("cli: unknown flag '" + a + "'");
        } else if (config_path.empty()) {
            config_path = a;
        } else {
            throw ConfigError("cli: unexpected positional argument '" + a + "'");
        }
    }
    if (config_path.empty())
        throw ConfigError("cli: a config path is required "
                          "(usage: <binary> <config-path> [--task X] [--out DIR] [--threads K])");

    if (threads == 0) {
        if (const char* env = std::getenv("FRACREC_THREADS")) {
            try {
                threads = std::stol(env);
            } catch (const std::exception&) {
                throw ConfigError("cli: FRACREC_THREADS must be an integer");
            }
        }
    }
    if (threads != 0 && threads < 1)
        throw ConfigError("cli: thread count must be >= 1");

    std::ifstream is(config_path, std::ios::binary);
    if (!is) throw ConfigError("cli: cannot read config file '" + config_path + "'");
    std::string text((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());

    RunConfig cfg = parse_config(text);
    if (!task_override.empty()) {
        if (!known_tasks().count(task_override))
            throw ConfigError("cli: unknown task '" + task_override + "'");
        cfg.task = task_override;
        cfg.raw["task"] = task_override;
        // re-check task-specific requirements under the override
        cfg = parse_config(cfg.raw.dump());
        cfg.task = task_override;
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    return run(cfg);
}

// Exception-to-exit-code boundary for main().
inline int main_entry(int argc, const char* const* argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
}

} // namespace cli
} // namespace fracrec
