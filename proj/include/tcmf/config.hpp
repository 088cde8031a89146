#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tcmf/control.hpp"
#include "tcmf/errors.hpp"
#include "tcmf/grid.hpp"
#include "tcmf/intensity.hpp"
#include "tcmf/levy.hpp"
#include "tcmf/mfsde.hpp"
#include "tcmf/vasicek.hpp"

namespace tcmf {

/// Parsed scenario file. Coefficients and costs come from a fixed registry
/// (vasicek, linear-test, ou-test, zero), never from expressions.
struct ScenarioConfig {
    std::string raw_text;

    double T = 1.0;
    std::size_t n_steps = 100;
    IntensityModel intensity = IntensityModel::constant(1.0, 0.0);
    LevyGrid levy;

    std::string coefficients = "vasicek";
    double theta = 1.0;
    double sigma0 = 0.2;
    std::vector<double> sigma_jump;
    double x0 = 1.0;
    double lin_a = -1.0;
    double lin_c = 0.5;
    double ou_rate = 1.0;

    std::string costs = "vasicek";

    double u_min = 0.0;
    double u_max = -1.0;  // < 0: scenario default

    std::size_t N = 1000;
    double tol = 1e-4;
    std::size_t max_iter = 60;
    std::optional<double> beta;
    std::size_t basis_degree = 2;
    double ridge = 1e-8;

    std::uint64_t master_seed = 12345;

    std::string out_dir = "out";
    bool fmt_csv = true;
    bool fmt_json = true;

    // optional bsde section (solve-mfbsde)
    std::string bsde_driver = "zero";  // zero | decay | copy-mean
    double bsde_a = 1.0;
    double bsde_c = 1.0;
    std::string bsde_terminal = "constant";  // constant | gaussian-integral
    double bsde_terminal_value = 1.0;

    // optional chaos section (chaos-study)
    std::vector<std::size_t> chaos_n_list = {100, 1000, 10000};
    std::size_t chaos_replications = 8;
    std::size_t chaos_reference_n = 20000;

    // optional maxprinciple section (check-maxprinciple)
    std::string control_source = "adjoint";  // adjoint | riccati |
                                             // riccati-perturbed | constant | zero
    double control_value = 0.0;
    double control_perturbation = 0.1;
    std::size_t u_grid = 101;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw config_error("unknown key '" + it.key() + "' in " + where);
}

inline double require_pos(double v, const std::string& what) {
    if (!(v > 0.0)) throw config_error(what + " must be > 0");
    return v;
}

inline IntensityComponent parse_component(const json& j, const std::string& where) {
    if (!j.is_object()) throw config_error(where + " must be an object");
    const std::string kind = j.value("kind", "constant");
    if (kind == "constant") {
        reject_unknown(j, {"kind", "level"}, where);
        return IntensityComponent::constant(j.value("level", 0.0));
    }
    if (kind == "linear") {
        reject_unknown(j, {"kind", "intercept", "slope"}, where);
        const double a = j.value("intercept", 0.0);
        const double b = j.value("slope", 0.0);
        return IntensityComponent::function(
            [a, b](double t) { return std::max(0.0, a + b * t); });
    }
    if (kind == "sqrt") {
        reject_unknown(j, {"kind", "init", "rev", "level", "vol"}, where);
        return IntensityComponent::square_root(
            j.value("init", 1.0), j.value("rev", 1.0), j.value("level", 1.0),
            j.value("vol", 0.1));
    }
    throw config_error("unknown intensity kind '" + kind + "' in " + where);
}

inline LevyGrid parse_levy(const json& j) {
    const std::string family = j.value("family", "none");
    if (family == "none") {
        reject_unknown(j, {"family"}, "levy");
        return LevyGrid{};
    }
    const std::size_t M = j.value("M", std::size_t{1});
    const double eps = j.value("eps", 0.0);
    if (family == "atoms") {
        reject_unknown(j, {"family", "marks", "weights", "M", "eps"}, "levy");
        return discretize_levy(
            LevySpec::atoms(j.value("marks", std::vector<double>{}),
                            j.value("weights", std::vector<double>{})),
            M, eps);
    }
    if (family == "uniform") {
        reject_unknown(j, {"family", "height", "a", "M", "eps"}, "levy");
        return discretize_levy(
            LevySpec::uniform(j.value("height", 1.0), j.value("a", 1.0)), M, eps);
    }
    if (family == "exp") {
        reject_unknown(j, {"family", "c", "alpha", "zmax", "M", "eps"}, "levy");
        return discretize_levy(LevySpec::exponential(j.value("c", 1.0),
                                                     j.value("alpha", 0.5),
                                                     j.value("zmax", 40.0)),
                               M, eps);
    }
    throw config_error("unknown levy family '" + family + "'");
}

}  // namespace detail

inline ScenarioConfig parse_config(const std::string& text) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config root must be an object");
    detail::reject_unknown(j,
                           {"grid", "intensity", "levy", "coefficients", "costs",
                            "control", "solver", "seeds", "output", "bsde",
                            "chaos", "maxprinciple"},
                           "config root");
    ScenarioConfig c;
    c.raw_text = text;

    if (j.contains("grid")) {
        const json& g = j["grid"];
        detail::reject_unknown(g, {"T", "n_steps"}, "grid");
        c.T = detail::require_pos(g.value("T", 1.0), "grid.T");
        c.n_steps = g.value("n_steps", std::size_t{100});
        if (c.n_steps < 1) throw config_error("grid.n_steps must be >= 1");
    }
    if (j.contains("intensity")) {
        const json& g = j["intensity"];
        detail::reject_unknown(g, {"B", "H"}, "intensity");
        if (g.contains("B")) c.intensity.B = detail::parse_component(g["B"], "intensity.B");
        if (g.contains("H")) c.intensity.H = detail::parse_component(g["H"], "intensity.H");
    }
    if (j.contains("levy")) c.levy = detail::parse_levy(j["levy"]);
    if (j.contains("coefficients")) {
        const json& g = j["coefficients"];
        detail::reject_unknown(g,
                               {"name", "theta", "sigma0", "sigma_jump", "x0",
                                "a", "c", "rate"},
                               "coefficients");
        c.coefficients = g.value("name", std::string("vasicek"));
        if (c.coefficients != "vasicek" && c.coefficients != "linear-test" &&
            c.coefficients != "ou-test" && c.coefficients != "zero")
            throw config_error("unknown coefficients registry name '" +
                               c.coefficients + "'");
        c.theta = g.value("theta", 1.0);
        c.sigma0 = g.value("sigma0", 0.2);
        c.sigma_jump = g.value("sigma_jump", std::vector<double>{});
        c.x0 = g.value("x0", 1.0);
        c.lin_a = g.value("a", -1.0);
        c.lin_c = g.value("c", 0.5);
        c.ou_rate = g.value("rate", 1.0);
    }
    if (j.contains("costs")) {
        const json& g = j["costs"];
        detail::reject_unknown(g, {"name"}, "costs");
        c.costs = g.value("name", std::string("vasicek"));
        if (c.costs != "vasicek" && c.costs != "zero")
            throw config_error("unknown costs registry name '" + c.costs + "'");
    }
    if (j.contains("control")) {
        const json& g = j["control"];
        detail::reject_unknown(g, {"u_min", "u_max"}, "control");
        c.u_min = g.value("u_min", 0.0);
        c.u_max = g.value("u_max", -1.0);
    }
    if (j.contains("solver")) {
        const json& g = j["solver"];
        detail::reject_unknown(
            g, {"N", "tol", "max_iter", "beta", "basis_degree", "ridge"}, "solver");
        c.N = g.value("N", std::size_t{1000});
        c.tol = detail::require_pos(g.value("tol", 1e-4), "solver.tol");
        c.max_iter = g.value("max_iter", std::size_t{60});
        if (g.contains("beta"))
            c.beta = detail::require_pos(g["beta"].get<double>(), "solver.beta");
        c.basis_degree = g.value("basis_degree", std::size_t{2});
        c.ridge = g.value("ridge", 1e-8);
        if (c.ridge < 0.0) throw config_error("solver.ridge must be >= 0");
    }
    if (j.contains("seeds")) {
        const json& g = j["seeds"];
        detail::reject_unknown(g, {"master"}, "seeds");
        c.master_seed = g.value("master", std::uint64_t{12345});
    }
    if (j.contains("output")) {
        const json& g = j["output"];
        detail::reject_unknown(g, {"dir", "formats"}, "output");
        c.out_dir = g.value("dir", std::string("out"));
        if (g.contains("formats")) {
            c.fmt_csv = false;
            c.fmt_json = false;
            for (const auto& f : g["formats"]) {
                const std::string name = f.get<std::string>();
                if (name == "csv")
                    c.fmt_csv = true;
                else if (name == "json")
                    c.fmt_json = true;
                else
                    throw config_error("unknown output format '" + name + "'");
            }
        }
    }
    if (j.contains("bsde")) {
        const json& g = j["bsde"];
        detail::reject_unknown(g, {"driver", "a", "c", "terminal", "value"}, "bsde");
        c.bsde_driver = g.value("driver", std::string("zero"));
        if (c.bsde_driver != "zero" && c.bsde_driver != "decay" &&
            c.bsde_driver != "copy-mean")
            throw config_error("unknown bsde driver '" + c.bsde_driver + "'");
        c.bsde_a = g.value("a", 1.0);
        c.bsde_c = g.value("c", 1.0);
        c.bsde_terminal = g.value("terminal", std::string("constant"));
        if (c.bsde_terminal != "constant" && c.bsde_terminal != "gaussian-integral")
            throw config_error("unknown bsde terminal '" + c.bsde_terminal + "'");
        c.bsde_terminal_value = g.value("value", 1.0);
    }
    if (j.contains("chaos")) {
        const json& g = j["chaos"];
        detail::reject_unknown(g, {"N_list", "replications", "reference_N"},
                               "chaos");
        if (g.contains("N_list"))
            c.chaos_n_list = g["N_list"].get<std::vector<std::size_t>>();
        if (c.chaos_n_list.empty()) throw config_error("chaos.N_list is empty");
        c.chaos_replications = g.value("replications", std::size_t{8});
        c.chaos_reference_n = g.value("reference_N", std::size_t{20000});
    }
    if (j.contains("maxprinciple")) {
        const json& g = j["maxprinciple"];
        detail::reject_unknown(
            g, {"control_source", "value", "perturbation", "u_grid"},
            "maxprinciple");
        c.control_source = g.value("control_source", std::string("adjoint"));
        if (c.control_source != "adjoint" && c.control_source != "riccati" &&
            c.control_source != "riccati-perturbed" &&
            c.control_source != "constant" && c.control_source != "zero")
            throw config_error("unknown control_source '" + c.control_source + "'");
        c.control_value = g.value("value", 0.0);
        c.control_perturbation = g.value("perturbation", 0.1);
        c.u_grid = g.value("u_grid", std::size_t{101});
    }
    return c;
}

/// Registry lookup for the forward-solver commands.
inline CoefficientSet make_coefficients(const ScenarioConfig& c) {
    CoefficientSet out;
    out.name = c.coefficients;
    out.features = {MeasureFeature::mean()};
    if (c.coefficients == "zero") {
        out.drift = [](double, double, double, double, std::span<const double>,
                       double) { return 0.0; };
        out.jump = [](double, double, double, double, double,
                      std::span<const double>, double) { return 0.0; };
    } else if (c.coefficients == "linear-test") {
        const double a = c.lin_a, cc = c.lin_c, s0 = c.sigma0;
        out.drift = [a, cc](double, double, double, double x,
                            std::span<const double> f, double) {
            return a * x + cc * f[0];
        };
        out.jump = [s0](double, double z, double, double, double,
                        std::span<const double>, double) {
            return z == 0.0 ? s0 : 0.0;
        };
    } else if (c.coefficients == "ou-test") {
        const double rate = c.ou_rate, s0 = c.sigma0;
        out.drift = [rate](double, double, double, double x,
                           std::span<const double>, double) { return -rate * x; };
        out.jump = [s0](double, double z, double, double, double,
                        std::span<const double>, double) {
            return z == 0.0 ? s0 : 0.0;
        };
    } else {  // vasicek
        const double theta = c.theta, s0 = c.sigma0;
        const std::vector<double> sj = c.sigma_jump;
        const LevyGrid lg = c.levy;
        out.drift = [theta](double, double, double, double x,
                            std::span<const double> f, double u) {
            return theta * (-x + f[0] - u);
        };
        out.jump = [s0, sj, lg](double, double z, double, double, double,
                                std::span<const double>, double) {
            if (z == 0.0) return s0;
            for (std::size_t k = 0; k < lg.n_marks(); ++k)
                if (lg.marks[k] == z) return k < sj.size() ? sj[k] : 0.0;
            return 0.0;
        };
    }
    return out;
}

inline VasicekScenario make_vasicek(const ScenarioConfig& c) {
    VasicekScenario vs;
    vs.theta = c.theta;
    vs.sigma0 = c.sigma0;
    vs.sigma_jump = c.sigma_jump;
    vs.r0 = c.x0;
    vs.intensity = c.intensity;
    vs.levy = c.levy;
    vs.T = c.T;
    vs.n_steps = c.n_steps;
    vs.u_max = c.u_max;
    vs.N = c.N;
    vs.seed = c.master_seed;
    vs.basis.degree = c.basis_degree;
    vs.basis.ridge = c.ridge;
    vs.picard_tol = c.tol;
    vs.picard_max_iter = c.max_iter;
    return vs;
}

}  // namespace tcmf
