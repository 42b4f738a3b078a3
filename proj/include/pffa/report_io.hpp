#pragma once

// Versioned JSON and CSV serialization of feasibility results.

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pffa/feasibility.hpp"
#include "pffa/solver.hpp"

namespace pffa {

inline constexpr const char* kReportSchema = "pffa.feasibility-report";
inline constexpr int kReportSchemaVersion = 1;

namespace detail {

// JSON has no infinity or NaN; those become null.
inline nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

}  // namespace detail

inline nlohmann::json to_json(const FeasibilityReport& r) {
    using nlohmann::json;
    json buses = json::array();
    for (const auto& b : r.buses)
        buses.push_back({{"bus", b.bus},
                         {"if_real", b.if_real},
                         {"if_imag", b.if_imag},
                         {"p_def", b.p_def},
                         {"q_def", b.q_def},
                         {"norm_mag", b.norm_mag}});
    json subs = json::array();
    for (const auto& s : r.subproblems)
        subs.push_back({{"mu", s.mu}, {"iterations", s.iterations}, {"converged", s.converged}});
    return {{"schema", kReportSchema},
            {"version", kReportSchemaVersion},
            {"verdict", to_string(r.verdict)},
            {"threshold", r.threshold},
            {"p_inf", r.p_inf},
            {"q_inf", r.q_inf},
            {"objective", r.objective},
            {"max_if", r.max_if},
            {"trace",
             {{"iterations", r.iterations},
              {"residual", detail::finite_or_null(r.residual)},
              {"seconds", r.seconds},
              {"fallback_used", r.fallback_used},
              {"subproblems", subs}}},
            {"buses", buses}};
}

inline FeasibilityReport report_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != kReportSchema) throw std::invalid_argument("not a feasibility report");
    if (j.value("version", 0) != kReportSchemaVersion)
        throw std::invalid_argument("unsupported report version " + std::to_string(j.value("version", 0)));
    FeasibilityReport r;
    r.verdict = j.at("verdict").get<std::string>() == "feasible" ? Verdict::Feasible : Verdict::Infeasible;
    r.threshold = j.at("threshold").get<double>();
    r.p_inf = j.at("p_inf").get<double>();
    r.q_inf = j.at("q_inf").get<double>();
    r.objective = j.at("objective").get<double>();
    r.max_if = j.at("max_if").get<double>();
    const auto& t = j.at("trace");
    r.iterations = t.at("iterations").get<int>();
    r.residual = t.at("residual").is_null() ? INFINITY : t.at("residual").get<double>();
    r.seconds = t.at("seconds").get<double>();
    r.fallback_used = t.at("fallback_used").get<bool>();
    for (const auto& s : t.at("subproblems"))
        r.subproblems.push_back({s.at("mu").get<double>(), s.at("iterations").get<int>(), s.at("converged").get<bool>()});
    for (const auto& b : j.at("buses"))
        r.buses.push_back({b.at("bus").get<int>(), b.at("if_real").get<double>(), b.at("if_imag").get<double>(),
                           b.at("p_def").get<double>(), b.at("q_def").get<double>(), b.at("norm_mag").get<double>()});
    return r;
}

/// One row per bus in report order; this is also the heatmap input.
inline std::string to_csv(const FeasibilityReport& r) {
    std::ostringstream os;
    os << "bus,if_real,if_imag,p_def,q_def,norm_mag\n";
    for (const auto& b : r.buses) {
        os << b.bus << ',' << detail::fmt_double(b.if_real) << ',' << detail::fmt_double(b.if_imag) << ','
           << detail::fmt_double(b.p_def) << ',' << detail::fmt_double(b.q_def) << ','
           << detail::fmt_double(b.norm_mag) << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const SweepResult& s) {
    using nlohmann::json;
    json points = json::array();
    for (const auto& p : s.points) {
        json e = {{"factor", p.factor},
                  {"converged", p.converged},
                  {"iterations", p.iterations},
                  {"warm_started", p.warm_started}};
        if (p.converged) {
            e["verdict"] = to_string(p.verdict);
            e["p_inf"] = p.p_inf;
            e["q_inf"] = p.q_inf;
        } else {
            e["verdict"] = nullptr;
            e["error"] = p.message;
        }
        points.push_back(e);
    }
    json out = {{"schema", "pffa.loading-sweep"}, {"version", kReportSchemaVersion}, {"points", points}};
    out["collapse_estimate"] = s.collapse_estimate ? json(*s.collapse_estimate) : json();
    if (s.collapse_bracket) out["collapse_bracket"] = {s.collapse_bracket->first, s.collapse_bracket->second};
    return out;
}

inline std::string to_csv(const SweepResult& s) {
    std::ostringstream os;
    os << "factor,converged,verdict,p_inf,q_inf,iterations\n";
    for (const auto& p : s.points) {
        os << detail::fmt_double(p.factor) << ',' << (p.converged ? 1 : 0) << ','
           << (p.converged ? to_string(p.verdict) : "") << ',' << detail::fmt_double(p.p_inf) << ','
           << detail::fmt_double(p.q_inf) << ',' << p.iterations << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const ContingencyResult& c) {
    nlohmann::json j = {{"from_bus", c.branch.from_bus},
                        {"to_bus", c.branch.to_bus},
                        {"ordinal", c.branch.ordinal},
                        {"outcome", to_string(c.outcome)}};
    if (!c.message.empty()) j["message"] = c.message;
    if (c.report) j["report"] = to_json(*c.report);
    return j;
}

inline nlohmann::json to_json(const std::vector<ContingencyResult>& list) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& c : list) items.push_back(to_json(c));
    return {{"schema", "pffa.contingency-list"}, {"version", kReportSchemaVersion}, {"contingencies", items}};
}

inline std::string to_csv(const std::vector<ContingencyResult>& list) {
    std::ostringstream os;
    os << "from_bus,to_bus,ordinal,outcome,verdict,p_inf,q_inf,worst_bus\n";
    for (const auto& c : list) {
        os << c.branch.from_bus << ',' << c.branch.to_bus << ',' << c.branch.ordinal << ',' << to_string(c.outcome)
           << ',';
        if (c.report) {
            os << to_string(c.report->verdict) << ',' << detail::fmt_double(c.report->p_inf) << ','
               << detail::fmt_double(c.report->q_inf) << ','
               << (c.report->buses.empty() ? std::string() : std::to_string(c.report->buses.front().bus));
        } else {
            os << ",,,";
        }
        os << '\n';
    }
    return os.str();
}

/// Power-flow state as JSON: bus voltages, generator reactive output and modes.
inline nlohmann::json solution_to_json(const NetworkCase& c, const Solution& sol) {
    using nlohmann::json;
    json buses = json::array();
    if (sol.state.map) {
        for (std::size_t k = 0; k < c.buses.size(); ++k) {
            const auto v = sol.state.voltage(k);
            buses.push_back({{"bus", c.buses[k].id}, {"vm", std::abs(v)}, {"va", std::arg(v)}});
        }
    }
    json gens = json::array();
    if (sol.state.map) {
        const auto& idx = *sol.state.map;
        for (std::size_t g = 0; g < idx.pv.size(); ++g) {
            const auto mode = g < sol.generator_modes.size() ? sol.generator_modes[g] : GeneratorMode::Regulating;
            gens.push_back({{"bus", c.generators[idx.pv[g].generator].bus},
                            {"q_g", sol.state.q_g(g)},
                            {"mode", to_string(mode)}});
        }
    }
    return {{"status", to_string(sol.status)},
            {"message", sol.message},
            {"iterations", sol.iterations},
            {"residual", detail::finite_or_null(sol.residual)},
            {"seconds", sol.seconds},
            {"fallback_used", sol.fallback_used},
            {"buses", buses},
            {"generators", gens}};
}

}  // namespace pffa
