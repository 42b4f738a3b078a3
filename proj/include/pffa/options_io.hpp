#pragma once

// Solver options from key=value text or a flat JSON object. Keys match the
// SolverOptions field names; homotopy fields carry their own names
// (homotopy, y_scale, mu_schedule, ...). Unknown keys are errors.

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pffa/solver.hpp"

namespace pffa {

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline double parse_number(const std::string& key, const std::string& v) {
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    double x = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw std::invalid_argument("option " + key + ": not a number: '" + v + "'");
    return x;
}

inline int parse_int(const std::string& key, const std::string& v) {
    int x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw std::invalid_argument("option " + key + ": not an integer: '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("option " + key + ": expected on/off, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace detail

/// all | loads | comma-separated bus ids.
inline PlacementPolicy parse_placement(const std::string& v) {
    if (v == "all") return PlacementPolicy::all_buses();
    if (v == "loads") return PlacementPolicy::load_buses_and_shunts();
    std::vector<int> ids;
    for (const auto& s : detail::split_list(v)) ids.push_back(detail::parse_int("placement", s));
    if (ids.empty()) throw std::invalid_argument("placement: expected all, loads or a list of bus ids");
    return PlacementPolicy::explicit_set(std::move(ids));
}

inline void apply_option(SolverOptions& o, const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string v = trim(raw);
    auto& h = o.homotopy;
    if (key == "nr_tolerance") o.nr_tolerance = parse_number(key, v);
    else if (key == "max_iterations") o.max_iterations = parse_int(key, v);
    else if (key == "delta_v_max") o.delta_v_max = parse_number(key, v);
    else if (key == "aux_step_max") o.aux_step_max = parse_number(key, v);
    else if (key == "clamp_voltage") o.clamp_voltage = parse_bool(key, v);
    else if (key == "v_clamp_min") o.v_clamp_min = parse_number(key, v);
    else if (key == "v_clamp_max") o.v_clamp_max = parse_number(key, v);
    else if (key == "voltage_floor") o.voltage_floor = parse_number(key, v);
    else if (key == "homotopy") h.enabled = parse_bool(key, v);
    else if (key == "y_scale") h.y_scale = parse_number(key, v);
    else if (key == "mu_floor") h.mu_floor = parse_number(key, v);
    else if (key == "mu_schedule") {
        h.mu_schedule.clear();
        for (const auto& s : split_list(v)) h.mu_schedule.push_back(parse_number(key, s));
    } else if (key == "max_subproblem_iters") h.max_subproblem_iters = parse_int(key, v);
    else if (key == "max_refinements") h.max_refinements = parse_int(key, v);
    else if (key == "max_subproblems") h.max_subproblems = parse_int(key, v);
    else if (key == "min_step") h.min_step = parse_number(key, v);
    else if (key == "fallback_direct") h.fallback_direct = parse_bool(key, v);
    else if (key == "start") {
        if (v == "flat") o.start = StartMode::Flat;
        else if (v == "input") o.start = StartMode::FromInput;
        else throw std::invalid_argument("option start: expected flat or input");
    } else if (key == "q_limits") {
        if (v == "ignore") o.q_limit_mode = QLimitMode::Ignore;
        else if (v == "outer") o.q_limit_mode = QLimitMode::OuterLoop;
        else throw std::invalid_argument("option q_limits: expected ignore or outer");
    } else if (key == "feasibility") o.feasibility = parse_bool(key, v);
    else if (key == "placement") o.placement = parse_placement(v);
    else if (key == "max_outer_iterations") o.max_outer_iterations = parse_int(key, v);
    else if (key == "feasibility_threshold") o.feasibility_threshold = parse_number(key, v);
    else if (key == "second_order_bus_cap") o.second_order_bus_cap = static_cast<std::size_t>(parse_int(key, v));
    else if (key == "pivot_threshold") o.pivot_threshold = parse_number(key, v);
    else throw std::invalid_argument("unknown option '" + key + "'");
}

/// Lines of `key = value`; '#' starts a comment.
inline void apply_key_values(SolverOptions& o, const std::string& text) {
    std::istringstream in(text);
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("options line " + std::to_string(line_no) + ": expected key = value");
        apply_option(o, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

inline void apply_json(SolverOptions& o, const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("options JSON must be an object");
    for (const auto& [key, value] : j.items()) {
        std::string text;
        if (value.is_string()) text = value.get<std::string>();
        else if (value.is_boolean()) text = value.get<bool>() ? "on" : "off";
        else if (value.is_array()) {
            for (const auto& e : value) text += (text.empty() ? "" : ",") + e.dump();
        } else text = value.dump();
        apply_option(o, key, text);
    }
}

/// Reads a config file; JSON if the first non-blank character is '{'.
inline SolverOptions load_options(const std::string& path, SolverOptions base = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open options file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') apply_json(base, nlohmann::json::parse(text));
    else apply_key_values(base, text);
    base.validate();
    return base;
}

}  // namespace pffa
