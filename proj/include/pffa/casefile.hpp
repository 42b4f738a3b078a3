#pragma once

// Grid case data: per-unit network model, MATPOWER and native JSON readers and
// writers, loading-factor scaling and branch outages.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <cctype>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace pffa {

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v_set = 1.0;      ///< voltage magnitude setpoint, Slack/PV only
    double angle_set = 0.0;  ///< radians, Slack only
    // Operating point stored in the source file, used for warm starts.
    std::optional<double> v_init;
    std::optional<double> angle_init;

    bool operator==(const Bus&) const = default;
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double g_series = 0.0;
    double b_series = 0.0;
    double b_shunt_total = 0.0;  ///< total line charging, split half per end
    double tap = 1.0;            ///< off-nominal ratio on the from side
    double phase_shift = 0.0;    ///< radians
    bool in_service = true;

    bool is_transformer() const { return tap != 1.0 || phase_shift != 0.0; }
    bool operator==(const Branch&) const = default;
};

struct Generator {
    int bus = 0;
    double p_set = 0.0;
    double q_min = -std::numeric_limits<double>::infinity();
    double q_max = std::numeric_limits<double>::infinity();
    double v_set = 1.0;

    bool operator==(const Generator&) const = default;
};

/// Constant-power load. Negative p models a net injection.
struct Load {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;

    bool operator==(const Load&) const = default;
};

struct FixedShunt {
    int bus = 0;
    double g = 0.0;
    double b = 0.0;

    bool operator==(const FixedShunt&) const = default;
};

/// Validated grid in per-unit on base_mva.
struct NetworkCase {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<Load> loads;
    std::vector<FixedShunt> shunts;

    bool operator==(const NetworkCase&) const = default;

    /// Map from external bus id to position in `buses`.
    std::unordered_map<int, std::size_t> bus_positions() const {
        std::unordered_map<int, std::size_t> out;
        out.reserve(buses.size());
        for (std::size_t i = 0; i < buses.size(); ++i) out.emplace(buses[i].id, i);
        return out;
    }

    std::size_t slack_position() const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].kind == BusKind::Slack) return i;
        return buses.size();
    }

    std::size_t in_service_branch_count() const {
        return static_cast<std::size_t>(std::count_if(
            branches.begin(), branches.end(), [](const Branch& b) { return b.in_service; }));
    }
};

enum class CaseErrorKind {
    MalformedRow,
    MissingSection,
    MissingSlack,
    MultipleSlack,
    DuplicateBus,
    UnresolvableBus,
    InvalidValue,
    ConflictingSetpoint,
    Islanded,
    BranchNotFound,
    NegativeFactor,
};

inline const char* to_string(CaseErrorKind kind) {
    switch (kind) {
        case CaseErrorKind::MalformedRow: return "malformed row";
        case CaseErrorKind::MissingSection: return "missing required section";
        case CaseErrorKind::MissingSlack: return "missing slack";
        case CaseErrorKind::MultipleSlack: return "multiple slack buses";
        case CaseErrorKind::DuplicateBus: return "duplicate bus id";
        case CaseErrorKind::UnresolvableBus: return "unresolvable bus";
        case CaseErrorKind::InvalidValue: return "invalid value";
        case CaseErrorKind::ConflictingSetpoint: return "conflicting voltage setpoint";
        case CaseErrorKind::Islanded: return "network islanded";
        case CaseErrorKind::BranchNotFound: return "branch not found";
        case CaseErrorKind::NegativeFactor: return "negative loading factor";
    }
    return "case error";
}

class CaseError : public std::runtime_error {
  public:
    CaseError(CaseErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail)),
          kind_(kind) {}

    CaseErrorKind kind() const { return kind_; }

  private:
    CaseErrorKind kind_;
};

/// Connected components of the graph of in-service branches, as bus positions.
inline std::vector<std::vector<std::size_t>> islands(const NetworkCase& c) {
    const auto pos = c.bus_positions();
    std::vector<std::vector<std::size_t>> adjacency(c.buses.size());
    for (const auto& br : c.branches) {
        if (!br.in_service) continue;
        const auto f = pos.find(br.from_bus);
        const auto t = pos.find(br.to_bus);
        if (f == pos.end() || t == pos.end()) continue;
        adjacency[f->second].push_back(t->second);
        adjacency[t->second].push_back(f->second);
    }
    std::vector<int> label(c.buses.size(), -1);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < c.buses.size(); ++start) {
        if (label[start] >= 0) continue;
        out.emplace_back();
        std::queue<std::size_t> frontier;
        frontier.push(start);
        label[start] = static_cast<int>(out.size() - 1);
        while (!frontier.empty()) {
            const auto k = frontier.front();
            frontier.pop();
            out.back().push_back(k);
            for (auto m : adjacency[k]) {
                if (label[m] < 0) {
                    label[m] = label[start];
                    frontier.push(m);
                }
            }
        }
    }
    return out;
}

inline bool is_connected(const NetworkCase& c) { return islands(c).size() <= 1; }

/// Throws CaseError on the first violated invariant.
inline void validate(const NetworkCase& c) {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!(c.base_mva > 0.0) || !finite(c.base_mva))
        throw CaseError(CaseErrorKind::InvalidValue, "base_mva must be positive");
    if (c.buses.empty()) throw CaseError(CaseErrorKind::MissingSection, "no buses");

    std::unordered_set<int> ids;
    std::size_t slacks = 0;
    for (const auto& b : c.buses) {
        if (!ids.insert(b.id).second)
            throw CaseError(CaseErrorKind::DuplicateBus, std::to_string(b.id));
        if (b.kind == BusKind::Slack) ++slacks;
        if (b.kind != BusKind::PQ && !(b.v_set > 0.0 && finite(b.v_set)))
            throw CaseError(CaseErrorKind::InvalidValue,
                            "bus " + std::to_string(b.id) + " v_set must be positive");
        if (!finite(b.angle_set))
            throw CaseError(CaseErrorKind::InvalidValue, "bus " + std::to_string(b.id) + " angle");
    }
    if (slacks == 0) throw CaseError(CaseErrorKind::MissingSlack, "");
    if (slacks > 1) throw CaseError(CaseErrorKind::MultipleSlack, std::to_string(slacks));

    auto require_bus = [&](int id, const char* what) {
        if (!ids.contains(id))
            throw CaseError(CaseErrorKind::UnresolvableBus,
                            std::string(what) + " references bus " + std::to_string(id));
    };
    for (const auto& br : c.branches) {
        require_bus(br.from_bus, "branch");
        require_bus(br.to_bus, "branch");
        if (br.from_bus == br.to_bus)
            throw CaseError(CaseErrorKind::InvalidValue,
                            "branch loops on bus " + std::to_string(br.from_bus));
        if (!(br.tap > 0.0) || !finite(br.tap))
            throw CaseError(CaseErrorKind::InvalidValue, "branch tap must be positive");
        if (!finite(br.g_series) || !finite(br.b_series) || !finite(br.b_shunt_total) ||
            !finite(br.phase_shift))
            throw CaseError(CaseErrorKind::InvalidValue, "non-finite branch parameter");
    }

    const auto pos = c.bus_positions();
    std::unordered_set<int> gen_buses;
    for (const auto& g : c.generators) {
        require_bus(g.bus, "generator");
        if (!(g.q_min <= g.q_max))
            throw CaseError(CaseErrorKind::InvalidValue,
                            "generator at bus " + std::to_string(g.bus) + " has q_min > q_max");
        if (!finite(g.p_set) || !(g.v_set > 0.0) || !finite(g.v_set))
            throw CaseError(CaseErrorKind::InvalidValue,
                            "generator at bus " + std::to_string(g.bus));
        if (!gen_buses.insert(g.bus).second)
            throw CaseError(CaseErrorKind::InvalidValue,
                            "more than one generator record at bus " + std::to_string(g.bus));
        const auto& bus = c.buses[pos.at(g.bus)];
        if (bus.kind == BusKind::PQ)
            throw CaseError(CaseErrorKind::InvalidValue,
                            "generator record at PQ bus " + std::to_string(g.bus));
        if (std::abs(bus.v_set - g.v_set) > 1e-12)
            throw CaseError(CaseErrorKind::ConflictingSetpoint, "bus " + std::to_string(g.bus));
    }
    for (const auto& b : c.buses) {
        if (b.kind == BusKind::PV && !gen_buses.contains(b.id))
            throw CaseError(CaseErrorKind::InvalidValue,
                            "PV bus " + std::to_string(b.id) + " has no generator");
    }
    for (const auto& l : c.loads) {
        require_bus(l.bus, "load");
        if (!finite(l.p) || !finite(l.q)) throw CaseError(CaseErrorKind::InvalidValue, "load");
    }
    for (const auto& s : c.shunts) {
        require_bus(s.bus, "shunt");
        if (!finite(s.g) || !finite(s.b)) throw CaseError(CaseErrorKind::InvalidValue, "shunt");
    }

    const auto parts = islands(c);
    if (parts.size() > 1) {
        const auto slack = c.slack_position();
        for (const auto& part : parts) {
            if (std::find(part.begin(), part.end(), slack) != part.end()) continue;
            throw CaseError(CaseErrorKind::Islanded,
                            "bus " + std::to_string(c.buses[part.front()].id) +
                                " is not connected to the slack bus");
        }
    }
}

namespace detail {

inline std::string strip_comment(std::string_view line) {
    const auto pct = line.find('%');
    return std::string(line.substr(0, pct));
}

inline double parse_number(const std::string& token) {
    if (token == "Inf" || token == "inf" || token == "+Inf") return std::numeric_limits<double>::infinity();
    if (token == "-Inf" || token == "-inf") return -std::numeric_limits<double>::infinity();
    if (token == "NaN" || token == "nan") return std::numeric_limits<double>::quiet_NaN();
    double value = 0.0;
    const char* first = token.data();
    if (!token.empty() && token.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw CaseError(CaseErrorKind::MalformedRow, "bad number '" + token + "'");
    return value;
}

struct FieldAssignment {
    std::string name;
    std::size_t value_begin;  ///< first character after '='
};

/// Every `mpc.<name> =` assignment outside comments, in file order.
inline std::vector<FieldAssignment> matpower_fields(const std::string& text) {
    std::vector<FieldAssignment> out;
    std::size_t line_start = 0;
    while (line_start < text.size()) {
        auto line_end = text.find('\n', line_start);
        if (line_end == std::string::npos) line_end = text.size();
        const auto comment = text.find('%', line_start);
        const auto limit = std::min(line_end, comment);
        for (auto at = text.find("mpc.", line_start); at != std::string::npos && at < limit;
             at = text.find("mpc.", at + 4)) {
            if (at > 0 && (std::isalnum(static_cast<unsigned char>(text[at - 1])) || text[at - 1] == '_'))
                continue;
            auto k = at + 4;
            while (k < limit && (std::isalnum(static_cast<unsigned char>(text[k])) || text[k] == '_')) ++k;
            auto eq = k;
            while (eq < limit && (text[eq] == ' ' || text[eq] == '\t')) ++eq;
            if (eq < limit && text[eq] == '=' && (eq + 1 >= text.size() || text[eq + 1] != '='))
                out.push_back({text.substr(at + 4, k - at - 4), eq + 1});
        }
        line_start = line_end + 1;
    }
    return out;
}

/// Numeric rows of `mpc.<name> = [ ... ];`, or nullopt when absent.
inline std::optional<std::vector<std::vector<double>>> matpower_table(
    const std::string& text, const std::vector<FieldAssignment>& fields, const std::string& name) {
    const auto field = std::find_if(fields.begin(), fields.end(),
                                    [&](const FieldAssignment& f) { return f.name == name; });
    if (field == fields.end()) return std::nullopt;
    auto begin = text.find_first_not_of(" \t", field->value_begin);
    if (begin == std::string::npos || text[begin] != '[')
        throw CaseError(CaseErrorKind::MalformedRow, "mpc." + name + " is not a matrix");
    ++begin;

    std::vector<std::vector<double>> rows;
    std::vector<double> row;
    std::string token;
    auto flush_token = [&] {
        if (!token.empty()) {
            row.push_back(parse_number(token));
            token.clear();
        }
    };
    auto flush_row = [&] {
        flush_token();
        if (!row.empty()) rows.push_back(std::move(row));
        row.clear();
    };
    bool in_comment = false;
    for (std::size_t i = begin; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_comment) {
            if (ch == '\n') {
                in_comment = false;
                flush_row();
            }
            continue;
        }
        if (ch == '%') {
            flush_token();
            in_comment = true;
        } else if (ch == ']') {
            flush_row();
            return rows;
        } else if (ch == ';' || ch == '\n') {
            flush_row();
        } else if (ch == ' ' || ch == '\t' || ch == ',' || ch == '\r') {
            flush_token();
        } else if (ch == '.' && i + 2 < text.size() && text[i + 1] == '.' && text[i + 2] == '.') {
            // MATLAB line continuation
            flush_token();
            while (i < text.size() && text[i] != '\n') ++i;
        } else {
            token.push_back(ch);
        }
    }
    throw CaseError(CaseErrorKind::MalformedRow, "unterminated table mpc." + name);
}

inline void check_arity(const std::vector<std::vector<double>>& rows, std::size_t min_cols,
                        const std::string& name) {
    if (rows.empty()) return;
    const auto width = rows.front().size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width || rows[i].size() < min_cols)
            throw CaseError(CaseErrorKind::MalformedRow,
                            "mpc." + name + " row " + std::to_string(i + 1) + " has " +
                                std::to_string(rows[i].size()) + " columns, expected " +
                                (width < min_cols ? std::to_string(min_cols) : std::to_string(width)));
    }
}

inline int as_id(double v, const std::string& what) {
    if (!std::isfinite(v) || v != std::floor(v))
        throw CaseError(CaseErrorKind::MalformedRow, what + " is not an integer");
    return static_cast<int>(v);
}

inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

constexpr double deg = std::numbers::pi / 180.0;

}  // namespace detail

/// Reads the baseMVA/bus/gen/branch subset of a MATPOWER case file.
///
/// Bus types map 3->Slack, 2->PV, 1->PQ; type-4 buses are dropped. Bus Pd/Qd
/// and in-service generators at PQ buses fold into one Load per bus, Gs/Bs
/// become FixedShunt records, and in-service generators at each PV/slack bus
/// aggregate into one Generator. A PV bus without an in-service generator is
/// demoted to PQ, and a type-3 bus without one does not count as a slack.
/// Anything else the file defines is reported through `warnings`.
inline NetworkCase parse_matpower(const std::string& text,
                                  std::vector<std::string>* warnings = nullptr) {
    auto warn = [&](std::string msg) {
        if (warnings) warnings->push_back(std::move(msg));
    };

    NetworkCase out;
    const auto fields = detail::matpower_fields(text);
    {
        const auto f = std::find_if(fields.begin(), fields.end(),
                                    [](const auto& a) { return a.name == "baseMVA"; });
        if (f == fields.end()) throw CaseError(CaseErrorKind::MissingSection, "mpc.baseMVA");
        const auto first = text.find_first_not_of(" \t", f->value_begin);
        const auto last = text.find_first_of(";\n%", first);
        auto token = text.substr(first, last - first);
        while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) token.pop_back();
        out.base_mva = detail::parse_number(token);
    }
    const auto bus_rows = detail::matpower_table(text, fields, "bus");
    const auto gen_rows = detail::matpower_table(text, fields, "gen");
    const auto branch_rows = detail::matpower_table(text, fields, "branch");
    if (!bus_rows) throw CaseError(CaseErrorKind::MissingSection, "mpc.bus");
    if (!gen_rows) throw CaseError(CaseErrorKind::MissingSection, "mpc.gen");
    if (!branch_rows) throw CaseError(CaseErrorKind::MissingSection, "mpc.branch");
    detail::check_arity(*bus_rows, 13, "bus");
    detail::check_arity(*gen_rows, 10, "gen");
    detail::check_arity(*branch_rows, 11, "branch");

    for (const auto& f : fields) {
        if (f.name != "bus" && f.name != "gen" && f.name != "branch" && f.name != "baseMVA" &&
            f.name != "version")
            warn("ignoring mpc." + f.name);
    }

    const double base = out.base_mva;
    if (!(base > 0.0)) throw CaseError(CaseErrorKind::InvalidValue, "baseMVA must be positive");

    struct RawBus {
        int id;
        int type;
        double pd, qd, gs, bs, vm, va;
    };
    std::vector<RawBus> raw;
    std::unordered_map<int, std::size_t> raw_pos;
    for (const auto& r : *bus_rows) {
        RawBus b{detail::as_id(r[0], "bus id"), detail::as_id(r[1], "bus type"), r[2], r[3], r[4],
                 r[5], r[7], r[8]};
        if (!raw_pos.emplace(b.id, raw.size()).second)
            throw CaseError(CaseErrorKind::DuplicateBus, std::to_string(b.id));
        if (b.type < 1 || b.type > 4)
            throw CaseError(CaseErrorKind::InvalidValue,
                            "bus " + std::to_string(b.id) + " has type " + std::to_string(b.type));
        raw.push_back(b);
    }

    // Generator aggregation per bus.
    struct GenSum {
        double p = 0, q = 0, qmin = 0, qmax = 0, vg = 0;
        int count = 0;
    };
    std::unordered_map<int, GenSum> gens;
    std::vector<int> gen_order;
    for (const auto& r : *gen_rows) {
        const int bus = detail::as_id(r[0], "gen bus");
        if (!raw_pos.contains(bus))
            throw CaseError(CaseErrorKind::UnresolvableBus,
                            "generator references bus " + std::to_string(bus));
        if (!(r[7] > 0)) continue;
        auto [it, fresh] = gens.try_emplace(bus);
        auto& g = it->second;
        if (fresh) {
            gen_order.push_back(bus);
            g.vg = r[5];
        } else if (std::abs(g.vg - r[5]) > 1e-12) {
            throw CaseError(CaseErrorKind::ConflictingSetpoint, "bus " + std::to_string(bus));
        }
        g.p += r[1];
        g.q += r[2];
        g.qmax += r[3];
        g.qmin += r[4];
        ++g.count;
    }

    std::unordered_set<int> dropped;
    for (const auto& b : raw) {
        if (b.type == 4) {
            dropped.insert(b.id);
            warn("dropping isolated bus " + std::to_string(b.id));
            continue;
        }
        Bus bus;
        bus.id = b.id;
        bus.v_init = b.vm;
        bus.angle_init = b.va * detail::deg;
        const auto g = gens.find(b.id);
        if (b.type == 3 && g != gens.end()) {
            bus.kind = BusKind::Slack;
            bus.v_set = g->second.vg;
            bus.angle_set = b.va * detail::deg;
        } else if (b.type == 2 && g != gens.end()) {
            bus.kind = BusKind::PV;
            bus.v_set = g->second.vg;
        } else {
            if (b.type == 2) warn("bus " + std::to_string(b.id) + " has no online generator, treated as PQ");
            if (b.type == 3) warn("bus " + std::to_string(b.id) + " has no online generator, not a slack");
            bus.kind = BusKind::PQ;
            bus.v_set = 1.0;
        }
        double p = b.pd / base;
        double q = b.qd / base;
        if (bus.kind == BusKind::PQ && g != gens.end()) {
            p -= g->second.p / base;
            q -= g->second.q / base;
        }
        if (p != 0.0 || q != 0.0) out.loads.push_back({b.id, p, q});
        if (b.gs != 0.0 || b.bs != 0.0) out.shunts.push_back({b.id, b.gs / base, b.bs / base});
        out.buses.push_back(bus);
    }
    const auto positions = out.bus_positions();
    for (int id : gen_order) {
        const auto& bus = out.buses[positions.at(id)];
        if (bus.kind == BusKind::PQ) continue;
        const auto& g = gens.at(id);
        out.generators.push_back({id, g.p / base, g.qmin / base, g.qmax / base, g.vg});
    }

    for (const auto& r : *branch_rows) {
        Branch br;
        br.from_bus = detail::as_id(r[0], "branch from bus");
        br.to_bus = detail::as_id(r[1], "branch to bus");
        const std::complex<double> z(r[2], r[3]);
        if (z == 0.0)
            throw CaseError(CaseErrorKind::InvalidValue,
                            "zero-impedance branch " + std::to_string(br.from_bus) + "-" +
                                std::to_string(br.to_bus));
        const auto y = 1.0 / z;
        br.g_series = y.real();
        br.b_series = y.imag();
        br.b_shunt_total = r[4];
        br.tap = r[8] == 0.0 ? 1.0 : r[8];
        br.phase_shift = r[9] * detail::deg;
        br.in_service = r[10] > 0;
        if (dropped.contains(br.from_bus) || dropped.contains(br.to_bus)) {
            if (br.in_service)
                throw CaseError(CaseErrorKind::UnresolvableBus,
                                "in-service branch touches isolated bus");
            continue;
        }
        out.branches.push_back(br);
    }

    validate(out);
    return out;
}

/// Writes a MATPOWER version-2 case that parse_matpower reads back to an
/// equivalent NetworkCase (series admittance round-trips through r + jx).
inline std::string emit_matpower(const NetworkCase& c, const std::string& name = "pffa_case") {
    using detail::format_double;
    std::ostringstream os;
    const double base = c.base_mva;
    os << "function mpc = " << name << "\n\n";
    os << "mpc.version = '2';\n";
    os << "mpc.baseMVA = " << format_double(base) << ";\n\n";

    std::unordered_map<int, std::pair<double, double>> load_sum;
    for (const auto& l : c.loads) {
        auto& s = load_sum[l.bus];
        s.first += l.p;
        s.second += l.q;
    }
    std::unordered_map<int, std::pair<double, double>> shunt_sum;
    for (const auto& s : c.shunts) {
        auto& t = shunt_sum[s.bus];
        t.first += s.g;
        t.second += s.b;
    }

    os << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    os << "mpc.bus = [\n";
    for (const auto& b : c.buses) {
        const int type = b.kind == BusKind::Slack ? 3 : b.kind == BusKind::PV ? 2 : 1;
        const auto ld = load_sum.contains(b.id) ? load_sum[b.id] : std::pair{0.0, 0.0};
        const auto sh = shunt_sum.contains(b.id) ? shunt_sum[b.id] : std::pair{0.0, 0.0};
        const double vm = b.v_init.value_or(b.kind == BusKind::PQ ? 1.0 : b.v_set);
        const double va = b.angle_init.value_or(b.kind == BusKind::Slack ? b.angle_set : 0.0);
        os << '\t' << b.id << '\t' << type << '\t' << format_double(ld.first * base) << '\t'
           << format_double(ld.second * base) << '\t' << format_double(sh.first * base) << '\t'
           << format_double(sh.second * base) << "\t1\t" << format_double(vm) << '\t'
           << format_double(b.kind == BusKind::Slack ? b.angle_set / detail::deg : va / detail::deg)
           << "\t1\t1\t1.1\t0.9;\n";
    }
    os << "];\n\n";

    os << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
    os << "mpc.gen = [\n";
    for (const auto& g : c.generators) {
        os << '\t' << g.bus << '\t' << format_double(g.p_set * base) << "\t0\t"
           << format_double(g.q_max * base) << '\t' << format_double(g.q_min * base) << '\t'
           << format_double(g.v_set) << '\t' << format_double(base) << "\t1\t0\t0;\n";
    }
    os << "];\n\n";

    os << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n";
    os << "mpc.branch = [\n";
    for (const auto& br : c.branches) {
        const auto z = 1.0 / std::complex<double>(br.g_series, br.b_series);
        os << '\t' << br.from_bus << '\t' << br.to_bus << '\t' << format_double(z.real()) << '\t'
           << format_double(z.imag()) << '\t' << format_double(br.b_shunt_total) << "\t0\t0\t0\t"
           << format_double(br.tap) << '\t' << format_double(br.phase_shift / detail::deg) << '\t'
           << (br.in_service ? 1 : 0) << "\t-360\t360;\n";
    }
    os << "];\n";
    return os.str();
}

// Native JSON schema ("pffa-case", version 1). Unbounded reactive limits are
// written as null. Bus kinds are "slack", "pv", "pq".
inline constexpr int kCaseSchemaVersion = 1;

inline std::string emit_native_json(const NetworkCase& c, int indent = 1) {
    using nlohmann::json;
    auto limit = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json j;
    j["format"] = "pffa-case";
    j["version"] = kCaseSchemaVersion;
    j["base_mva"] = c.base_mva;
    j["buses"] = json::array();
    for (const auto& b : c.buses) {
        json jb;
        jb["id"] = b.id;
        jb["kind"] = b.kind == BusKind::Slack ? "slack" : b.kind == BusKind::PV ? "pv" : "pq";
        jb["v_set"] = b.v_set;
        jb["angle_set"] = b.angle_set;
        if (b.v_init) jb["v_init"] = *b.v_init;
        if (b.angle_init) jb["angle_init"] = *b.angle_init;
        j["buses"].push_back(jb);
    }
    j["branches"] = json::array();
    for (const auto& br : c.branches) {
        j["branches"].push_back({{"from", br.from_bus},
                                 {"to", br.to_bus},
                                 {"g_series", br.g_series},
                                 {"b_series", br.b_series},
                                 {"b_shunt_total", br.b_shunt_total},
                                 {"tap", br.tap},
                                 {"phase_shift", br.phase_shift},
                                 {"in_service", br.in_service}});
    }
    j["generators"] = json::array();
    for (const auto& g : c.generators) {
        j["generators"].push_back({{"bus", g.bus},
                                   {"p_set", g.p_set},
                                   {"q_min", limit(g.q_min)},
                                   {"q_max", limit(g.q_max)},
                                   {"v_set", g.v_set}});
    }
    j["loads"] = json::array();
    for (const auto& l : c.loads) j["loads"].push_back({{"bus", l.bus}, {"p", l.p}, {"q", l.q}});
    j["shunts"] = json::array();
    for (const auto& s : c.shunts) j["shunts"].push_back({{"bus", s.bus}, {"g", s.g}, {"b", s.b}});
    return j.dump(indent);
}

inline NetworkCase parse_native_json(const std::string& text) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw CaseError(CaseErrorKind::MalformedRow, e.what());
    }
    if (!j.is_object()) throw CaseError(CaseErrorKind::MissingSection, "top level must be an object");
    for (const char* key : {"base_mva", "buses", "branches"}) {
        if (!j.contains(key)) throw CaseError(CaseErrorKind::MissingSection, key);
    }
    if (j.contains("version") && j["version"].get<int>() > kCaseSchemaVersion)
        throw CaseError(CaseErrorKind::InvalidValue, "unsupported case schema version");

    auto number = [](const json& obj, const char* key, double fallback, bool required) {
        if (!obj.contains(key) || obj[key].is_null()) {
            if (required) throw CaseError(CaseErrorKind::MissingSection, key);
            return fallback;
        }
        if (!obj[key].is_number()) throw CaseError(CaseErrorKind::MalformedRow, key);
        return obj[key].get<double>();
    };
    auto integer = [](const json& obj, const char* key) {
        if (!obj.contains(key) || !obj[key].is_number_integer())
            throw CaseError(CaseErrorKind::MalformedRow, std::string("integer field ") + key);
        return obj[key].get<int>();
    };
    constexpr double inf = std::numeric_limits<double>::infinity();

    NetworkCase c;
    c.base_mva = number(j, "base_mva", 0.0, true);
    for (const auto& jb : j["buses"]) {
        Bus b;
        b.id = integer(jb, "id");
        const auto kind = jb.value("kind", std::string("pq"));
        if (kind == "slack") b.kind = BusKind::Slack;
        else if (kind == "pv") b.kind = BusKind::PV;
        else if (kind == "pq") b.kind = BusKind::PQ;
        else throw CaseError(CaseErrorKind::InvalidValue, "bus kind '" + kind + "'");
        b.v_set = number(jb, "v_set", 1.0, false);
        b.angle_set = number(jb, "angle_set", 0.0, false);
        if (jb.contains("v_init")) b.v_init = number(jb, "v_init", 1.0, true);
        if (jb.contains("angle_init")) b.angle_init = number(jb, "angle_init", 0.0, true);
        c.buses.push_back(b);
    }
    for (const auto& jb : j["branches"]) {
        Branch br;
        br.from_bus = integer(jb, "from");
        br.to_bus = integer(jb, "to");
        br.g_series = number(jb, "g_series", 0.0, true);
        br.b_series = number(jb, "b_series", 0.0, true);
        br.b_shunt_total = number(jb, "b_shunt_total", 0.0, false);
        br.tap = number(jb, "tap", 1.0, false);
        br.phase_shift = number(jb, "phase_shift", 0.0, false);
        br.in_service = jb.value("in_service", true);
        c.branches.push_back(br);
    }
    if (j.contains("generators")) {
        for (const auto& jg : j["generators"]) {
            Generator g;
            g.bus = integer(jg, "bus");
            g.p_set = number(jg, "p_set", 0.0, false);
            g.q_min = number(jg, "q_min", -inf, false);
            g.q_max = number(jg, "q_max", inf, false);
            g.v_set = number(jg, "v_set", 1.0, false);
            c.generators.push_back(g);
        }
    }
    if (j.contains("loads")) {
        for (const auto& jl : j["loads"])
            c.loads.push_back({integer(jl, "bus"), number(jl, "p", 0.0, true), number(jl, "q", 0.0, true)});
    }
    if (j.contains("shunts")) {
        for (const auto& js : j["shunts"])
            c.shunts.push_back({integer(js, "bus"), number(js, "g", 0.0, false), number(js, "b", 0.0, false)});
    }
    validate(c);
    return c;
}

/// Reads a case from disk: native JSON for a .json extension, MATPOWER otherwise.
inline NetworkCase load_case(const std::string& path, std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open case file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    return json ? parse_native_json(ss.str()) : parse_matpower(ss.str(), warnings);
}

enum class LoadingMode { LoadsOnly, LoadsAndGeneration };

inline NetworkCase apply_loading_factor(const NetworkCase& c, double factor,
                                        LoadingMode mode = LoadingMode::LoadsOnly) {
    if (!(factor >= 0.0) || !std::isfinite(factor))
        throw CaseError(CaseErrorKind::NegativeFactor, std::to_string(factor));
    NetworkCase out = c;
    for (auto& l : out.loads) {
        l.p *= factor;
        l.q *= factor;
    }
    if (mode == LoadingMode::LoadsAndGeneration) {
        for (auto& g : out.generators) g.p_set *= factor;
    }
    return out;
}

/// Index into `branches` of the `ordinal`-th (1-based, file order) branch
/// joining the two buses in either direction.
inline std::size_t find_branch(const NetworkCase& c, int from_bus, int to_bus, int ordinal = 1) {
    int seen = 0;
    for (std::size_t i = 0; i < c.branches.size(); ++i) {
        const auto& br = c.branches[i];
        const bool match = (br.from_bus == from_bus && br.to_bus == to_bus) ||
                           (br.from_bus == to_bus && br.to_bus == from_bus);
        if (match && ++seen == ordinal) return i;
    }
    throw CaseError(CaseErrorKind::BranchNotFound, std::to_string(from_bus) + "-" +
                                                       std::to_string(to_bus) + " #" +
                                                       std::to_string(ordinal));
}

/// Takes one branch out of service. Throws Islanded rather than returning a
/// disconnected network.
inline NetworkCase remove_branch(const NetworkCase& c, int from_bus, int to_bus, int ordinal = 1) {
    const auto idx = find_branch(c, from_bus, to_bus, ordinal);
    if (!c.branches[idx].in_service)
        throw CaseError(CaseErrorKind::BranchNotFound, "branch " + std::to_string(from_bus) + "-" +
                                                           std::to_string(to_bus) +
                                                           " is already out of service");
    NetworkCase out = c;
    out.branches[idx].in_service = false;
    const auto parts = islands(out);
    if (parts.size() > 1) {
        std::string detail = "removing " + std::to_string(from_bus) + "-" + std::to_string(to_bus) +
                             " splits the network into " + std::to_string(parts.size()) + " islands";
        throw CaseError(CaseErrorKind::Islanded, detail);
    }
    return out;
}

}  // namespace pffa
