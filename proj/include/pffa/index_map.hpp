#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "pffa/casefile.hpp"

namespace pffa {

enum class SystemMode { PowerFlowOnly, Coupled };

/// Variable layout shared by every stamp.
///
/// Power-flow unknowns occupy [0, pf_dim): V_R/V_I per bus, then the two slack
/// source currents, then one Q_G per PV generator. Each unknown is paired with
/// the equation that shares its index (KCL real/imag, slack voltage rows,
/// voltage-magnitude rows), so the power-flow Jacobian is square. In Coupled
/// mode the multiplier of power-flow equation i lives at pf_dim + i, and row
/// pf_dim + j is the adjoint equation of power-flow unknown j.
struct IndexMap {
    struct BusSlots {
        std::size_t vr;
        std::size_t vi;
    };
    struct PvSlots {
        std::size_t bus;        ///< bus position
        std::size_t generator;  ///< index into NetworkCase::generators
        std::size_t q;          ///< Q_G unknown / voltage-magnitude row
    };

    SystemMode mode = SystemMode::PowerFlowOnly;
    std::size_t pf_dim = 0;
    std::size_t dim = 0;
    std::vector<int> bus_ids;
    std::unordered_map<int, std::size_t> bus_position;
    std::vector<BusSlots> bus;
    std::size_t slack_bus = 0;
    std::size_t slack_ir = 0;
    std::size_t slack_ii = 0;
    std::vector<PvSlots> pv;
    /// PV slot per bus position, or npos.
    std::vector<std::size_t> pv_at_bus;

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    bool coupled() const { return mode == SystemMode::Coupled; }
    std::size_t adjoint(std::size_t pf_index) const { return pf_dim + pf_index; }
    std::size_t lambda_r(std::size_t bus_pos) const { return adjoint(bus[bus_pos].vr); }
    std::size_t lambda_i(std::size_t bus_pos) const { return adjoint(bus[bus_pos].vi); }
    std::size_t lambda_v(std::size_t pv_slot) const { return adjoint(pv[pv_slot].q); }

    /// Human-readable name of an unknown, for diagnostics.
    std::string describe(std::size_t index) const {
        if (index >= dim) return "index " + std::to_string(index) + " (out of range)";
        const bool adj = index >= pf_dim;
        const std::size_t k = adj ? index - pf_dim : index;
        std::string what;
        if (k < 2 * bus.size()) {
            what = std::string(adj ? (k % 2 ? "lambda_I" : "lambda_R") : (k % 2 ? "V_I" : "V_R")) +
                   " at bus " + std::to_string(bus_ids[k / 2]);
        } else if (k == slack_ir || k == slack_ii) {
            what = std::string(adj ? "slack voltage multiplier" : "slack source current") +
                   (k == slack_ir ? " (real)" : " (imag)") + " at bus " +
                   std::to_string(bus_ids[slack_bus]);
        } else {
            const auto& slot = pv[k - slack_ii - 1];
            what = std::string(adj ? "lambda_V" : "Q_G") + " at bus " + std::to_string(bus_ids[slot.bus]);
        }
        return what + " [index " + std::to_string(index) + "]";
    }
};

inline IndexMap build_index_map(const NetworkCase& c, SystemMode mode) {
    IndexMap m;
    m.mode = mode;
    const std::size_t n = c.buses.size();
    m.bus_ids.reserve(n);
    m.bus.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        m.bus_ids.push_back(c.buses[k].id);
        m.bus_position.emplace(c.buses[k].id, k);
        m.bus.push_back({2 * k, 2 * k + 1});
    }
    m.slack_bus = c.slack_position();
    m.slack_ir = 2 * n;
    m.slack_ii = 2 * n + 1;
    m.pv_at_bus.assign(n, IndexMap::npos);
    std::size_t next = 2 * n + 2;
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto pos = m.bus_position.at(c.generators[g].bus);
        if (c.buses[pos].kind != BusKind::PV) continue;
        m.pv_at_bus[pos] = m.pv.size();
        m.pv.push_back({pos, g, next++});
    }
    m.pf_dim = next;
    m.dim = mode == SystemMode::Coupled ? 2 * next : next;
    return m;
}

}  // namespace pffa
