#pragma once

// Assembly of the power-flow system and of the coupled power-flow/adjoint
// system with feasibility current sources.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "pffa/adjointcircuit.hpp"
#include "pffa/casefile.hpp"
#include "pffa/index_map.hpp"
#include "pffa/sparse_lu.hpp"
#include "pffa/splitcircuit.hpp"

namespace pffa {

/// Buses that receive a feasibility current source pair.
struct PlacementPolicy {
    enum class Kind { AllBuses, LoadBusesAndShunts, ExplicitSet };

    Kind kind = Kind::AllBuses;
    std::vector<int> bus_ids;  ///< ExplicitSet only

    static PlacementPolicy all_buses() { return {}; }
    static PlacementPolicy load_buses_and_shunts() { return {Kind::LoadBusesAndShunts, {}}; }
    static PlacementPolicy explicit_set(std::vector<int> ids) { return {Kind::ExplicitSet, std::move(ids)}; }

    bool operator==(const PlacementPolicy&) const = default;
};

/// Bus positions selected by a placement policy, ascending.
inline std::vector<std::size_t> placed_buses(const NetworkCase& c, const IndexMap& idx, const PlacementPolicy& p) {
    std::vector<std::size_t> out;
    switch (p.kind) {
        case PlacementPolicy::Kind::AllBuses:
            for (std::size_t k = 0; k < c.buses.size(); ++k) out.push_back(k);
            break;
        case PlacementPolicy::Kind::LoadBusesAndShunts: {
            std::unordered_set<std::size_t> chosen;
            for (const auto& l : c.loads)
                if (l.p != 0.0 || l.q != 0.0) chosen.insert(idx.bus_position.at(l.bus));
            for (const auto& s : c.shunts) chosen.insert(idx.bus_position.at(s.bus));
            out.assign(chosen.begin(), chosen.end());
            break;
        }
        case PlacementPolicy::Kind::ExplicitSet: {
            std::unordered_set<std::size_t> chosen;
            for (int id : p.bus_ids) {
                const auto it = idx.bus_position.find(id);
                if (it == idx.bus_position.end())
                    throw CaseError(CaseErrorKind::UnresolvableBus,
                                    "placement names bus " + std::to_string(id));
                chosen.insert(it->second);
            }
            out.assign(chosen.begin(), chosen.end());
            break;
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Unknown vector [x; lambda] laid out by an IndexMap.
struct StateVector {
    std::shared_ptr<const IndexMap> map;
    std::vector<double> values;

    StateVector() = default;
    explicit StateVector(std::shared_ptr<const IndexMap> m) : map(std::move(m)), values(map->dim, 0.0) {}

    std::size_t size() const { return values.size(); }
    const IndexMap& index() const { return *map; }

    Phasor voltage(std::size_t bus_pos) const {
        const auto& s = map->bus[bus_pos];
        return {values[s.vr], values[s.vi]};
    }
    void set_voltage(std::size_t bus_pos, Phasor v) {
        const auto& s = map->bus[bus_pos];
        values[s.vr] = v.real();
        values[s.vi] = v.imag();
    }
    Phasor lambda(std::size_t bus_pos) const {
        if (!map->coupled()) return {};
        return {values[map->lambda_r(bus_pos)], values[map->lambda_i(bus_pos)]};
    }
    void set_lambda(std::size_t bus_pos, Phasor l) {
        values[map->lambda_r(bus_pos)] = l.real();
        values[map->lambda_i(bus_pos)] = l.imag();
    }
    double q_g(std::size_t pv_slot) const { return values[map->pv[pv_slot].q]; }
    double lambda_v(std::size_t pv_slot) const { return map->coupled() ? values[map->lambda_v(pv_slot)] : 0.0; }
    /// Current delivered by the slack source into its bus.
    Phasor slack_current() const { return {values[map->slack_ir], values[map->slack_ii]}; }
};

struct AssemblyOptions {
    HomotopyPoint homotopy{};
    PlacementPolicy placement{};
    double voltage_floor = kDefaultVoltageFloor;
    /// Reactive segment per PV slot; empty means every generator regulates.
    std::vector<GeneratorMode> generator_modes;
};

/// A x = rhs is the linearized system at the assembly point z; `residual` is
/// the nonlinear equation residual F(z), so rhs = A z - F(z).
struct AssembledSystem {
    std::size_t dimension = 0;
    CscMatrix matrix;
    std::vector<double> rhs;
    std::vector<double> residual;
};

class SystemAssembler {
  public:
    SystemAssembler(NetworkCase c, std::shared_ptr<const IndexMap> map, AssemblyOptions opts = {})
        : case_(std::move(c)), map_(std::move(map)), opts_(std::move(opts)) {
        const auto& idx = *map_;
        if (case_.buses.size() != idx.bus.size()) throw std::invalid_argument("index map built for another case");
        for (const auto& l : case_.loads) load_pos_.push_back(idx.bus_position.at(l.bus));
        placed_ = placed_buses(case_, idx, opts_.placement);
        if (opts_.generator_modes.empty()) opts_.generator_modes.assign(idx.pv.size(), GeneratorMode::Regulating);
        if (opts_.generator_modes.size() != idx.pv.size())
            throw std::invalid_argument("generator mode list does not match PV count");
        build_linear();
    }

    const IndexMap& index_map() const { return *map_; }
    std::shared_ptr<const IndexMap> shared_index_map() const { return map_; }
    const NetworkCase& network() const { return case_; }
    const AssemblyOptions& options() const { return opts_; }
    const std::vector<std::size_t>& placed() const { return placed_; }

    void set_homotopy(const HomotopyPoint& h) {
        if (h.mu == opts_.homotopy.mu && h.y_scale == opts_.homotopy.y_scale) return;
        opts_.homotopy = h;
        build_linear();
    }

    void set_generator_modes(std::vector<GeneratorMode> modes) {
        if (modes.size() != map_->pv.size()) throw std::invalid_argument("generator mode list does not match PV count");
        opts_.generator_modes = std::move(modes);
    }

    /// State-independent stamps (branches, shunts, slack, their adjoints and
    /// the feasibility-source coupling).
    const StampSet& linear_stamps() const { return linear_; }

    /// Full triplet stream and rhs at z; residual optionally filled.
    StampSet stamps(const StateVector& z, std::vector<double>* residual = nullptr) const {
        check(z);
        const auto& idx = *map_;
        StampSet s = linear_;
        std::vector<double> rhs_dense;
        if (residual) {
            residual->assign(idx.dim, 0.0);
            for (const auto& t : linear_.triplets) (*residual)[t.row] += t.value * z.values[t.col];
            for (const auto& [r, v] : linear_.rhs) (*residual)[r] -= v;
        }
        const bool coupled = idx.coupled();

        for (std::size_t e = 0; e < case_.loads.size(); ++e) {
            const auto pos = load_pos_[e];
            const auto& b = idx.bus[pos];
            const std::array<std::size_t, 2> slots{b.vr, b.vi};
            const Phasor v = z.voltage(pos);
            const auto lin = linearize_pq_load(case_.loads[e], v, opts_.voltage_floor);
            stamp_element<2>(s, residual, slots, lin.jacobian, lin.alpha, lin.value);
            if (coupled) {
                const auto adj = adjoint_pq_block(case_.loads[e], v, z.lambda(pos), opts_.voltage_floor);
                stamp_adjoint<2>(s, residual, slots, adj);
            }
        }
        for (std::size_t g = 0; g < idx.pv.size(); ++g) {
            const auto& slot = idx.pv[g];
            const auto& b = idx.bus[slot.bus];
            const std::array<std::size_t, 3> slots{b.vr, b.vi, slot.q};
            const auto& gen = case_.generators[slot.generator];
            const Phasor v = z.voltage(slot.bus);
            const auto mode = opts_.generator_modes[g];
            const auto lin = linearize_pv_generator(gen, v, z.q_g(g), mode, opts_.voltage_floor);
            stamp_element<3>(s, residual, slots, lin.jacobian, lin.alpha, lin.value);
            if (coupled) {
                const auto adj = pv_pq_switch_adjoint(
                    gen, {v, z.q_g(g), z.lambda(slot.bus), z.lambda_v(g), mode}, opts_.voltage_floor);
                stamp_adjoint<3>(s, residual, slots, adj);
            }
        }
        return s;
    }

    AssembledSystem assemble(const StateVector& z) {
        AssembledSystem out;
        out.dimension = map_->dim;
        const StampSet s = stamps(z, &out.residual);
        out.matrix = compressor_.compress(out.dimension, s.triplets);
        out.rhs.assign(out.dimension, 0.0);
        for (const auto& [r, v] : s.rhs) out.rhs[r] += v;
        return out;
    }

    /// Nonlinear residual F(z) without forming the matrix.
    std::vector<double> residual(const StateVector& z) const {
        check(z);
        const auto& idx = *map_;
        std::vector<double> f(idx.dim, 0.0);
        for (const auto& t : linear_.triplets) f[t.row] += t.value * z.values[t.col];
        for (const auto& [r, v] : linear_.rhs) f[r] -= v;
        const bool coupled = idx.coupled();
        for (std::size_t e = 0; e < case_.loads.size(); ++e) {
            const auto pos = load_pos_[e];
            const auto& b = idx.bus[pos];
            const Phasor v = z.voltage(pos);
            const Phasor i = pq_load_currents(case_.loads[e].p, case_.loads[e].q, v, opts_.voltage_floor);
            f[b.vr] += i.real();
            f[b.vi] += i.imag();
            if (coupled) {
                const auto jac = detail::pq_current_jacobian(case_.loads[e].p, case_.loads[e].q, v);
                const Phasor l = z.lambda(pos);
                f[idx.adjoint(b.vr)] += jac[0][0] * l.real() + jac[1][0] * l.imag();
                f[idx.adjoint(b.vi)] += jac[0][1] * l.real() + jac[1][1] * l.imag();
            }
        }
        for (std::size_t g = 0; g < idx.pv.size(); ++g) {
            const auto& slot = idx.pv[g];
            const auto& b = idx.bus[slot.bus];
            const std::array<std::size_t, 3> slots{b.vr, b.vi, slot.q};
            const auto lin = linearize_pv_generator(case_.generators[slot.generator], z.voltage(slot.bus), z.q_g(g),
                                                    opts_.generator_modes[g], opts_.voltage_floor);
            for (std::size_t i = 0; i < 3; ++i) f[slots[i]] += lin.value[i];
            if (coupled) {
                const std::array<double, 3> l{z.values[idx.adjoint(slots[0])], z.values[idx.adjoint(slots[1])],
                                              z.values[idx.adjoint(slots[2])]};
                for (std::size_t j = 0; j < 3; ++j)
                    for (std::size_t i = 0; i < 3; ++i) f[idx.adjoint(slots[j])] += lin.jacobian[i][j] * l[i];
            }
        }
        return f;
    }

  private:
    void check(const StateVector& z) const {
        if (z.values.size() != map_->dim) throw std::invalid_argument("state dimension does not match index map");
    }

    void build_linear() {
        const auto& idx = *map_;
        StampSet pf;
        for (const auto& br : case_.branches)
            if (br.in_service) pf.append(stamp_branch(br, idx, opts_.homotopy));
        for (const auto& sh : case_.shunts) pf.append(stamp_shunt(sh, idx));
        pf.append(stamp_slack(case_.buses[idx.slack_bus], idx));
        linear_ = pf;
        if (idx.coupled()) {
            linear_.append(adjoint_stamp_linear(pf, idx));
            for (const auto pos : placed_) {
                const auto& b = idx.bus[pos];
                linear_.add(b.vr, idx.adjoint(b.vr), -1.0);
                linear_.add(b.vi, idx.adjoint(b.vi), -1.0);
            }
        }
    }

    template <std::size_t N>
    static void stamp_element(StampSet& s, std::vector<double>* residual, const std::array<std::size_t, N>& slots,
                              const Block<N>& jac, const std::array<double, N>& alpha,
                              const std::array<double, N>& value) {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < N; ++j) s.add(slots[i], slots[j], jac[i][j]);
            s.add_rhs(slots[i], -alpha[i]);
            if (residual) (*residual)[slots[i]] += value[i];
        }
    }

    template <std::size_t N>
    void stamp_adjoint(StampSet& s, std::vector<double>* residual, const std::array<std::size_t, N>& slots,
                       const AdjointLinearization<N>& adj) const {
        const auto& idx = *map_;
        for (std::size_t i = 0; i < N; ++i) {
            const auto row = idx.adjoint(slots[i]);
            for (std::size_t j = 0; j < N; ++j) {
                s.add(row, idx.adjoint(slots[j]), adj.transpose_block[i][j]);
                s.add(row, slots[j], adj.hessian_block[i][j]);
            }
            s.add_rhs(row, -adj.beta[i]);
            if (residual) (*residual)[row] += adj.current[i];
        }
    }

    NetworkCase case_;
    std::shared_ptr<const IndexMap> map_;
    AssemblyOptions opts_;
    std::vector<std::size_t> load_pos_;
    std::vector<std::size_t> placed_;
    StampSet linear_;
    TripletCompressor compressor_;
};

/// One-shot assembly at state z (the state carries its index map).
inline AssembledSystem assemble_coupled(const NetworkCase& c, const StateVector& z, const AssemblyOptions& opts = {}) {
    if (!z.map) throw std::invalid_argument("state has no index map");
    SystemAssembler a(c, z.map, opts);
    return a.assemble(z);
}

/// Canonical form of a triplet stream: sorted by (row, col) with duplicates summed.
inline std::vector<Triplet> canonical_triplets(std::vector<Triplet> t) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
        return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    std::vector<Triplet> out;
    for (const auto& e : t) {
        if (!out.empty() && out.back().row == e.row && out.back().col == e.col) out.back().value += e.value;
        else out.push_back(e);
    }
    return out;
}

/// Solves A dx = b for an assembled system.
inline std::vector<double> solve_linear(const CscMatrix& a, const std::vector<double>& b) {
    SparseLuSolver lu;
    return lu.solve(a, b);
}

inline std::vector<double> solve_linear(const AssembledSystem& s) { return solve_linear(s.matrix, s.rhs); }

}  // namespace pffa
