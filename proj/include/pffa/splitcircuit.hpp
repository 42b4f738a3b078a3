#pragma once

// Power-flow side element models in split (real/imaginary) form.
//
// Every element current is the current leaving its bus into the element, so
// the KCL row of a bus is the plain sum of element currents minus any
// injected feasibility current. Generators inject current: they reuse the
// constant-power load expressions with P = -P_G and Q = -Q_G.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pffa/casefile.hpp"
#include "pffa/index_map.hpp"

namespace pffa {

using Phasor = std::complex<double>;

inline constexpr double kDefaultVoltageFloor = 1e-4;

class VoltageCollapseError : public std::runtime_error {
  public:
    VoltageCollapseError(double magnitude, double floor)
        : std::runtime_error("voltage magnitude " + std::to_string(magnitude) +
                             " below floor " + std::to_string(floor)),
          magnitude_(magnitude) {}
    double magnitude() const { return magnitude_; }

  private:
    double magnitude_;
};

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;

    bool operator==(const Triplet&) const = default;
};

/// Matrix and right-hand-side contributions of one or more elements.
struct StampSet {
    std::vector<Triplet> triplets;
    std::vector<std::pair<std::size_t, double>> rhs;

    void add(std::size_t row, std::size_t col, double value) { triplets.push_back({row, col, value}); }
    void add_rhs(std::size_t row, double value) { rhs.emplace_back(row, value); }
    void append(const StampSet& other) {
        triplets.insert(triplets.end(), other.triplets.begin(), other.triplets.end());
        rhs.insert(rhs.end(), other.rhs.begin(), other.rhs.end());
    }

    /// Complex admittance y from the voltage of bus `col` into the KCL of bus `row`.
    void add_complex(const IndexMap::BusSlots& row, const IndexMap::BusSlots& col, Phasor y) {
        add(row.vr, col.vr, y.real());
        add(row.vr, col.vi, -y.imag());
        add(row.vi, col.vr, y.imag());
        add(row.vi, col.vi, y.real());
    }
};

template <std::size_t N>
using Block = std::array<std::array<double, N>, N>;

/// First-order model `value ~= jacobian * x + alpha` of a nonlinear element
/// around the linearization point.
///
/// For a PQ load the unknowns are (V_R, V_I) and `value` holds (I_R, I_I).
/// For a PV generator the unknowns are (V_R, V_I, Q_G) and the third entry of
/// `value` is the control-equation residual (|V|^2 - |V_S|^2 when regulating).
template <std::size_t N>
struct ElementLinearization {
    Block<N> jacobian{};
    std::array<double, N> alpha{};
    std::array<double, N> value{};
};

using LoadLinearization = ElementLinearization<2>;
using GeneratorLinearization = ElementLinearization<3>;

// ---------------------------------------------------------------- homotopy

/// Position on the Tx-stepping path. mu = 0 is the original network.
struct HomotopyPoint {
    double mu = 0.0;
    double y_scale = 100.0;
};

inline double series_scale(const HomotopyPoint& h) { return h.mu * h.y_scale + 1.0; }
inline double effective_tap(double tap, double mu) { return tap + (1.0 - tap) * mu; }
inline double effective_phase_shift(double shift, double mu) { return (1.0 - mu) * shift; }

// ---------------------------------------------------------------- branches

struct LineCurrents {
    Phasor series;      ///< from -> to through the series admittance
    Phasor shunt_from;  ///< into the charging half at the from end
    Phasor shunt_to;
};

inline LineCurrents line_currents(double g, double b, Phasor v_from, Phasor v_to, double b_sh) {
    const Phasor drop = v_from - v_to;
    LineCurrents out;
    out.series = {g * drop.real() - b * drop.imag(), g * drop.imag() + b * drop.real()};
    const double half = 0.5 * b_sh;
    out.shunt_from = {-half * v_from.imag(), half * v_from.real()};
    out.shunt_to = {-half * v_to.imag(), half * v_to.real()};
    return out;
}

/// Bus admittance contributions [I_f; I_t] = [yff yft; ytf ytt][V_f; V_t].
struct TwoPort {
    Phasor yff, yft, ytf, ytt;
};

/// Pi model behind an ideal t*e^{j*shift} transformer on the from side, with
/// the homotopy scaling applied to the series admittance, tap and shift.
inline TwoPort branch_two_port(const Branch& br, const HomotopyPoint& h = {}) {
    if (!(br.tap > 0.0)) throw std::invalid_argument("transformer tap must be positive");
    const Phasor ys = series_scale(h) * Phasor(br.g_series, br.b_series);
    const Phasor ysh(0.0, 0.5 * br.b_shunt_total);
    const double t = effective_tap(br.tap, h.mu);
    const Phasor ratio = std::polar(t, effective_phase_shift(br.phase_shift, h.mu));
    return {(ys + ysh) / (t * t), -ys / std::conj(ratio), -ys / ratio, ys + ysh};
}

namespace detail {

inline StampSet stamp_two_port(const Branch& br, const IndexMap& idx, const TwoPort& y) {
    StampSet s;
    const auto& f = idx.bus[idx.bus_position.at(br.from_bus)];
    const auto& t = idx.bus[idx.bus_position.at(br.to_bus)];
    s.triplets.reserve(16);
    s.add_complex(f, f, y.yff);
    s.add_complex(f, t, y.yft);
    s.add_complex(t, f, y.ytf);
    s.add_complex(t, t, y.ytt);
    return s;
}

}  // namespace detail

inline StampSet stamp_line(const Branch& br, const IndexMap& idx, const HomotopyPoint& h = {}) {
    if (br.is_transformer()) throw std::invalid_argument("stamp_line called on a transformer branch");
    return detail::stamp_two_port(br, idx, branch_two_port(br, h));
}

inline StampSet stamp_transformer(const Branch& br, const IndexMap& idx, const HomotopyPoint& h = {}) {
    return detail::stamp_two_port(br, idx, branch_two_port(br, h));
}

inline StampSet stamp_branch(const Branch& br, const IndexMap& idx, const HomotopyPoint& h = {}) {
    return br.is_transformer() ? stamp_transformer(br, idx, h) : stamp_line(br, idx, h);
}

inline StampSet stamp_shunt(const FixedShunt& sh, const IndexMap& idx) {
    StampSet s;
    const auto& k = idx.bus[idx.bus_position.at(sh.bus)];
    s.add_complex(k, k, Phasor(sh.g, sh.b));
    return s;
}

/// Slack voltage source: its current is injected into the bus KCL rows and
/// the paired rows pin the bus voltage to v_set at angle_set.
inline StampSet stamp_slack(const Bus& bus, const IndexMap& idx) {
    if (bus.kind != BusKind::Slack) throw std::invalid_argument("stamp_slack on a non-slack bus");
    StampSet s;
    const auto& k = idx.bus[idx.bus_position.at(bus.id)];
    s.add(k.vr, idx.slack_ir, -1.0);
    s.add(k.vi, idx.slack_ii, -1.0);
    s.add(idx.slack_ir, k.vr, 1.0);
    s.add(idx.slack_ii, k.vi, 1.0);
    const Phasor target = std::polar(bus.v_set, bus.angle_set);
    s.add_rhs(idx.slack_ir, target.real());
    s.add_rhs(idx.slack_ii, target.imag());
    return s;
}

// ---------------------------------------------------- constant-power models

inline void check_voltage_floor(Phasor v, double floor) {
    const double mag = std::abs(v);
    if (!(mag >= floor)) throw VoltageCollapseError(mag, floor);
}

/// Current drawn by a constant-power element absorbing p + jq.
inline Phasor pq_load_currents(double p, double q, Phasor v, double floor = kDefaultVoltageFloor) {
    check_voltage_floor(v, floor);
    const double vr = v.real(), vi = v.imag();
    const double m = vr * vr + vi * vi;
    return {(p * vr + q * vi) / m, (p * vi - q * vr) / m};
}

namespace detail {

/// Partials of the constant-power current w.r.t. (V_R, V_I). The block is
/// [[a, b], [b, -a]] with a + jb = -(p - jq) / conj(V)^2.
inline Block<2> pq_current_jacobian(double p, double q, Phasor v) {
    const Phasor c = -Phasor(p, -q) / (std::conj(v) * std::conj(v));
    return {{{c.real(), c.imag()}, {c.imag(), -c.real()}}};
}

template <std::size_t N>
inline std::array<double, N> legacy_terms(const Block<N>& jac, const std::array<double, N>& value,
                                          const std::array<double, N>& x) {
    std::array<double, N> alpha{};
    for (std::size_t i = 0; i < N; ++i) {
        alpha[i] = value[i];
        for (std::size_t j = 0; j < N; ++j) alpha[i] -= jac[i][j] * x[j];
    }
    return alpha;
}

}  // namespace detail

inline LoadLinearization linearize_pq_load(const Load& load, Phasor v_prev,
                                           double floor = kDefaultVoltageFloor) {
    LoadLinearization lin;
    const Phasor i = pq_load_currents(load.p, load.q, v_prev, floor);
    lin.value = {i.real(), i.imag()};
    lin.jacobian = detail::pq_current_jacobian(load.p, load.q, v_prev);
    lin.alpha = detail::legacy_terms<2>(lin.jacobian, lin.value, {v_prev.real(), v_prev.imag()});
    return lin;
}

/// Reactive-limit segment a PV generator currently sits on.
enum class GeneratorMode { Regulating, AtQmax, AtQmin };

inline const char* to_string(GeneratorMode m) {
    switch (m) {
        case GeneratorMode::Regulating: return "regulating";
        case GeneratorMode::AtQmax: return "at_qmax";
        case GeneratorMode::AtQmin: return "at_qmin";
    }
    return "?";
}

/// Generator injection current (P = -P_G, Q = -Q_G in the load expressions).
inline Phasor generator_currents(double p_set, double q_g, Phasor v, double floor = kDefaultVoltageFloor) {
    return pq_load_currents(-p_set, -q_g, v, floor);
}

/// Control equation of a PV generator: the voltage-magnitude constraint while
/// regulating, or Q_G pinned to the violated limit after a PV/PQ switch.
inline double generator_control_residual(const Generator& gen, Phasor v, double q_g, GeneratorMode mode) {
    switch (mode) {
        case GeneratorMode::AtQmax: return q_g - gen.q_max;
        case GeneratorMode::AtQmin: return q_g - gen.q_min;
        case GeneratorMode::Regulating: break;
    }
    return std::norm(v) - gen.v_set * gen.v_set;
}

inline GeneratorLinearization linearize_pv_generator(const Generator& gen, Phasor v_prev, double q_prev,
                                                     GeneratorMode mode = GeneratorMode::Regulating,
                                                     double floor = kDefaultVoltageFloor) {
    GeneratorLinearization lin;
    const Phasor i = generator_currents(gen.p_set, q_prev, v_prev, floor);
    const double vr = v_prev.real(), vi = v_prev.imag();
    const double m = vr * vr + vi * vi;
    const auto dv = detail::pq_current_jacobian(-gen.p_set, -q_prev, v_prev);
    lin.jacobian[0] = {dv[0][0], dv[0][1], -vi / m};
    lin.jacobian[1] = {dv[1][0], dv[1][1], vr / m};
    if (mode == GeneratorMode::Regulating) lin.jacobian[2] = {2.0 * vr, 2.0 * vi, 0.0};
    else lin.jacobian[2] = {0.0, 0.0, 1.0};
    lin.value = {i.real(), i.imag(), generator_control_residual(gen, v_prev, q_prev, mode)};
    lin.alpha = detail::legacy_terms<3>(lin.jacobian, lin.value, {vr, vi, q_prev});
    return lin;
}

}  // namespace pffa
