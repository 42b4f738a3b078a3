#pragma once

// Adjoint-side stamps. Linear elements map to the transpose of their split
// block, which is the split form of the conjugate admittance. Nonlinear
// elements contribute J^T (adjoint rows, adjoint columns) and the
// second-order block d(J^T lambda)/dx (adjoint rows, power-flow columns).

#include <array>
#include <complex>
#include <cstddef>

#include "pffa/index_map.hpp"
#include "pffa/splitcircuit.hpp"

namespace pffa {

/// Linearization of the nonlinear adjoint current J(x)^T lambda:
/// current ~= hessian_block * x + transpose_block * lambda + beta.
template <std::size_t N>
struct AdjointLinearization {
    Block<N> transpose_block{};
    Block<N> hessian_block{};
    std::array<double, N> current{};
    std::array<double, N> beta{};
};

using LoadAdjoint = AdjointLinearization<2>;
using GeneratorAdjoint = AdjointLinearization<3>;

/// Transposes power-flow stamps into the adjoint block. Independent sources
/// open (rhs dropped) and the slack source becomes a zero-voltage source.
inline StampSet adjoint_stamp_linear(const StampSet& pf, const IndexMap& idx) {
    StampSet out;
    out.triplets.reserve(pf.triplets.size());
    for (const auto& t : pf.triplets) out.add(idx.adjoint(t.col), idx.adjoint(t.row), t.value);
    return out;
}

namespace detail {

template <std::size_t N>
inline Block<N> transpose(const Block<N>& b) {
    Block<N> t{};
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) t[j][i] = b[i][j];
    return t;
}

template <std::size_t N>
inline void finish_adjoint(AdjointLinearization<N>& adj, const std::array<double, N>& x,
                           const std::array<double, N>& lambda) {
    for (std::size_t i = 0; i < N; ++i) {
        double cur = 0.0, hx = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            cur += adj.transpose_block[i][j] * lambda[j];
            hx += adj.hessian_block[i][j] * x[j];
        }
        adj.current[i] = cur;
        adj.beta[i] = -hx;
    }
}

/// d(a + jb)/dV_R for the constant-power Jacobian entries, i.e. 2*conj(S)/conj(V)^3.
inline Phasor pq_second_derivative(double p, double q, Phasor v) {
    const Phasor vc = std::conj(v);
    return 2.0 * Phasor(p, -q) / (vc * vc * vc);
}

/// Second-order terms shared by loads and generators: derivative of
/// [[a, b], [b, -a]]^T (lam_r, lam_i) with respect to (V_R, V_I).
inline Block<2> pq_hessian(double p, double q, Phasor v, Phasor lambda) {
    const Phasor d = pq_second_derivative(p, q, v);
    const double lr = lambda.real(), li = lambda.imag();
    const double off = d.imag() * lr - d.real() * li;
    return {{{d.real() * lr + d.imag() * li, off}, {off, -d.real() * lr - d.imag() * li}}};
}

}  // namespace detail

inline LoadAdjoint adjoint_pq_block(const Load& load, Phasor v_prev, Phasor lambda_prev,
                                    double floor = kDefaultVoltageFloor) {
    const auto lin = linearize_pq_load(load, v_prev, floor);
    LoadAdjoint adj;
    adj.transpose_block = detail::transpose(lin.jacobian);
    adj.hessian_block = detail::pq_hessian(load.p, load.q, v_prev, lambda_prev);
    detail::finish_adjoint<2>(adj, {v_prev.real(), v_prev.imag()}, {lambda_prev.real(), lambda_prev.imag()});
    return adj;
}

/// Linearization point of a PV generator for the adjoint side.
struct GeneratorState {
    Phasor v;
    double q_g = 0.0;
    Phasor lambda;
    double lambda_v = 0.0;
    GeneratorMode mode = GeneratorMode::Regulating;
};

/// Adjoint block of a generator on whichever reactive segment it occupies.
/// When pinned, the control row is Q_G = limit, so lambda_v couples only to
/// the Q_G adjoint row and the magnitude-constraint curvature disappears.
inline GeneratorAdjoint pv_pq_switch_adjoint(const Generator& gen, const GeneratorState& s,
                                             double floor = kDefaultVoltageFloor) {
    const auto lin = linearize_pv_generator(gen, s.v, s.q_g, s.mode, floor);
    GeneratorAdjoint adj;
    adj.transpose_block = detail::transpose(lin.jacobian);

    const double x = s.v.real(), y = s.v.imag();
    const double lr = s.lambda.real(), li = s.lambda.imag();
    const double m = x * x + y * y;
    const auto hv = detail::pq_hessian(-gen.p_set, -s.q_g, s.v, s.lambda);
    // Q_G derivative of the (a, b) entries: -j / conj(V)^2.
    const double er = 2.0 * x * y / (m * m);
    const double ei = (y * y - x * x) / (m * m);
    const double hq0 = er * lr + ei * li;
    const double hq1 = ei * lr - er * li;
    const double g = (x * li - y * lr) / m;
    const double curv = s.mode == GeneratorMode::Regulating ? 2.0 * s.lambda_v : 0.0;

    adj.hessian_block[0] = {hv[0][0] + curv, hv[0][1], hq0};
    adj.hessian_block[1] = {hv[1][0], hv[1][1] + curv, hq1};
    adj.hessian_block[2] = {li / m - 2.0 * x * g / m, -lr / m - 2.0 * y * g / m, 0.0};

    detail::finish_adjoint<3>(adj, {x, y, s.q_g}, {lr, li, s.lambda_v});
    return adj;
}

inline GeneratorAdjoint adjoint_pv_block(const Generator& gen, Phasor v_prev, double q_prev, Phasor lambda_prev,
                                         double lambda_v_prev, double floor = kDefaultVoltageFloor) {
    return pv_pq_switch_adjoint(gen, {v_prev, q_prev, lambda_prev, lambda_v_prev, GeneratorMode::Regulating},
                                floor);
}

}  // namespace pffa
