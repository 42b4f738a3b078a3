#pragma once

// Property suites shared by the unit tests and the acceptance binary:
// analytic derivative blocks against central differences, and first-order
// optimality of coupled solutions against an independent minimizer.

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"

namespace testing_support {

// ------------------------------------------------------------ derivatives

struct DerivativeSuiteResult {
    /// Worst relative error per derivative block over all sampled states.
    std::map<std::string, double> worst;
    int states = 0;

    double max_error() const {
        double m = 0.0;
        for (const auto& [name, e] : worst) m = std::max(m, e);
        return m;
    }
};

namespace detail {

template <std::size_t N>
Eigen::MatrixXd to_matrix(const pffa::Block<N>& b) {
    Eigen::MatrixXd m(N, N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) m(i, j) = b[i][j];
    return m;
}

inline void record(DerivativeSuiteResult& r, const std::string& name, double e) {
    auto& w = r.worst[name];
    w = std::max(w, e);
}

}  // namespace detail

/// Samples `states` random operating points (|V| in [0.5, 1.5], random
/// angle, random power and multipliers) and compares every analytic block of
/// the PQ load and PV generator models against central differences of the
/// element currents.
inline DerivativeSuiteResult run_derivative_suite(int states = 100, unsigned seed = 20240601, double h = 1e-6) {
    using pffa::GeneratorMode;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DerivativeSuiteResult r;
    r.states = states;
    for (int s = 0; s < states; ++s) {
        const cd v = random_phasor(rng);
        const cd lam(u(rng), u(rng));
        const double lam_v = u(rng);
        pffa::Load load{1, 2.0 * u(rng), 2.0 * u(rng)};

        // PQ load: I(V) and J(V)^T lambda.
        auto load_current = [&](const Eigen::VectorXd& x) {
            const auto i = pffa::pq_load_currents(load.p, load.q, cd(x(0), x(1)));
            return Eigen::Vector2d(i.real(), i.imag()).eval();
        };
        const Eigen::Vector2d xv(v.real(), v.imag());
        const auto lin = pffa::linearize_pq_load(load, v);
        const Eigen::MatrixXd fd_j = finite_difference(load_current, xv, h);
        detail::record(r, "pq jacobian", relative_error(detail::to_matrix<2>(lin.jacobian), fd_j));

        auto load_adjoint = [&](const Eigen::VectorXd& x) {
            const Eigen::MatrixXd j = finite_difference(load_current, x, h);
            return (j.transpose() * Eigen::Vector2d(lam.real(), lam.imag())).eval();
        };
        // d(J^T lambda)/dV from the analytic transpose block, differenced once.
        auto load_adjoint_analytic = [&](const Eigen::VectorXd& x) {
            const auto a = pffa::adjoint_pq_block(load, cd(x(0), x(1)), lam);
            return Eigen::Vector2d(a.current[0], a.current[1]).eval();
        };
        const auto adj = pffa::adjoint_pq_block(load, v, lam);
        detail::record(r, "pq adjoint current",
                       relative_error(load_adjoint_analytic(xv), load_adjoint(xv)));
        detail::record(r, "pq hessian",
                       relative_error(detail::to_matrix<2>(adj.hessian_block),
                                      finite_difference(load_adjoint_analytic, xv, h)));

        // PV generator in each reactive segment.
        pffa::Generator gen = generator(1, 1.5 * u(rng), 1.0 + 0.1 * u(rng), -1.0, 1.0);
        const double q = 1.5 * u(rng);
        for (const auto mode : {GeneratorMode::Regulating, GeneratorMode::AtQmax, GeneratorMode::AtQmin}) {
            const std::string tag = std::string("pv ") + pffa::to_string(mode);
            auto gen_value = [&](const Eigen::VectorXd& x) {
                const auto l = pffa::linearize_pv_generator(gen, cd(x(0), x(1)), x(2), mode);
                return Eigen::Vector3d(l.value[0], l.value[1], l.value[2]).eval();
            };
            const Eigen::Vector3d xg(v.real(), v.imag(), q);
            const auto glin = pffa::linearize_pv_generator(gen, v, q, mode);
            detail::record(r, tag + " jacobian",
                           relative_error(detail::to_matrix<3>(glin.jacobian), finite_difference(gen_value, xg, h)));

            const Eigen::Vector3d lv(lam.real(), lam.imag(), lam_v);
            auto gen_adjoint_analytic = [&](const Eigen::VectorXd& x) {
                const auto a = pffa::pv_pq_switch_adjoint(gen, {cd(x(0), x(1)), x(2), lam, lam_v, mode});
                return Eigen::Vector3d(a.current[0], a.current[1], a.current[2]).eval();
            };
            auto gen_adjoint_fd = [&](const Eigen::VectorXd& x) {
                return (finite_difference(gen_value, x, h).transpose() * lv).eval();
            };
            const auto gadj = pffa::pv_pq_switch_adjoint(gen, {v, q, lam, lam_v, mode});
            detail::record(r, tag + " adjoint current",
                           relative_error(gen_adjoint_analytic(xg), gen_adjoint_fd(xg)));
            detail::record(r, tag + " hessian",
                           relative_error(detail::to_matrix<3>(gadj.hessian_block),
                                          finite_difference(gen_adjoint_analytic, xg, h)));
        }
    }
    return r;
}

/// Assembled coupled matrix against a central difference of the assembled
/// nonlinear residual at a random state of `c`.
inline double assembled_jacobian_error(const NetworkCase& c, std::mt19937& rng,
                                       const pffa::AssemblyOptions& opts = {}, double h = 1e-6) {
    auto map = std::make_shared<const pffa::IndexMap>(pffa::build_index_map(c, pffa::SystemMode::Coupled));
    pffa::SystemAssembler asm_(c, map, opts);
    pffa::StateVector z(map);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : z.values) x = 0.1 * u(rng);
    for (std::size_t k = 0; k < c.buses.size(); ++k) z.set_voltage(k, random_phasor(rng, 0.8, 1.2));
    const auto sys = asm_.assemble(z);
    auto f = [&](const Eigen::VectorXd& x) {
        pffa::StateVector zz(map);
        zz.values.assign(x.data(), x.data() + x.size());
        const auto r = asm_.residual(zz);
        return Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size())).eval();
    };
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(z.values.data(), static_cast<Eigen::Index>(z.size()));
    return relative_error(dense(sys.matrix), finite_difference(f, x0, h));
}

// -------------------------------------------------------------------- KKT

struct KktCaseResult {
    int buses = 0;
    bool converged = false;
    bool infeasible = false;
    double stationarity = 0.0;     ///< ||J_f^T lambda||_inf, J_f by central differences
    double source_identity = 0.0;  ///< ||f(x) - P lambda||_inf over KCL rows
    double coupled_residual = 0.0; ///< ||F(z)||_inf of the coupled system
    double objective = 0.0;
    double oracle_objective = 0.0;
    bool oracle_converged = false;
    double objective_error = 0.0;
    std::string note;

    bool pass(double kkt_tol = 1e-6, double obj_tol = 1e-4) const {
        return converged && infeasible && oracle_converged && stationarity < kkt_tol &&
               source_identity < kkt_tol && coupled_residual < kkt_tol && objective_error < obj_tol;
    }
};

/// Toy cases for the optimality suite: sizes 3 to 10, loads beyond the
/// transfer limit of their random networks but close to it.
inline std::vector<NetworkCase> kkt_cases() {
    struct Spec {
        unsigned seed;
        int n;
        double scale;
        bool pv;
    };
    const Spec specs[] = {{11, 3, 0.9, false}, {23, 5, 0.7, true}, {37, 6, 0.5, false}, {41, 8, 0.5, true},
                          {59, 10, 0.3, false}};
    std::vector<NetworkCase> out;
    for (const auto& s : specs) {
        std::mt19937 rng(s.seed);
        out.push_back(random_case(rng, s.n, s.scale, s.pv));
    }
    return out;
}

inline KktCaseResult check_kkt(const NetworkCase& c, const pffa::SolverOptions& base = {}) {
    KktCaseResult r;
    r.buses = static_cast<int>(c.buses.size());
    auto opts = base;
    opts.feasibility = true;
    const auto sol = pffa::solve(c, opts);
    r.converged = sol.converged();
    if (!r.converged) {
        r.note = sol.message;
        return r;
    }
    const auto& idx = *sol.state.map;
    const auto report = pffa::build_report(c, sol, opts.feasibility_threshold);
    r.infeasible = report.verdict == pffa::Verdict::Infeasible;
    r.objective = report.objective;

    pffa::SystemAssembler coupled(c, sol.state.map, pffa::detail::assembly_options(opts, 0.0, sol.generator_modes));
    r.coupled_residual = pffa::detail::inf_norm(coupled.residual(sol.state));

    // Power-flow residual f(x) on the same layout without adjoint rows.
    auto pf_map = std::make_shared<const pffa::IndexMap>(pffa::build_index_map(c, pffa::SystemMode::PowerFlowOnly));
    pffa::SystemAssembler pf(c, pf_map, pffa::detail::assembly_options(opts, 0.0, sol.generator_modes));
    const auto n = static_cast<Eigen::Index>(idx.pf_dim);
    auto f = [&](const Eigen::VectorXd& x) {
        pffa::StateVector z(pf_map);
        z.values.assign(x.data(), x.data() + x.size());
        const auto res = pf.residual(z);
        return Eigen::Map<const Eigen::VectorXd>(res.data(), n).eval();
    };
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(sol.state.values.data(), n);
    const Eigen::VectorXd lam = Eigen::Map<const Eigen::VectorXd>(sol.state.values.data() + n, n);
    const Eigen::MatrixXd jf = finite_difference(f, x0);
    r.stationarity = (jf.transpose() * lam).cwiseAbs().maxCoeff();

    // KCL rows: f equals lambda at placed buses and zero elsewhere; the
    // remaining rows (slack and control equations) must vanish.
    const Eigen::VectorXd fx = f(x0);
    std::vector<bool> placed(c.buses.size(), false);
    for (const auto p : sol.placed) placed[p] = true;
    Eigen::VectorXd target = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < c.buses.size(); ++k) {
        if (!placed[k]) continue;
        const auto& b = idx.bus[k];
        target(b.vr) = lam(b.vr);
        target(b.vi) = lam(b.vi);
    }
    r.source_identity = (fx - target).cwiseAbs().maxCoeff();

    const auto oracle = min_norm_oracle(c, placed);
    r.oracle_converged = oracle.converged && oracle.constraint_violation < 1e-9;
    r.oracle_objective = oracle.objective;
    r.objective_error = std::abs(r.objective - oracle.objective) / std::max(std::abs(oracle.objective), 1e-300);
    return r;
}

}  // namespace testing_support
