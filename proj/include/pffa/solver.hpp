#pragma once

// Newton-Raphson driver: initialization, step limiting, Tx-stepping homotopy,
// reactive-limit outer loop and the second-order optimality check.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pffa/assembler.hpp"

namespace pffa {

enum class StartMode { Flat, FromInput };
enum class QLimitMode { Ignore, OuterLoop };

struct HomotopyParams {
    bool enabled = false;
    double y_scale = 100.0;
    /// Descending mu values ending at exactly 0. Empty selects the default
    /// geometric schedule.
    std::vector<double> mu_schedule;
    /// Smallest nonzero mu of the default schedule; 0 selects 0.01 / y_scale,
    /// so the last jump to the original network changes admittances by ~1%.
    double mu_floor = 0.0;
    int max_subproblem_iters = 50;
    /// Halvings allowed between two scheduled mu values after a failure.
    int max_refinements = 10;
    /// Hard cap on subproblems solved along the whole path.
    int max_subproblems = 400;
    /// A refined decrement below this means the path has folded.
    double min_step = 1e-6;
    /// solve(): when the path fails, retry as a direct solve from the same start.
    bool fallback_direct = true;

    /// 1, 1/ratio, 1/ratio^2, ... while above `floor`, then 0.
    static std::vector<double> geometric_schedule(double ratio = 4.0, double floor = 1e-3) {
        std::vector<double> s;
        for (double mu = 1.0; mu >= floor; mu /= ratio) s.push_back(mu);
        s.push_back(0.0);
        return s;
    }

    std::vector<double> schedule() const {
        if (!mu_schedule.empty()) return mu_schedule;
        const double floor = mu_floor > 0.0 ? mu_floor : 0.01 / std::max(y_scale, 1.0);
        return geometric_schedule(4.0, floor);
    }

    void validate() const {
        if (!(y_scale >= 0.0) || !std::isfinite(y_scale)) throw std::invalid_argument("y_scale must be >= 0");
        const auto s = schedule();
        if (s.empty() || s.front() > 1.0 || s.back() != 0.0)
            throw std::invalid_argument("mu schedule must start at or below 1 and end at 0");
        for (std::size_t i = 1; i < s.size(); ++i)
            if (!(s[i] < s[i - 1])) throw std::invalid_argument("mu schedule must be strictly decreasing");
        if (max_subproblem_iters <= 0) throw std::invalid_argument("max_subproblem_iters must be positive");
    }
};

struct SolverOptions {
    double nr_tolerance = 1e-8;
    int max_iterations = 100;
    double delta_v_max = 0.1;
    /// Per-iteration bound on Q_G and lambda_V updates.
    double aux_step_max = std::numeric_limits<double>::infinity();
    bool clamp_voltage = true;
    double v_clamp_min = 0.2;
    double v_clamp_max = 2.0;
    double voltage_floor = kDefaultVoltageFloor;
    HomotopyParams homotopy;
    StartMode start = StartMode::Flat;
    QLimitMode q_limit_mode = QLimitMode::Ignore;
    bool feasibility = true;
    PlacementPolicy placement;
    int max_outer_iterations = 20;
    double feasibility_threshold = 1e-6;
    std::size_t second_order_bus_cap = 200;
    /// Smallest |pivot| relative to the largest accepted during Newton steps.
    double pivot_threshold = 1e-15;

    void validate() const {
        if (!(nr_tolerance > 0.0)) throw std::invalid_argument("nr_tolerance must be positive");
        if (!(delta_v_max > 0.0)) throw std::invalid_argument("delta_v_max must be positive");
        if (!(aux_step_max > 0.0)) throw std::invalid_argument("aux_step_max must be positive");
        if (max_iterations <= 0) throw std::invalid_argument("max_iterations must be positive");
        if (clamp_voltage && !(v_clamp_min > 0.0 && v_clamp_min < v_clamp_max))
            throw std::invalid_argument("voltage clamp range is empty");
        homotopy.validate();
    }
};

struct IterationRecord {
    int iteration = 0;
    double residual = 0.0;  ///< infinity norm of the nonlinear residual before the step
    double max_step = 0.0;  ///< largest applied update component
    double mu = 0.0;
    std::vector<std::string> events;
};

struct IterationTrace {
    std::vector<IterationRecord> records;

    void append(IterationRecord r) { records.push_back(std::move(r)); }
    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

struct SubproblemRecord {
    double mu = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct SwitchEvent {
    int outer_iteration = 0;
    int bus = 0;
    GeneratorMode from = GeneratorMode::Regulating;
    GeneratorMode to = GeneratorMode::Regulating;
};

enum class SolveStatus { Converged, MaxIterations, VoltageCollapse, Singular, HomotopyFailed, Oscillation };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::MaxIterations: return "max iterations exceeded";
        case SolveStatus::VoltageCollapse: return "voltage collapse";
        case SolveStatus::Singular: return "singular matrix";
        case SolveStatus::HomotopyFailed: return "homotopy schedule exhausted";
        case SolveStatus::Oscillation: return "reactive-limit switching oscillation";
    }
    return "?";
}

struct Solution {
    SolveStatus status = SolveStatus::MaxIterations;
    std::string message;
    StateVector state;
    IterationTrace trace;
    std::vector<GeneratorMode> generator_modes;
    std::vector<SubproblemRecord> subproblems;
    std::vector<SwitchEvent> switch_history;
    std::vector<std::size_t> placed;  ///< bus positions carrying feasibility sources
    int iterations = 0;               ///< linear solves over every stage
    double residual = std::numeric_limits<double>::infinity();
    double seconds = 0.0;
    std::optional<std::string> singular_at;
    /// The homotopy path failed and the result comes from a direct solve.
    bool fallback_used = false;

    bool converged() const { return status == SolveStatus::Converged; }
    bool coupled() const { return state.map && state.map->coupled(); }
};

// ------------------------------------------------------------ initialization

inline double initial_q(const Generator& g) {
    if (std::isfinite(g.q_min) && std::isfinite(g.q_max)) return 0.5 * (g.q_min + g.q_max);
    return std::clamp(0.0, g.q_min, g.q_max);
}

inline StateVector initialize(const NetworkCase& c, const SolverOptions& opts,
                              std::shared_ptr<const IndexMap> map = nullptr) {
    if (!map)
        map = std::make_shared<const IndexMap>(
            build_index_map(c, opts.feasibility ? SystemMode::Coupled : SystemMode::PowerFlowOnly));
    StateVector z(map);
    const auto& idx = *map;
    // Flat start rotates every bus to the slack angle (zero for most cases).
    const double angle = c.buses[idx.slack_bus].angle_set;
    for (std::size_t k = 0; k < c.buses.size(); ++k) {
        const auto& b = c.buses[k];
        Phasor v;
        if (opts.start == StartMode::FromInput) {
            if (!b.v_init || !b.angle_init)
                throw std::invalid_argument("start from input requested but bus " + std::to_string(b.id) +
                                            " has no stored solution");
            v = std::polar(*b.v_init, *b.angle_init);
        } else {
            v = std::polar(b.kind == BusKind::PQ ? 1.0 : b.v_set, angle);
        }
        z.set_voltage(k, v);
        if (idx.coupled()) z.set_lambda(k, {opts.nr_tolerance, opts.nr_tolerance});
    }
    for (std::size_t g = 0; g < idx.pv.size(); ++g) z.values[idx.pv[g].q] = initial_q(c.generators[idx.pv[g].generator]);
    return z;
}

// ------------------------------------------------------------ step limiting

/// Largest admissible step for component i of the unknown vector.
inline double step_bound(const IndexMap& idx, std::size_t i, const SolverOptions& opts) {
    const std::size_t k = i >= idx.pf_dim ? i - idx.pf_dim : i;
    if (k < 2 * idx.bus.size()) return opts.delta_v_max;
    if (k == idx.slack_ir || k == idx.slack_ii) return std::numeric_limits<double>::infinity();
    return opts.aux_step_max;
}

/// Componentwise clip dx_i *= min(1, bound_i / |dx_i|). Returns the largest
/// applied magnitude.
inline double limit_step(std::vector<double>& dx, const IndexMap& idx, const SolverOptions& opts) {
    double largest = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double bound = step_bound(idx, i, opts);
        const double mag = std::abs(dx[i]);
        if (mag > bound) dx[i] *= bound / mag;
        largest = std::max(largest, std::abs(dx[i]));
    }
    return largest;
}

/// Scalar form of the clip, for a single voltage-type component.
inline double limit_component(double dx, double bound) {
    const double mag = std::abs(dx);
    return mag > bound ? dx * (bound / mag) : dx;
}

namespace detail {

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return std::isfinite(m) ? m : std::numeric_limits<double>::infinity();
}

inline void clamp_voltages(StateVector& z, const SolverOptions& opts) {
    if (!opts.clamp_voltage) return;
    for (std::size_t k = 0; k < z.map->bus.size(); ++k) {
        const Phasor v = z.voltage(k);
        const double mag = std::abs(v);
        if (mag < opts.v_clamp_min)
            z.set_voltage(k, mag > 0.0 ? v * (opts.v_clamp_min / mag) : Phasor(opts.v_clamp_min, 0.0));
        else if (mag > opts.v_clamp_max)
            z.set_voltage(k, v * (opts.v_clamp_max / mag));
    }
}

struct NewtonOutcome {
    SolveStatus status = SolveStatus::MaxIterations;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    std::string message;
    std::optional<std::string> singular_at;
};

/// Newton iterations on the system held by `asm_` starting from z (updated in place).
inline NewtonOutcome run_newton(SystemAssembler& asm_, SparseLuSolver& lu, StateVector& z,
                                const SolverOptions& opts, int max_iter, double mu, IterationTrace& trace) {
    NewtonOutcome out;
    const auto& idx = asm_.index_map();
    std::vector<double> rhs(idx.dim);
    for (int it = 0;; ++it) {
        AssembledSystem sys;
        try {
            sys = asm_.assemble(z);
        } catch (const VoltageCollapseError& e) {
            out.status = SolveStatus::VoltageCollapse;
            out.message = e.what();
            return out;
        }
        out.residual = inf_norm(sys.residual);
        IterationRecord rec;
        rec.iteration = static_cast<int>(trace.size());
        rec.residual = out.residual;
        rec.mu = mu;
        if (out.residual < opts.nr_tolerance) {
            trace.append(std::move(rec));
            out.status = SolveStatus::Converged;
            return out;
        }
        if (it >= max_iter || !std::isfinite(out.residual)) {
            trace.append(std::move(rec));
            out.status = SolveStatus::MaxIterations;
            out.message = "no convergence after " + std::to_string(it) + " iterations (residual " +
                          std::to_string(out.residual) + ")";
            return out;
        }
        for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = -sys.residual[i];
        std::vector<double> dx;
        try {
            dx = lu.solve(sys.matrix, rhs);
        } catch (const SingularMatrixError& e) {
            trace.append(std::move(rec));
            out.status = SolveStatus::Singular;
            out.singular_at = idx.describe(e.index());
            out.message = std::string(e.what()) + " at " + *out.singular_at;
            return out;
        }
        rec.max_step = limit_step(dx, idx, opts);
        for (std::size_t i = 0; i < dx.size(); ++i) z.values[i] += dx[i];
        clamp_voltages(z, opts);
        trace.append(std::move(rec));
        ++out.iterations;
    }
}

inline AssemblyOptions assembly_options(const SolverOptions& opts, double mu,
                                        std::vector<GeneratorMode> modes = {}) {
    AssemblyOptions a;
    a.homotopy = {mu, opts.homotopy.y_scale};
    a.placement = opts.placement;
    a.voltage_floor = opts.voltage_floor;
    a.generator_modes = std::move(modes);
    return a;
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Continuation from mu = 1 down to the original network. A failed
/// subproblem restarts from the last converged point with half the
/// decrement; after a refinement the decrement doubles with every success
/// until the schedule is caught up again.
inline void run_homotopy(SystemAssembler& asm_, SparseLuSolver& lu, StateVector& z, const SolverOptions& opts,
                         Solution& sol) {
    const auto schedule = opts.homotopy.schedule();
    std::optional<double> last_mu;
    StateVector last_ok = z;
    std::size_t next = 0;
    int refinements = 0;
    bool refined = false;
    double step = 0.0;
    double target = schedule[0];
    while (true) {
        asm_.set_homotopy({target, opts.homotopy.y_scale});
        const auto res = run_newton(asm_, lu, z, opts, opts.homotopy.max_subproblem_iters, target, sol.trace);
        sol.iterations += res.iterations;
        sol.residual = res.residual;
        sol.subproblems.push_back({target, res.iterations, res.status == SolveStatus::Converged});
        if (res.status == SolveStatus::Converged) {
            if (last_mu) step = *last_mu - target;
            last_ok = z;
            last_mu = target;
            refinements = 0;
            if (target == 0.0) {
                sol.status = SolveStatus::Converged;
                return;
            }
            while (next < schedule.size() && schedule[next] >= target) ++next;
            target = refined ? std::max(schedule[next], target - 2.0 * step) : schedule[next];
            if (static_cast<int>(sol.subproblems.size()) >= opts.homotopy.max_subproblems) {
                sol.status = SolveStatus::HomotopyFailed;
                sol.message = "homotopy subproblem cap reached at mu=" + std::to_string(*last_mu);
                return;
            }
            continue;
        }
        if (!last_mu || ++refinements > opts.homotopy.max_refinements ||
            static_cast<int>(sol.subproblems.size()) >= opts.homotopy.max_subproblems) {
            sol.status = SolveStatus::HomotopyFailed;
            sol.message = "homotopy failed at mu=" + std::to_string(target) + ": " + res.message;
            sol.singular_at = res.singular_at;
            return;
        }
        z = last_ok;
        refined = true;
        step = 0.5 * (*last_mu - target);
        if (step < opts.homotopy.min_step) {
            sol.status = SolveStatus::HomotopyFailed;
            sol.message = "homotopy path folds near mu=" + std::to_string(*last_mu) + ": " + res.message;
            sol.singular_at = res.singular_at;
            return;
        }
        target = *last_mu - step;
    }
}

/// Single solve for fixed generator modes, optionally along the homotopy path.
inline Solution solve_fixed_modes(const NetworkCase& c, const SolverOptions& opts, StateVector z,
                                  std::vector<GeneratorMode> modes, bool homotopy, bool fallback = false) {
    const auto t0 = std::chrono::steady_clock::now();
    Solution sol;
    SystemAssembler asm_(c, z.map, assembly_options(opts, homotopy ? opts.homotopy.schedule()[0] : 0.0, modes));
    SparseLuSolver lu(opts.pivot_threshold);
    sol.placed = asm_.placed();
    if (homotopy) {
        const StateVector start = z;
        run_homotopy(asm_, lu, z, opts, sol);
        if (sol.status == SolveStatus::HomotopyFailed && fallback) {
            z = start;
            asm_.set_homotopy({0.0, opts.homotopy.y_scale});
            const auto res = run_newton(asm_, lu, z, opts, opts.max_iterations, 0.0, sol.trace);
            sol.iterations += res.iterations;
            sol.residual = res.residual;
            sol.subproblems.push_back({0.0, res.iterations, res.status == SolveStatus::Converged});
            sol.status = res.status;
            sol.fallback_used = true;
            sol.message = res.status == SolveStatus::Converged
                              ? "direct solve after homotopy failure (" + sol.message + ")"
                              : res.message + "; homotopy also failed (" + sol.message + ")";
            sol.singular_at = res.singular_at;
        }
    } else {
        const auto res = run_newton(asm_, lu, z, opts, opts.max_iterations, 0.0, sol.trace);
        sol.status = res.status;
        sol.message = res.message;
        sol.iterations = res.iterations;
        sol.residual = res.residual;
        sol.singular_at = res.singular_at;
        sol.subproblems.push_back({0.0, res.iterations, res.status == SolveStatus::Converged});
    }
    sol.state = std::move(z);
    sol.generator_modes = asm_.options().generator_modes;
    sol.seconds = elapsed(t0);
    return sol;
}

}  // namespace detail

/// Plain Newton-Raphson on the original network (no homotopy, no limit switching).
inline Solution nr_solve(const NetworkCase& c, const SolverOptions& opts,
                         std::optional<StateVector> start = std::nullopt) {
    opts.validate();
    StateVector z = start ? std::move(*start) : initialize(c, opts);
    return detail::solve_fixed_modes(c, opts, std::move(z), {}, false);
}

/// Tx-stepping continuation; the last subproblem is the original network.
inline Solution tx_stepping_solve(const NetworkCase& c, const SolverOptions& opts,
                                  std::optional<StateVector> start = std::nullopt) {
    opts.validate();
    if (!opts.homotopy.enabled) throw std::invalid_argument("tx_stepping_solve requires homotopy enabled");
    StateVector z = start ? std::move(*start) : initialize(c, opts);
    return detail::solve_fixed_modes(c, opts, std::move(z), {}, true);
}

namespace detail {

/// Segment of the reactive disjunction a generator should move to, given
/// its current segment and the solved operating point.
inline GeneratorMode next_mode(const Generator& g, GeneratorMode mode, double q, double vmag, double tol) {
    switch (mode) {
        case GeneratorMode::Regulating:
            if (q > g.q_max + tol) return GeneratorMode::AtQmax;
            if (q < g.q_min - tol) return GeneratorMode::AtQmin;
            return mode;
        case GeneratorMode::AtQmax:
            return vmag > g.v_set + tol ? GeneratorMode::Regulating : mode;
        case GeneratorMode::AtQmin:
            return vmag < g.v_set - tol ? GeneratorMode::Regulating : mode;
    }
    return mode;
}

}  // namespace detail

/// Outer loop over PV/PQ switching until every generator sits on one segment
/// of its reactive disjunction.
inline Solution enforce_q_limits(const NetworkCase& c, const SolverOptions& opts,
                                 std::optional<StateVector> start = std::nullopt) {
    opts.validate();
    const auto t0 = std::chrono::steady_clock::now();
    StateVector z = start ? std::move(*start) : initialize(c, opts);
    const auto& idx = *z.map;
    std::vector<GeneratorMode> modes(idx.pv.size(), GeneratorMode::Regulating);
    std::vector<std::vector<GeneratorMode>> seen{modes};
    Solution total;
    bool homotopy = opts.homotopy.enabled;
    const double tol = std::max(1e-8, 10.0 * opts.nr_tolerance);
    for (int outer = 0;; ++outer) {
        Solution sol = detail::solve_fixed_modes(c, opts, z, modes, homotopy, opts.homotopy.fallback_direct);
        total.fallback_used = total.fallback_used || sol.fallback_used;
        // Later rounds warm-start from the previous solution on the original network.
        homotopy = false;
        total.trace.records.insert(total.trace.records.end(), sol.trace.records.begin(), sol.trace.records.end());
        total.subproblems.insert(total.subproblems.end(), sol.subproblems.begin(), sol.subproblems.end());
        total.iterations += sol.iterations;
        total.status = sol.status;
        total.message = sol.message;
        total.residual = sol.residual;
        total.singular_at = sol.singular_at;
        total.placed = sol.placed;
        total.state = sol.state;
        total.generator_modes = modes;
        if (!sol.converged()) break;
        z = sol.state;

        std::vector<GeneratorMode> next = modes;
        for (std::size_t g = 0; g < idx.pv.size(); ++g) {
            const auto& gen = c.generators[idx.pv[g].generator];
            next[g] = detail::next_mode(gen, modes[g], z.q_g(g), std::abs(z.voltage(idx.pv[g].bus)), tol);
            if (next[g] != modes[g])
                total.switch_history.push_back({outer + 1, gen.bus, modes[g], next[g]});
        }
        if (next == modes) break;
        if (std::find(seen.begin(), seen.end(), next) != seen.end() || outer + 1 >= opts.max_outer_iterations) {
            total.status = SolveStatus::Oscillation;
            total.message = "switch state repeated or outer-iteration cap reached; last state frozen";
            break;
        }
        seen.push_back(next);
        modes = std::move(next);
        // A pinned generator starts its new segment exactly on the limit.
        for (std::size_t g = 0; g < idx.pv.size(); ++g) {
            const auto& gen = c.generators[idx.pv[g].generator];
            if (modes[g] == GeneratorMode::AtQmax) z.values[idx.pv[g].q] = gen.q_max;
            if (modes[g] == GeneratorMode::AtQmin) z.values[idx.pv[g].q] = gen.q_min;
        }
    }
    total.seconds = detail::elapsed(t0);
    return total;
}

/// Entry point honoring every option: homotopy and reactive-limit switching.
inline Solution solve(const NetworkCase& c, const SolverOptions& opts,
                      std::optional<StateVector> start = std::nullopt) {
    if (opts.q_limit_mode == QLimitMode::OuterLoop) return enforce_q_limits(c, opts, std::move(start));
    opts.validate();
    StateVector z = start ? std::move(*start) : initialize(c, opts);
    return detail::solve_fixed_modes(c, opts, std::move(z), {}, opts.homotopy.enabled,
                                     opts.homotopy.fallback_direct);
}

// ------------------------------------------------------- second-order check

enum class OptimalityClass { Minimum, Saddle, NotApplicable };

inline const char* to_string(OptimalityClass k) {
    switch (k) {
        case OptimalityClass::Minimum: return "minimum";
        case OptimalityClass::Saddle: return "saddle";
        case OptimalityClass::NotApplicable: return "not-applicable";
    }
    return "?";
}

struct SecondOrderResult {
    OptimalityClass kind = OptimalityClass::NotApplicable;
    double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
    std::size_t null_space_dim = 0;
    std::string reason;
};

/// Classifies the Hessian W projected on the null space of the constraint
/// Jacobian A. An empty null space is vacuously a minimum.
inline SecondOrderResult classify_projected_hessian(const Eigen::MatrixXd& a, const Eigen::MatrixXd& w,
                                                    double rel_tol = 1e-10) {
    SecondOrderResult r;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double cutoff = rel_tol * (s.size() ? s(0) : 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cutoff) ++rank;
    const Eigen::Index nullity = a.cols() - rank;
    r.null_space_dim = static_cast<std::size_t>(nullity);
    if (nullity == 0) {
        r.kind = OptimalityClass::Minimum;
        r.reason = "constraint Jacobian has an empty null space";
        return r;
    }
    const Eigen::MatrixXd z = svd.matrixV().rightCols(nullity);
    const Eigen::MatrixXd reduced = z.transpose() * w * z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (reduced + reduced.transpose()));
    r.min_eigenvalue = eig.eigenvalues()(0);
    r.kind = r.min_eigenvalue > 0.0 ? OptimalityClass::Minimum : OptimalityClass::Saddle;
    r.reason = "projected Hessian smallest eigenvalue " + std::to_string(r.min_eigenvalue);
    return r;
}

/// Second-order sufficient condition at a converged coupled solution, over
/// the unknowns (x, I_F) with constraints f(x) - P I_F = 0.
inline SecondOrderResult check_second_order(const NetworkCase& c, const Solution& sol, const SolverOptions& opts) {
    SecondOrderResult r;
    if (!sol.converged() || !sol.coupled()) {
        r.reason = "requires a converged coupled solution";
        return r;
    }
    const auto& idx = *sol.state.map;
    double lam = 0.0;
    for (std::size_t k = 0; k < idx.bus.size(); ++k) lam = std::max(lam, std::abs(sol.state.lambda(k)));
    if (lam < opts.feasibility_threshold) {
        r.reason = "trivial adjoint response (feasible case)";
        return r;
    }
    if (c.buses.size() > opts.second_order_bus_cap) {
        r.reason = "case exceeds the dense check cap of " + std::to_string(opts.second_order_bus_cap) + " buses";
        return r;
    }
    SystemAssembler asm_(c, sol.state.map, detail::assembly_options(opts, 0.0, sol.generator_modes));
    const auto sys = asm_.assemble(sol.state);
    const auto n = static_cast<Eigen::Index>(idx.pf_dim);
    const auto p = static_cast<Eigen::Index>(2 * sol.placed.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n + p);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n + p, n + p);
    for (std::size_t col = 0; col < idx.dim; ++col) {
        for (int k = sys.matrix.col_ptr[col]; k < sys.matrix.col_ptr[col + 1]; ++k) {
            const auto row = static_cast<std::size_t>(sys.matrix.row_idx[k]);
            const double v = sys.matrix.values[k];
            if (row < idx.pf_dim && col < idx.pf_dim) a(row, col) = v;
            if (row >= idx.pf_dim && col < idx.pf_dim) w(row - idx.pf_dim, col) = v;
        }
    }
    for (std::size_t j = 0; j < sol.placed.size(); ++j) {
        const auto& b = idx.bus[sol.placed[j]];
        a(b.vr, n + 2 * j) = -1.0;
        a(b.vi, n + 2 * j + 1) = -1.0;
    }
    w.bottomRightCorner(p, p).setIdentity();
    return classify_projected_hessian(a, w);
}

}  // namespace pffa
