#pragma once

// Feasibility verdicts and deficiency reports from coupled solutions, loading
// sweeps, collapse-point bisection and branch contingencies.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pffa/casefile.hpp"
#include "pffa/solver.hpp"

namespace pffa {

enum class Verdict { Feasible, Infeasible };

inline const char* to_string(Verdict v) { return v == Verdict::Feasible ? "feasible" : "infeasible"; }

/// Feasibility current at one bus and the complex power it injects.
struct BusDeficiency {
    int bus = 0;
    double if_real = 0.0;
    double if_imag = 0.0;
    double p_def = 0.0;
    double q_def = 0.0;
    double norm_mag = 0.0;  ///< |I_F| relative to the largest entry
};

struct FeasibilityReport {
    Verdict verdict = Verdict::Feasible;
    double threshold = 1e-6;
    std::vector<BusDeficiency> buses;  ///< placed buses, largest |I_F| first
    double p_inf = 0.0;
    double q_inf = 0.0;
    double objective = 0.0;  ///< 0.5 * ||I_F||^2
    double max_if = 0.0;
    // Trace summary
    int iterations = 0;
    double residual = 0.0;
    double seconds = 0.0;
    bool fallback_used = false;
    std::vector<SubproblemRecord> subproblems;
};

inline FeasibilityReport build_report(const NetworkCase& c, const Solution& sol, double threshold = 1e-6) {
    if (!sol.converged()) throw std::invalid_argument("report requires a converged solution: " + sol.message);
    if (!sol.coupled()) throw std::invalid_argument("report requires a coupled (feasibility) solution");
    FeasibilityReport r;
    r.threshold = threshold;
    r.iterations = sol.iterations;
    r.residual = sol.residual;
    r.seconds = sol.seconds;
    r.fallback_used = sol.fallback_used;
    r.subproblems = sol.subproblems;
    const auto& z = sol.state;
    for (const auto pos : sol.placed) {
        const Phasor i_f = z.lambda(pos);
        const Phasor s = z.voltage(pos) * std::conj(i_f);
        BusDeficiency d;
        d.bus = c.buses[pos].id;
        d.if_real = i_f.real();
        d.if_imag = i_f.imag();
        d.p_def = s.real();
        d.q_def = s.imag();
        r.p_inf += std::abs(s.real());
        r.q_inf += std::abs(s.imag());
        r.objective += 0.5 * std::norm(i_f);
        r.max_if = std::max(r.max_if, std::abs(i_f));
        r.buses.push_back(d);
    }
    for (auto& d : r.buses) d.norm_mag = r.max_if > 0.0 ? std::hypot(d.if_real, d.if_imag) / r.max_if : 0.0;
    std::stable_sort(r.buses.begin(), r.buses.end(), [](const BusDeficiency& a, const BusDeficiency& b) {
        return std::hypot(a.if_real, a.if_imag) > std::hypot(b.if_real, b.if_imag);
    });
    r.verdict = r.max_if < threshold ? Verdict::Feasible : Verdict::Infeasible;
    return r;
}

/// Feasibility solve with every option honored, returning the report.
inline FeasibilityReport feasibility_solve(const NetworkCase& c, SolverOptions opts,
                                           std::optional<StateVector> start = std::nullopt) {
    opts.feasibility = true;
    const auto sol = solve(c, opts, std::move(start));
    return build_report(c, sol, opts.feasibility_threshold);
}

// ------------------------------------------------------------------ sweeps

struct SweepPoint {
    double factor = 0.0;
    bool converged = false;
    Verdict verdict = Verdict::Feasible;
    double p_inf = 0.0;
    double q_inf = 0.0;
    int iterations = 0;
    bool warm_started = false;
    std::string message;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    /// Last feasible and first infeasible factor of the first verdict flip.
    std::optional<std::pair<double, double>> collapse_bracket;
    std::optional<double> collapse_estimate;
};

/// One feasibility solve per factor. Each point warm-starts from the previous
/// converged point with a direct solve and falls back to a fresh solve with
/// the configured options when that fails.
inline SweepResult loading_sweep(const NetworkCase& c, const std::vector<double>& factors, SolverOptions opts,
                                 LoadingMode mode = LoadingMode::LoadsOnly) {
    for (std::size_t i = 1; i < factors.size(); ++i)
        if (!(factors[i] > factors[i - 1])) throw std::invalid_argument("sweep factors must be strictly increasing");
    opts.feasibility = true;
    SweepResult out;
    std::optional<StateVector> previous;
    for (const double f : factors) {
        SweepPoint p;
        p.factor = f;
        const auto scaled = apply_loading_factor(c, f, mode);
        std::optional<Solution> sol;
        try {
            if (previous) {
                auto warm = opts;
                warm.homotopy.enabled = false;
                warm.q_limit_mode = QLimitMode::Ignore;
                sol = solve(scaled, warm, previous);
                p.warm_started = sol->converged();
                if (p.warm_started && opts.q_limit_mode == QLimitMode::OuterLoop)
                    sol = enforce_q_limits(scaled, warm, sol->state);
            }
            if (!sol || !sol->converged()) {
                const int spent = sol ? sol->iterations : 0;
                sol = solve(scaled, opts);
                sol->iterations += spent;
                p.warm_started = false;
            }
        } catch (const std::exception& e) {
            p.message = e.what();
            out.points.push_back(p);
            continue;
        }
        p.iterations = sol->iterations;
        p.converged = sol->converged();
        if (p.converged) {
            const auto r = build_report(scaled, *sol, opts.feasibility_threshold);
            p.verdict = r.verdict;
            p.p_inf = r.p_inf;
            p.q_inf = r.q_inf;
            previous = sol->state;
        } else {
            p.message = sol->message;
        }
        out.points.push_back(p);
    }
    for (std::size_t i = 1; i < out.points.size(); ++i) {
        const auto& a = out.points[i - 1];
        const auto& b = out.points[i];
        if (a.converged && b.converged && a.verdict == Verdict::Feasible && b.verdict == Verdict::Infeasible) {
            out.collapse_bracket = std::make_pair(a.factor, b.factor);
            out.collapse_estimate = 0.5 * (a.factor + b.factor);
            break;
        }
    }
    return out;
}

/// Evenly spaced factors from `from` to `to` inclusive.
inline std::vector<double> factor_range(double from, double to, double step) {
    if (!(step > 0.0) || !(to >= from)) throw std::invalid_argument("factor range needs step > 0 and to >= from");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(from + static_cast<double>(i) * step);
    return out;
}

/// Verdict of a single loading factor from a fresh solve.
inline Verdict loading_verdict(const NetworkCase& c, double factor, SolverOptions opts,
                               LoadingMode mode = LoadingMode::LoadsOnly) {
    opts.feasibility = true;
    const auto scaled = apply_loading_factor(c, factor, mode);
    const auto sol = solve(scaled, opts);
    if (!sol.converged())
        throw std::runtime_error("feasibility solve failed at loading " + std::to_string(factor) + ": " +
                                 sol.message);
    return build_report(scaled, sol, opts.feasibility_threshold).verdict;
}

/// Bisection on the verdict until the bracket is narrower than tol; returns
/// the bracket midpoint.
inline double find_collapse_point(const NetworkCase& c, double lo, double hi, double tol, const SolverOptions& opts,
                                  LoadingMode mode = LoadingMode::LoadsOnly) {
    if (!(lo < hi) || !(tol > 0.0)) throw std::invalid_argument("collapse search needs lo < hi and tol > 0");
    if (loading_verdict(c, lo, opts, mode) != Verdict::Feasible)
        throw std::invalid_argument("lower loading factor is not feasible");
    if (loading_verdict(c, hi, opts, mode) != Verdict::Infeasible)
        throw std::invalid_argument("upper loading factor is not infeasible");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (loading_verdict(c, mid, opts, mode) == Verdict::Feasible ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// ------------------------------------------------------------ contingencies

struct BranchSpec {
    int from_bus = 0;
    int to_bus = 0;
    int ordinal = 1;
};

enum class ContingencyOutcome { Solved, Islanding, SolveFailed };

inline const char* to_string(ContingencyOutcome o) {
    switch (o) {
        case ContingencyOutcome::Solved: return "solved";
        case ContingencyOutcome::Islanding: return "islanding";
        case ContingencyOutcome::SolveFailed: return "solve-failed";
    }
    return "?";
}

struct ContingencyResult {
    BranchSpec branch;
    ContingencyOutcome outcome = ContingencyOutcome::SolveFailed;
    std::optional<FeasibilityReport> report;
    std::string message;
};

/// Removes one branch and runs a feasibility solve. Islanding is reported as
/// a structural outcome; a branch that does not exist throws.
inline ContingencyResult run_contingency(const NetworkCase& c, const BranchSpec& spec, SolverOptions opts) {
    ContingencyResult r;
    r.branch = spec;
    NetworkCase outaged;
    try {
        outaged = remove_branch(c, spec.from_bus, spec.to_bus, spec.ordinal);
    } catch (const CaseError& e) {
        if (e.kind() != CaseErrorKind::Islanded) throw;
        r.outcome = ContingencyOutcome::Islanding;
        r.message = e.what();
        return r;
    }
    opts.feasibility = true;
    const auto sol = solve(outaged, opts);
    if (!sol.converged()) {
        r.outcome = ContingencyOutcome::SolveFailed;
        r.message = sol.message;
        return r;
    }
    r.outcome = ContingencyOutcome::Solved;
    r.report = build_report(outaged, sol, opts.feasibility_threshold);
    return r;
}

/// Every in-service branch, with parallel branches told apart by ordinal.
inline std::vector<BranchSpec> all_branch_specs(const NetworkCase& c) {
    std::vector<BranchSpec> out;
    for (std::size_t i = 0; i < c.branches.size(); ++i) {
        const auto& b = c.branches[i];
        int ordinal = 1;
        for (std::size_t j = 0; j < i; ++j) {
            const auto& o = c.branches[j];
            if ((o.from_bus == b.from_bus && o.to_bus == b.to_bus) || (o.from_bus == b.to_bus && o.to_bus == b.from_bus))
                ++ordinal;
        }
        if (b.in_service) out.push_back({b.from_bus, b.to_bus, ordinal});
    }
    return out;
}

/// Contingencies are independent, so they run on `threads` workers; results
/// keep branch order. 0 selects the hardware concurrency.
inline std::vector<ContingencyResult> run_n1(const NetworkCase& c, const SolverOptions& opts,
                                             const std::vector<BranchSpec>& specs, unsigned threads = 0) {
    std::vector<ContingencyResult> out(specs.size());
    std::vector<std::exception_ptr> errors(specs.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(specs.size(), 1)));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < specs.size();) {
            try {
                out[i] = run_contingency(c, specs[i], opts);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline std::vector<ContingencyResult> run_n1(const NetworkCase& c, const SolverOptions& opts, unsigned threads = 0) {
    return run_n1(c, opts, all_branch_specs(c), threads);
}

}  // namespace pffa
