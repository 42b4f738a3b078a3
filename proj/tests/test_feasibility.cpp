#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <set>

#include "test_support.hpp"

using namespace pffa;
using namespace testing_support;

namespace {

/// Slack behind a lossless reactance X = 0.1 feeding a unit resistive load.
/// Maximum transfer is V^2 / (2X) = 5.
NetworkCase lossless_two_bus() {
    auto c = two_bus_case(1.0, 0.0);
    c.branches = {admittance_line(1, 2, 0.0, -10.0)};
    validate(c);
    return c;
}

/// Buses 2 and 3 mirror each other, so the doubled 2-3 tie carries no flow.
NetworkCase symmetric_tie_case() {
    NetworkCase c;
    c.buses = {slack_bus(1), pq_bus(2), pq_bus(3)};
    c.branches = {line(1, 2, 0.01, 0.1), line(1, 3, 0.01, 0.1), line(2, 3, 0.02, 0.2), line(2, 3, 0.02, 0.2)};
    c.generators = {generator(1, 0.0, 1.0)};
    c.loads = {{2, 0.5, 0.2}, {3, 0.5, 0.2}};
    validate(c);
    return c;
}

/// Radial chain 1 =(2 x 0.2)= 2 -(0.1)- 3 with a 2.0 unity-factor load at 3.
/// Intact: X = 0.2, P_max = 2.5. One 1-2 circuit out: X = 0.3, P_max = 1.667.
NetworkCase transfer_limited_case() {
    NetworkCase c;
    c.buses = {slack_bus(1), pq_bus(2), pq_bus(3)};
    c.branches = {admittance_line(1, 2, 0.0, -5.0), admittance_line(1, 2, 0.0, -5.0),
                  admittance_line(2, 3, 0.0, -10.0)};
    c.generators = {generator(1, 0.0, 1.0)};
    c.loads = {{3, 2.0, 0.0}};
    validate(c);
    return c;
}

NetworkCase renumbered(const NetworkCase& c, std::mt19937& rng) {
    std::vector<int> ids(c.buses.size());
    std::iota(ids.begin(), ids.end(), 500);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::map<int, int> to;
    for (std::size_t k = 0; k < c.buses.size(); ++k) to[c.buses[k].id] = ids[k];
    NetworkCase r = c;
    for (auto& b : r.buses) b.id = to.at(b.id);
    for (auto& b : r.branches) {
        b.from_bus = to.at(b.from_bus);
        b.to_bus = to.at(b.to_bus);
    }
    for (auto& g : r.generators) g.bus = to.at(g.bus);
    for (auto& l : r.loads) l.bus = to.at(l.bus);
    for (auto& s : r.shunts) s.bus = to.at(s.bus);
    std::shuffle(r.buses.begin(), r.buses.end(), rng);
    validate(r);
    return r;
}

}  // namespace

TEST(Feasibility, FeasibleCaseHasZeroDeficiency) {
    const auto r = feasibility_solve(load_data_case("case14.m"), SolverOptions{});
    EXPECT_EQ(r.verdict, Verdict::Feasible);
    EXPECT_LT(r.max_if, 1e-7);
    EXPECT_EQ(r.buses.size(), 14u);
}

TEST(Feasibility, ReportQuantitiesFollowFromAdjoint) {
    const auto c = apply_loading_factor(load_data_case("case11_iwamoto.m"), 1.1);
    SolverOptions o;
    const auto sol = solve(c, o);
    ASSERT_TRUE(sol.converged());
    const auto r = build_report(c, sol);
    EXPECT_EQ(r.verdict, Verdict::Infeasible);
    double p = 0, q = 0, obj = 0, mx = 0;
    const auto& idx = *sol.state.map;
    for (const auto pos : sol.placed) {
        const cd i_f(sol.state.values[idx.lambda_r(pos)], sol.state.values[idx.lambda_i(pos)]);
        const cd s = sol.state.voltage(pos) * std::conj(i_f);
        p += std::abs(s.real());
        q += std::abs(s.imag());
        obj += 0.5 * std::norm(i_f);
        mx = std::max(mx, std::abs(i_f));
    }
    EXPECT_NEAR(r.p_inf, p, 1e-14);
    EXPECT_NEAR(r.q_inf, q, 1e-14);
    EXPECT_NEAR(r.objective, obj, 1e-14);
    EXPECT_DOUBLE_EQ(r.max_if, mx);
    ASSERT_FALSE(r.buses.empty());
    EXPECT_DOUBLE_EQ(r.buses.front().norm_mag, 1.0);
    for (std::size_t i = 1; i < r.buses.size(); ++i) EXPECT_GE(r.buses[i - 1].norm_mag, r.buses[i].norm_mag);
}

TEST(Feasibility, ReportRequiresConvergedCoupledSolution) {
    SolverOptions pf_only;
    pf_only.feasibility = false;
    const auto c = two_bus_case();
    EXPECT_THROW(build_report(c, solve(c, pf_only)), std::invalid_argument);
    Solution failed;
    EXPECT_THROW(build_report(c, failed), std::invalid_argument);
}

TEST(Feasibility, ZeroLoadingIsFeasibleWithZeroTotals) {
    // The 11-bus data is left out: unloaded, its shunts put two buses near zero voltage.
    for (const char* name : {"case14.m", "case118.m"}) {
        const auto c = apply_loading_factor(load_data_case(name), 0.0);
        const auto r = feasibility_solve(c, SolverOptions{});
        EXPECT_EQ(r.verdict, Verdict::Feasible) << name;
        // Bounded by the Newton tolerance summed over buses, well under the verdict threshold.
        EXPECT_LT(r.p_inf, 1e-8) << name;
        EXPECT_LT(r.q_inf, 1e-8) << name;
    }
}

TEST(Feasibility, TotalsInvariantUnderBusRenumbering) {
    std::mt19937 rng(31);
    for (const double factor : {1.05, 1.1}) {
        const auto c = apply_loading_factor(load_data_case("case11_iwamoto.m"), factor);
        const auto a = feasibility_solve(c, SolverOptions{});
        const auto b = feasibility_solve(renumbered(c, rng), SolverOptions{});
        EXPECT_NEAR(a.p_inf, b.p_inf, 1e-9 * a.p_inf);
        EXPECT_NEAR(a.q_inf, b.q_inf, 1e-9 * a.q_inf);
        EXPECT_NEAR(a.objective, b.objective, 1e-9 * a.objective);
    }
}

TEST(Feasibility, PlacementRestrictsSources) {
    const auto c = apply_loading_factor(load_data_case("case11_iwamoto.m"), 1.1);
    SolverOptions o;
    o.placement = PlacementPolicy::load_buses_and_shunts();
    const auto r = feasibility_solve(c, o);
    std::set<int> load_buses;
    for (const auto& l : c.loads)
        if (l.p != 0.0 || l.q != 0.0) load_buses.insert(l.bus);
    for (const auto& s : c.shunts) load_buses.insert(s.bus);
    EXPECT_EQ(r.buses.size(), load_buses.size());
    for (const auto& b : r.buses) EXPECT_TRUE(load_buses.count(b.bus)) << b.bus;
    // Fewer sources cannot lower the minimum deficiency.
    const auto all = feasibility_solve(c, SolverOptions{});
    EXPECT_GE(r.objective, all.objective * (1.0 - 1e-9));
}

TEST(Feasibility, AnalyticCollapsePoint) {
    const auto c = lossless_two_bus();
    EXPECT_EQ(loading_verdict(c, 4.9, SolverOptions{}), Verdict::Feasible);
    EXPECT_EQ(loading_verdict(c, 5.1, SolverOptions{}), Verdict::Infeasible);
    const double est = find_collapse_point(c, 4.0, 6.0, 1e-5, SolverOptions{});
    EXPECT_NEAR(est, 5.0, 1e-3);
}

TEST(Feasibility, CollapseSearchPreconditions) {
    const auto c = lossless_two_bus();
    EXPECT_THROW(find_collapse_point(c, 5.5, 6.0, 1e-3, SolverOptions{}), std::invalid_argument);
    EXPECT_THROW(find_collapse_point(c, 1.0, 2.0, 1e-3, SolverOptions{}), std::invalid_argument);
    EXPECT_THROW(find_collapse_point(c, 6.0, 4.0, 1e-3, SolverOptions{}), std::invalid_argument);
    EXPECT_THROW(find_collapse_point(c, 4.0, 6.0, 0.0, SolverOptions{}), std::invalid_argument);
}

TEST(Feasibility, SweepBracketsCollapse) {
    const auto c = lossless_two_bus();
    const auto s = loading_sweep(c, {4.8, 4.9, 5.1, 5.2}, SolverOptions{});
    ASSERT_EQ(s.points.size(), 4u);
    for (const auto& p : s.points) EXPECT_TRUE(p.converged) << p.factor << " " << p.message;
    EXPECT_FALSE(s.points[0].warm_started);
    EXPECT_EQ(s.points[1].verdict, Verdict::Feasible);
    EXPECT_EQ(s.points[2].verdict, Verdict::Infeasible);
    ASSERT_TRUE(s.collapse_bracket);
    EXPECT_DOUBLE_EQ(s.collapse_bracket->first, 4.9);
    EXPECT_DOUBLE_EQ(s.collapse_bracket->second, 5.1);
    ASSERT_TRUE(s.collapse_estimate);
    EXPECT_DOUBLE_EQ(*s.collapse_estimate, 5.0);
    EXPECT_GT(s.points[3].p_inf, s.points[2].p_inf);
}

TEST(Feasibility, SweepRejectsUnorderedFactors) {
    EXPECT_THROW(loading_sweep(lossless_two_bus(), {1.0, 1.0}, SolverOptions{}), std::invalid_argument);
    EXPECT_THROW(loading_sweep(lossless_two_bus(), {2.0, 1.0}, SolverOptions{}), std::invalid_argument);
    const auto f = factor_range(0.9, 1.1, 0.05);
    ASSERT_EQ(f.size(), 5u);
    EXPECT_NEAR(f.back(), 1.1, 1e-12);
}

TEST(Feasibility, ParallelCircuitWithNoFlowChangesNothing) {
    const auto c = symmetric_tie_case();
    const auto base = solve(c, SolverOptions{});
    ASSERT_TRUE(base.converged());
    const auto r = run_contingency(c, {2, 3, 1}, SolverOptions{});
    ASSERT_EQ(r.outcome, ContingencyOutcome::Solved) << r.message;
    ASSERT_TRUE(r.report);
    EXPECT_EQ(r.report->verdict, Verdict::Feasible);
    const auto outage = remove_branch(c, 2, 3, 1);
    const auto after = solve(outage, SolverOptions{});
    for (std::size_t k = 0; k < c.buses.size(); ++k)
        EXPECT_LT(std::abs(after.state.voltage(k) - base.state.voltage(k)), 1e-6);
}

TEST(Feasibility, LosingParallelCircuitExceedsTransferLimit) {
    const auto c = transfer_limited_case();
    EXPECT_EQ(feasibility_solve(c, SolverOptions{}).verdict, Verdict::Feasible);
    const auto r = run_contingency(c, {1, 2, 1}, SolverOptions{});
    ASSERT_EQ(r.outcome, ContingencyOutcome::Solved) << r.message;
    ASSERT_TRUE(r.report);
    EXPECT_EQ(r.report->verdict, Verdict::Infeasible);
    EXPECT_GT(r.report->p_inf, 1e-3);
}

TEST(Feasibility, IslandingAndMissingBranch) {
    const auto c = transfer_limited_case();
    const auto r = run_contingency(c, {2, 3, 1}, SolverOptions{});
    EXPECT_EQ(r.outcome, ContingencyOutcome::Islanding);
    EXPECT_FALSE(r.report);
    EXPECT_THROW(run_contingency(c, {1, 3, 1}, SolverOptions{}), CaseError);
    EXPECT_THROW(run_contingency(c, {1, 2, 3}, SolverOptions{}), CaseError);
}

TEST(Feasibility, N1ResultsIndependentOfThreadCount) {
    const auto c = load_data_case("case14.m");
    SolverOptions o;
    o.homotopy.enabled = true;
    const auto one = run_n1(c, o, 1);
    const auto many = run_n1(c, o, 4);
    const auto specs = all_branch_specs(c);
    ASSERT_EQ(one.size(), specs.size());
    ASSERT_EQ(many.size(), specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        EXPECT_EQ(one[i].branch.from_bus, specs[i].from_bus);
        EXPECT_EQ(one[i].branch.ordinal, specs[i].ordinal);
        EXPECT_EQ(one[i].outcome, many[i].outcome);
        if (one[i].report && many[i].report) {
            EXPECT_EQ(one[i].report->p_inf, many[i].report->p_inf);
            EXPECT_EQ(one[i].report->verdict, many[i].report->verdict);
        }
    }
    // Bus 8 hangs off bus 7 alone.
    const auto islanding = std::count_if(one.begin(), one.end(), [](const ContingencyResult& r) {
        return r.outcome == ContingencyOutcome::Islanding;
    });
    EXPECT_EQ(islanding, 1);
}
