#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

using namespace pffa;
using namespace testing_support;

namespace {

std::string temp_file(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / ("pffa_test_" + name);
    std::ofstream(path) << text;
    return path.string();
}

FeasibilityReport infeasible_report() {
    return feasibility_solve(apply_loading_factor(load_data_case("case11_iwamoto.m"), 1.1), SolverOptions{});
}

}  // namespace

TEST(Io, KeyValueOptions) {
    SolverOptions o;
    apply_key_values(o, R"(# tuning
nr_tolerance = 1e-10
homotopy = on     # Tx-stepping
y_scale = 1000
mu_schedule = 1, 0.1, 0
q_limits = outer
start = flat
placement = 3, 7
aux_step_max = inf
)");
    EXPECT_EQ(o.nr_tolerance, 1e-10);
    EXPECT_TRUE(o.homotopy.enabled);
    EXPECT_EQ(o.homotopy.y_scale, 1000.0);
    EXPECT_EQ(o.homotopy.mu_schedule, (std::vector<double>{1.0, 0.1, 0.0}));
    EXPECT_EQ(o.q_limit_mode, QLimitMode::OuterLoop);
    EXPECT_EQ(o.placement, PlacementPolicy::explicit_set({3, 7}));
    EXPECT_TRUE(std::isinf(o.aux_step_max));
    EXPECT_NO_THROW(o.validate());
}

TEST(Io, BadOptionsRejected) {
    SolverOptions o;
    EXPECT_THROW(apply_option(o, "no_such_key", "1"), std::invalid_argument);
    EXPECT_THROW(apply_option(o, "max_iterations", "ten"), std::invalid_argument);
    EXPECT_THROW(apply_option(o, "homotopy", "maybe"), std::invalid_argument);
    EXPECT_THROW(apply_option(o, "start", "warm"), std::invalid_argument);
    EXPECT_THROW(apply_option(o, "placement", ""), std::invalid_argument);
    EXPECT_THROW(apply_key_values(o, "just text\n"), std::invalid_argument);
}

TEST(Io, OptionFilesInBothFormats) {
    const auto kv = temp_file("opts.conf", "max_iterations = 30\nfeasibility = off\n");
    const auto js = temp_file("opts.json", R"({"max_iterations": 40, "homotopy": true, "mu_schedule": [1, 0.5, 0],
                                              "placement": "loads"})");
    const auto a = load_options(kv);
    EXPECT_EQ(a.max_iterations, 30);
    EXPECT_FALSE(a.feasibility);
    const auto b = load_options(js);
    EXPECT_EQ(b.max_iterations, 40);
    EXPECT_TRUE(b.homotopy.enabled);
    EXPECT_EQ(b.homotopy.mu_schedule, (std::vector<double>{1.0, 0.5, 0.0}));
    EXPECT_EQ(b.placement, PlacementPolicy::load_buses_and_shunts());
    const auto bad = temp_file("bad.conf", "nr_tolerance = -1\n");
    EXPECT_THROW(load_options(bad), std::invalid_argument);
    EXPECT_THROW(load_options("/nonexistent/opts.conf"), std::runtime_error);
}

TEST(Io, ReportJsonRoundTrip) {
    const auto r = infeasible_report();
    const auto j = to_json(r);
    EXPECT_EQ(j["schema"], kReportSchema);
    EXPECT_EQ(j["version"], kReportSchemaVersion);
    EXPECT_EQ(j["verdict"], "infeasible");
    const auto back = report_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.verdict, r.verdict);
    EXPECT_EQ(back.p_inf, r.p_inf);
    EXPECT_EQ(back.q_inf, r.q_inf);
    EXPECT_EQ(back.iterations, r.iterations);
    ASSERT_EQ(back.buses.size(), r.buses.size());
    EXPECT_EQ(back.buses[0].bus, r.buses[0].bus);
    EXPECT_EQ(back.buses[0].if_real, r.buses[0].if_real);
    auto wrong = j;
    wrong["version"] = 99;
    EXPECT_THROW(report_from_json(wrong), std::invalid_argument);
    wrong = j;
    wrong["schema"] = "other";
    EXPECT_THROW(report_from_json(wrong), std::invalid_argument);
}

TEST(Io, ReportCsvHasOneRowPerBus) {
    const auto r = infeasible_report();
    std::istringstream in(to_csv(r));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "bus,if_real,if_imag,p_def,q_def,norm_mag");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
    }
    EXPECT_EQ(rows, r.buses.size());
}

TEST(Io, SweepAndContingencySerialization) {
    const auto c = load_data_case("case11_iwamoto.m");
    const auto s = loading_sweep(c, {0.99, 1.0}, SolverOptions{});
    const auto j = to_json(s);
    EXPECT_EQ(j["schema"], "pffa.loading-sweep");
    EXPECT_EQ(j["points"].size(), 2u);
    EXPECT_NEAR(j["collapse_estimate"].get<double>(), 0.995, 1e-12);
    const auto sweep_csv = to_csv(s);
    EXPECT_EQ(std::count(sweep_csv.begin(), sweep_csv.end(), '\n'), 3);

    SolverOptions o;
    o.homotopy.enabled = true;
    const auto list = run_n1(c, o, all_branch_specs(c), 2);
    const auto lj = to_json(list);
    EXPECT_EQ(lj["schema"], "pffa.contingency-list");
    EXPECT_EQ(lj["contingencies"].size(), list.size());
    const auto csv = to_csv(list);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "from_bus,to_bus,ordinal,outcome,verdict,p_inf,q_inf,worst_bus");
    EXPECT_NE(csv.find("islanding"), std::string::npos);
}

TEST(Io, SolutionJsonAndMatrixMarket) {
    const auto c = three_bus_pv_case();
    const auto sol = solve(c, SolverOptions{});
    const auto j = solution_to_json(c, sol);
    EXPECT_EQ(j["status"], "converged");
    EXPECT_EQ(j["buses"].size(), 3u);
    ASSERT_EQ(j["generators"].size(), 1u);
    EXPECT_EQ(j["generators"][0]["mode"], "regulating");
    EXPECT_NEAR(j["buses"][1]["vm"].get<double>(), 1.01, 1e-10);

    const auto sys = assemble_coupled(c, sol.state);
    std::ostringstream os;
    write_matrix_market(os, sys.matrix);
    std::istringstream in(os.str());
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "%%MatrixMarket matrix coordinate real general");
    std::size_t n = 0, m = 0, nnz = 0;
    in >> n >> m >> nnz;
    EXPECT_EQ(n, sys.matrix.n);
    EXPECT_EQ(nnz, sys.matrix.nnz());
}

TEST(Io, LoadCaseDispatchesOnExtension) {
    const auto c = load_data_case("case14.m");
    const auto path = temp_file("case14.json", emit_native_json(c));
    EXPECT_EQ(load_case(path), c);
    EXPECT_THROW(load_case("/nonexistent/case.m"), std::runtime_error);
}
