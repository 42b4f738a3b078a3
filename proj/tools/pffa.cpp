// pffa: power-flow feasibility analysis from the command line.

#include <CLI11.hpp>

#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pffa/pffa.hpp"

namespace {

struct Common {
    std::string case_path;
    std::string config;
    double loading = 1.0;
    std::string loading_mode = "loads";
    std::string feasibility = "on";
    std::string homotopy;
    double y_scale = -1.0;
    std::string qlimits;
    std::string placement;
    std::string placement_file;
    std::string start;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_loading) {
    cmd->add_option("case", c.case_path, "MATPOWER .m or native .json case file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", c.config, "options file (key = value lines or a JSON object)")
        ->check(CLI::ExistingFile);
    if (with_loading) cmd->add_option("--loading", c.loading, "load multiplier")->check(CLI::NonNegativeNumber);
    cmd->add_option("--loading-mode", c.loading_mode, "scale loads only, or loads and generation")
        ->check(CLI::IsMember({"loads", "all"}));
    cmd->add_option("--feasibility", c.feasibility, "couple the adjoint circuit")->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--homotopy", c.homotopy, "Tx-stepping continuation")->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--y-scale", c.y_scale, "homotopy admittance scale Y")->check(CLI::NonNegativeNumber);
    cmd->add_option("--qlimits", c.qlimits, "reactive-limit handling")->check(CLI::IsMember({"outer", "ignore"}));
    cmd->add_option("--placement", c.placement, "feasibility sources: all, loads, file or a list of bus ids");
    cmd->add_option("--placement-file", c.placement_file, "bus ids, whitespace or comma separated")
        ->check(CLI::ExistingFile);
    cmd->add_option("--start", c.start, "initial point")->check(CLI::IsMember({"flat", "input"}));
    cmd->add_option("--out", c.out, "write the result to a .json or .csv file");
}

pffa::SolverOptions make_options(const Common& c, bool homotopy_default) {
    pffa::SolverOptions o;
    o.homotopy.enabled = homotopy_default;
    if (!c.config.empty()) o = pffa::load_options(c.config, o);
    o.feasibility = c.feasibility == "on";
    if (!c.homotopy.empty()) o.homotopy.enabled = c.homotopy == "on";
    if (c.y_scale >= 0.0) o.homotopy.y_scale = c.y_scale;
    if (!c.qlimits.empty()) pffa::apply_option(o, "q_limits", c.qlimits);
    if (!c.start.empty()) pffa::apply_option(o, "start", c.start == "input" ? "input" : "flat");
    if (c.placement == "file") {
        if (c.placement_file.empty()) throw std::invalid_argument("--placement file needs --placement-file");
        std::ifstream in(c.placement_file);
        std::stringstream ss;
        ss << in.rdbuf();
        std::string ids = ss.str();
        for (auto& ch : ids)
            if (std::isspace(static_cast<unsigned char>(ch))) ch = ',';
        o.placement = pffa::parse_placement(ids);
    } else if (!c.placement.empty()) {
        o.placement = pffa::parse_placement(c.placement);
    }
    o.validate();
    return o;
}

pffa::LoadingMode loading_mode(const Common& c) {
    return c.loading_mode == "all" ? pffa::LoadingMode::LoadsAndGeneration : pffa::LoadingMode::LoadsOnly;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

template <class T>
void emit(const std::string& path, const T& value) {
    if (path.empty()) return;
    write_text(path, ends_with(path, ".csv") ? pffa::to_csv(value) : pffa::to_json(value).dump(2) + "\n");
}

pffa::NetworkCase read_case(const std::string& path) {
    std::vector<std::string> warnings;
    auto c = pffa::load_case(path, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return c;
}

void print_report(const pffa::FeasibilityReport& r, std::size_t top = 10) {
    std::cout << "verdict: " << to_string(r.verdict) << "\n"
              << "P_INF: " << r.p_inf << " p.u.\n"
              << "Q_INF: " << r.q_inf << " p.u.\n"
              << "objective: " << r.objective << "\n"
              << "max |I_F|: " << r.max_if << "\n";
    if (r.verdict == pffa::Verdict::Infeasible) {
        std::cout << "largest deficiencies (bus, p_def, q_def, norm_mag):\n";
        for (std::size_t i = 0; i < std::min(top, r.buses.size()); ++i) {
            const auto& b = r.buses[i];
            std::cout << "  " << b.bus << "  " << b.p_def << "  " << b.q_def << "  " << b.norm_mag << "\n";
        }
    }
}

int run_solve(const Common& c, const std::string& dump_matrix, bool second_order) {
    const auto base = read_case(c.case_path);
    const auto net = pffa::apply_loading_factor(base, c.loading, loading_mode(c));
    const auto opts = make_options(c, false);
    const auto sol = pffa::solve(net, opts);
    std::cout << "status: " << to_string(sol.status) << "\n"
              << "iterations: " << sol.iterations << "\n"
              << "residual: " << sol.residual << "\n"
              << "seconds: " << sol.seconds << "\n";
    if (!sol.message.empty()) std::cout << "message: " << sol.message << "\n";
    if (!sol.switch_history.empty()) std::cout << "generator switches: " << sol.switch_history.size() << "\n";
    if (!dump_matrix.empty() && sol.state.map) {
        pffa::SystemAssembler asm_(net, sol.state.map, pffa::detail::assembly_options(opts, 0.0, sol.generator_modes));
        std::ofstream f(dump_matrix);
        pffa::write_matrix_market(f, asm_.assemble(sol.state).matrix);
    }
    if (!sol.converged()) {
        if (!c.out.empty() && ends_with(c.out, ".json")) write_text(c.out, pffa::solution_to_json(net, sol).dump(2) + "\n");
        return 2;
    }
    if (!opts.feasibility) {
        if (!c.out.empty()) write_text(c.out, pffa::solution_to_json(net, sol).dump(2) + "\n");
        return 0;
    }
    const auto report = pffa::build_report(net, sol, opts.feasibility_threshold);
    print_report(report);
    if (second_order) {
        const auto so = pffa::check_second_order(net, sol, opts);
        std::cout << "second order: " << to_string(so.kind) << " (" << so.reason << ")\n";
    }
    emit(c.out, report);
    return 0;
}

int run_sweep(const Common& c, double from, double to, double step) {
    const auto net = read_case(c.case_path);
    const auto opts = make_options(c, false);
    const auto result = pffa::loading_sweep(net, pffa::factor_range(from, to, step), opts, loading_mode(c));
    std::cout << "factor  verdict     P_INF         Q_INF         iterations\n";
    for (const auto& p : result.points) {
        std::cout << p.factor << "  " << (p.converged ? to_string(p.verdict) : "failed") << "  " << p.p_inf << "  "
                  << p.q_inf << "  " << p.iterations;
        if (!p.converged) std::cout << "  (" << p.message << ")";
        std::cout << "\n";
    }
    if (result.collapse_estimate) std::cout << "collapse estimate: " << *result.collapse_estimate << "\n";
    emit(c.out, result);
    return 0;
}

int run_collapse(const Common& c, double lo, double hi, double tol) {
    const auto net = read_case(c.case_path);
    const auto opts = make_options(c, false);
    const double x = pffa::find_collapse_point(net, lo, hi, tol, opts, loading_mode(c));
    std::cout << "collapse loading factor: " << x << " (tolerance " << tol << ")\n";
    if (!c.out.empty())
        write_text(c.out, nlohmann::json{{"schema", "pffa.collapse-point"},
                                         {"version", pffa::kReportSchemaVersion},
                                         {"collapse_factor", x},
                                         {"lo", lo},
                                         {"hi", hi},
                                         {"tol", tol}}
                                  .dump(2) + "\n");
    return 0;
}

pffa::BranchSpec parse_branch(const std::string& text) {
    std::vector<int> parts;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) parts.push_back(std::stoi(item));
    if (parts.size() < 2 || parts.size() > 3) throw std::invalid_argument("--branch expects FROM,TO[,ORDINAL]");
    return {parts[0], parts[1], parts.size() == 3 ? parts[2] : 1};
}

int run_n1(const Common& c, const std::string& branch, unsigned threads) {
    const auto net = pffa::apply_loading_factor(read_case(c.case_path), c.loading, loading_mode(c));
    const auto opts = make_options(c, true);
    std::vector<pffa::ContingencyResult> results;
    if (!branch.empty()) {
        results.push_back(pffa::run_contingency(net, parse_branch(branch), opts));
        if (results.back().report) print_report(*results.back().report);
    } else {
        results = pffa::run_n1(net, opts, threads);
    }
    std::size_t infeasible = 0;
    for (const auto& r : results) {
        std::cout << r.branch.from_bus << "-" << r.branch.to_bus << " #" << r.branch.ordinal << "  "
                  << to_string(r.outcome);
        if (r.report) {
            std::cout << "  " << to_string(r.report->verdict) << "  P_INF=" << r.report->p_inf
                      << "  Q_INF=" << r.report->q_inf;
            if (r.report->verdict == pffa::Verdict::Infeasible) {
                ++infeasible;
                std::cout << "  worst bus " << r.report->buses.front().bus;
            }
        } else if (!r.message.empty()) {
            std::cout << "  (" << r.message << ")";
        }
        std::cout << "\n";
    }
    std::cout << results.size() << " contingencies, " << infeasible << " infeasible\n";
    if (!c.out.empty()) {
        if (branch.empty() || ends_with(c.out, ".csv") || !results.front().report) emit(c.out, results);
        else emit(c.out, *results.front().report);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-flow feasibility analysis"};
    app.require_subcommand(1);

    Common solve_c, sweep_c, collapse_c, n1_c;
    std::string dump_matrix;
    bool second_order = false;
    auto* solve = app.add_subcommand("solve", "power flow or feasibility solve of one case");
    add_common(solve, solve_c, true);
    solve->add_option("--dump-matrix", dump_matrix, "write the final system matrix (Matrix Market)");
    solve->add_flag("--second-order", second_order, "classify an infeasible solution as minimum or saddle");

    double from = 0.0, to = 0.0, step = 0.0;
    auto* sweep = app.add_subcommand("sweep", "feasibility over a range of loading factors");
    add_common(sweep, sweep_c, false);
    sweep->add_option("--from", from, "first loading factor")->required();
    sweep->add_option("--to", to, "last loading factor")->required();
    sweep->add_option("--step", step, "factor increment")->required();

    double lo = 0.0, hi = 0.0, tol = 1e-4;
    auto* collapse = app.add_subcommand("collapse", "bisection for the maximum feasible loading factor");
    add_common(collapse, collapse_c, false);
    collapse->add_option("--lo", lo, "loading factor known to be feasible")->required();
    collapse->add_option("--hi", hi, "loading factor known to be infeasible")->required();
    collapse->add_option("--tol", tol, "bracket width")->check(CLI::PositiveNumber);

    std::string branch;
    bool all = false;
    unsigned threads = 0;
    auto* n1 = app.add_subcommand("n1", "branch contingencies (homotopy on unless --homotopy off)");
    add_common(n1, n1_c, true);
    auto* branch_opt = n1->add_option("--branch", branch, "FROM,TO[,ORDINAL]");
    n1->add_flag("--all", all, "every in-service branch (default)")->excludes(branch_opt);
    n1->add_option("--threads", threads, "worker threads, 0 for all cores");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*solve) return run_solve(solve_c, dump_matrix, second_order);
        if (*sweep) return run_sweep(sweep_c, from, to, step);
        if (*collapse) return run_collapse(collapse_c, lo, hi, tol);
        if (*n1) return run_n1(n1_c, branch, threads);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
