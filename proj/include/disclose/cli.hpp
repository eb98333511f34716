#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "disclose/benchmark.hpp"
#include "disclose/designer.hpp"
#include "disclose/disclosure.hpp"
#include "disclose/io.hpp"
#include "disclose/model.hpp"
#include "disclose/verify.hpp"

// Command driver shared by the binary and the tests. Every command reads a
// market file, writes its artifacts under --out with stable names (path.csv,
// welfare.csv, report.txt), and reports through the exit status:
//
//   0  success
//   2  configuration error (bad arguments, unreadable or invalid files)
//   3  infeasible or unsupported policy
//   4  a verification check failed

namespace disclose {

enum class ExitStatus : int {
    Ok = 0,
    ConfigError = 2,
    Infeasible = 3,
    VerificationFailed = 4,
};

struct RunSpec {
    std::string command;      // benchmark | equilibrium | optimal | simulate |
                              // search | verify
    std::string market_file;
    std::string policy_file;  // required by equilibrium and simulate
    std::string output_dir = ".";
    Real step = 0.01;         // CSV sampling step
    Real horizon = 50.0;      // solve horizon; grid horizon for search
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    Real dt = 0.01;           // grid time step for search
    Real mass_step = 0.25;    // grid mass step for search
    Real tolerance = 1e-8;    // incentive slack tolerance
};

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& dir, const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw IOError("cannot write " + (dir / name).string());
    return os;
}

inline void require(bool ok, const char* what) {
    if (!ok) throw IOError(what);
}

inline std::string yes_no(bool b) { return b ? "yes" : "no"; }

inline void print_welfare_rows(std::ostream& os, const Market& m,
                               const WelfareReport& a, const WelfareReport* b) {
    for (Index i = 1; i <= m.n_cohorts(); ++i) {
        os << "  " << i << "  " << format_real(a.per_cohort[i - 1]);
        if (b)
            os << "  " << format_real(b->per_cohort[i - 1]) << "  "
               << format_real(a.per_cohort[i - 1] - b->per_cohort[i - 1]);
        os << '\n';
    }
    os << "  total  " << format_real(a.total);
    if (b) os << "  " << format_real(b->total) << "  " << format_real(a.total - b->total);
    os << '\n';
}

inline ExitStatus run_benchmark(const RunSpec& spec, const Market& m,
                                const std::filesystem::path& out) {
    BenchmarkPath bp = solve_transparent(m);
    {
        auto os = open_out(out, "path.csv");
        write_path_csv(os, m, bp, spec.step, spec.horizon);
    }
    auto rep = open_out(out, "report.txt");
    rep << "transparent benchmark\n";
    for (std::size_t i = 0; i < bp.phases.size(); ++i) {
        const auto& p = bp.phases[i];
        rep << "  phase " << i + 1 << ": cohort " << p.cohort << "  t "
            << format_real(p.t_start) << " .. " << format_real(p.t_end) << "  q "
            << format_real(p.q_start) << " .. " << format_real(p.q_end)
            << "  x_start " << format_real(p.x_start) << '\n';
    }
    if (bp.dryout && bp.final_mass < m.total_mass())
        rep << "  dries out: q -> " << format_real(*bp.dryout) << '\n';
    else
        rep << "  terminal time " << format_real(bp.terminal_time) << '\n';
    rep << "  final mass " << format_real(bp.final_mass) << '\n';
    return ExitStatus::Ok;
}

inline ExitStatus run_equilibrium(const RunSpec& spec, const Market& m,
                                  const std::filesystem::path& out) {
    require(!spec.policy_file.empty(), "equilibrium requires a policy file");
    DisclosurePolicy policy = load_policy_file(spec.policy_file);
    EquilibriumPath path = solve_equilibrium(m, policy, spec.horizon);
    WelfareReport wr = welfare(m, path);
    ICReport ic = verify_ic(m, policy, path, make_deviation_grid(path), spec.tolerance);
    {
        auto os = open_out(out, "path.csv");
        write_path_csv(os, m, path, spec.step);
    }
    {
        auto os = open_out(out, "welfare.csv");
        write_welfare_csv(os, m, wr);
    }
    auto rep = open_out(out, "report.txt");
    rep << "equilibrium under " << policy_to_json(policy).dump() << '\n';
    rep << "  end time " << format_real(path.end_time) << ", final q "
        << format_real(path.final_q) << ", hat cohort " << path.hat_cohort << '\n';
    rep << "  phase times:";
    for (Real t : path.phase_times) rep << ' ' << format_real(t);
    rep << '\n';
    rep << "welfare\n";
    rep << "  good-news release term " << format_real(wr.good_release_term) << '\n';
    rep << "  no-news investment term " << format_real(wr.no_news_invest_term) << '\n';
    rep << "  investment atom term " << format_real(wr.atom_term) << '\n';
    print_welfare_rows(rep, m, wr, nullptr);
    rep << "incentives\n";
    rep << "  deviations checked " << ic.samples.size() << ", min slack "
        << format_real(ic.min_slack) << ", pass " << yes_no(ic.pass) << '\n';
    return ic.pass ? ExitStatus::Ok : ExitStatus::VerificationFailed;
}

inline ExitStatus run_optimal(const RunSpec& spec, const Market& m,
                              const std::filesystem::path& out) {
    OptimalPlan plan = optimal_policy(m);
    save_policy_file((out / "policy.json").string(), plan.policy);
    EquilibriumPath path = solve_equilibrium(m, plan.policy, spec.horizon);
    WelfareReport wr = welfare(m, path);
    EquilibriumPath tp =
        solve_equilibrium(m, DisclosurePolicy{Transparent{}, Transparent{}}, spec.horizon);
    WelfareReport wt = welfare(m, tp);
    {
        auto os = open_out(out, "path.csv");
        write_path_csv(os, m, path, spec.step);
    }
    {
        auto os = open_out(out, "welfare.csv");
        write_welfare_csv(os, m, wr);
    }
    auto rep = open_out(out, "report.txt");
    rep << "optimal disclosure plan\n";
    rep << "  hat cohort " << plan.hat_i << " of " << m.n_cohorts() << '\n';
    rep << "  phase times:";
    for (Real t : plan.phase_times) rep << ' ' << format_real(t);
    rep << '\n';
    if (plan.release_time)
        rep << "  stored good news released at " << format_real(*plan.release_time)
            << '\n';
    else
        rep << "  no stored release: every cohort invests without one\n";
    rep << "  policy " << policy_to_json(plan.policy).dump() << '\n';
    rep << "welfare (plan vs transparent)\n";
    rep << "  cohort  plan  transparent  gain\n";
    print_welfare_rows(rep, m, wr, &wt);
    return ExitStatus::Ok;
}

inline ExitStatus run_simulate(const RunSpec& spec, const Market& m,
                               const std::filesystem::path& out) {
    require(!spec.policy_file.empty(), "simulate requires a policy file");
    DisclosurePolicy policy = load_policy_file(spec.policy_file);
    EquilibriumPath path = solve_equilibrium(m, policy, spec.horizon);
    WelfareReport wr = welfare(m, path);
    SimEstimate est = simulate(m, policy, path, SimConfig{spec.n_paths, spec.seed, 1e-3});
    {
        auto os = open_out(out, "path.csv");
        write_path_csv(os, m, path, spec.step);
    }
    {
        auto os = open_out(out, "welfare.csv");
        write_welfare_csv(os, m, wr);
    }
    auto rep = open_out(out, "report.txt");
    rep << "simulation, " << spec.n_paths << " paths, seed " << spec.seed << '\n';
    rep << "  mean welfare " << format_real(est.mean_total) << ", std error "
        << format_real(est.std_error) << '\n';
    rep << "  analytic welfare " << format_real(wr.total) << ", deviation "
        << format_real(est.mean_total - wr.total) << '\n';
    rep << "  cohort  mean  analytic\n";
    for (Index i = 1; i <= m.n_cohorts(); ++i)
        rep << "  " << i << "  " << format_real(est.per_cohort_mean[i - 1]) << "  "
            << format_real(wr.per_cohort[i - 1]) << '\n';
    return ExitStatus::Ok;
}

inline ExitStatus run_search(const RunSpec& spec, const Market& m,
                             const std::filesystem::path& out) {
    GridSpec gs;
    gs.dt = spec.dt;
    gs.horizon = spec.horizon;
    gs.mass_step = spec.mass_step;
    gs.ic_tol = spec.tolerance;
    GridSolution sol = grid_search(m, gs);
    if (!(sol.welfare > -kInf)) {
        auto rep = open_out(out, "report.txt");
        rep << "grid search: no incentive-compatible path on this grid\n";
        return ExitStatus::Infeasible;
    }
    {
        auto os = open_out(out, "path.csv");
        write_step_csv(os, m, sol.problem.times, sol.problem.q, sol.problem.z_good,
                       sol.problem.z_bad);
    }
    auto rep = open_out(out, "report.txt");
    rep << "grid search, dt " << format_real(sol.problem.dt) << ", horizon "
        << format_real(sol.problem.horizon) << ", mass step "
        << format_real(spec.mass_step) << '\n';
    rep << "  welfare " << format_real(sol.welfare) << '\n';
    rep << "  nodes " << sol.nodes << ", exhaustive " << yes_no(sol.exhaustive) << '\n';
    rep << "  incentive compatible " << yes_no(sol.ic_ok) << '\n';
    rep << "  bad news released at phase boundaries "
        << yes_no(sol.bad_released_at_boundaries) << '\n';
    rep << "  good news withheld before last phase "
        << yes_no(sol.good_withheld_before_last_phase) << '\n';
    rep << "  steps with activity (t, dq, dz_good, dz_bad):\n";
    const auto& p = sol.problem;
    for (std::size_t k = 1; k < p.times.size(); ++k) {
        Real dq = p.q[k] - p.q[k - 1];
        Real dzg = p.z_good[k] - p.z_good[k - 1];
        Real dzb = p.z_bad[k] - p.z_bad[k - 1];
        if (dq > 0.0 || dzg > 0.0 || dzb > 0.0)
            rep << "    " << format_real(p.times[k]) << "  " << format_real(dq) << "  "
                << format_real(dzg) << "  " << format_real(dzb) << '\n';
    }
    return ExitStatus::Ok;
}

inline ExitStatus run_verify(const RunSpec& spec, const Market& m,
                             const std::filesystem::path& out) {
    DisclosurePolicy policy{Transparent{}, Transparent{}};
    if (!spec.policy_file.empty()) policy = load_policy_file(spec.policy_file);

    std::ostringstream rep;
    bool all_pass = true;
    auto line = [&](const std::string& name, const std::string& status,
                    const std::string& detail) {
        rep << name << ": " << status;
        if (!detail.empty()) rep << "  (" << detail << ")";
        rep << '\n';
    };

    if (m.rate_good > 0.0) {
        JensenReport jr = jensen_contraction_check(m, 1000, spec.seed);
        all_pass = all_pass && jr.pass;
        line("jensen contraction", jr.pass ? "pass" : "FAIL",
             "instances " + std::to_string(jr.instances) + ", min margin " +
                 format_real(jr.min_margin));
    } else {
        line("jensen contraction", "skipped", "no good-news channel");
    }

    BreakdownReport br = check_breakdown_bound(m, policy.good, 200, spec.seed);
    all_pass = all_pass && br.pass;
    line("breakdown bound", br.pass ? "pass" : "FAIL",
         "schedules checked " + std::to_string(br.ic_passed) + ", violations " +
             std::to_string(br.violations) + ", min gap " + format_real(br.min_gap));

    if (m.n_cohorts() == 1 && m.rate_good == m.rate_bad) {
        ObservationReport obs = observation_checks(m);
        all_pass = all_pass && obs.pass;
        line("observation grid", obs.pass ? "pass" : "FAIL",
             "paths " + std::to_string(obs.lattice_paths) + ", early feasible " +
                 std::to_string(obs.early_release_feasible) + ", max cap gap " +
                 format_real(obs.max_zb_gap));
    } else {
        line("observation grid", "skipped", "needs one cohort with equal rates");
    }

    EquilibriumPath path = solve_equilibrium(m, policy, spec.horizon);
    WelfareReport wr = welfare(m, path);
    ICReport ic = verify_ic(m, policy, path, make_deviation_grid(path), spec.tolerance);
    all_pass = all_pass && ic.pass;
    line("equilibrium incentives", ic.pass ? "pass" : "FAIL",
         "min slack " + format_real(ic.min_slack));

    SimEstimate est = simulate(m, policy, path, SimConfig{spec.n_paths, spec.seed, 1e-3});
    Real dev = std::abs(est.mean_total - wr.total);
    Real band = 3.0 * est.std_error + 1e-9 * (1.0 + std::abs(wr.total));
    bool sim_ok = dev <= band;
    all_pass = all_pass && sim_ok;
    line("simulation agreement", sim_ok ? "pass" : "FAIL",
         "mean " + format_real(est.mean_total) + " vs " + format_real(wr.total) +
             ", three std errors " + format_real(3.0 * est.std_error));

    rep << (all_pass ? "all checks passed" : "some checks FAILED") << '\n';
    std::cout << rep.str();
    auto os = open_out(out, "report.txt");
    os << rep.str();
    return all_pass ? ExitStatus::Ok : ExitStatus::VerificationFailed;
}

inline ExitStatus run_checked(const RunSpec& spec) {
    require(!spec.market_file.empty(), "a market file is required");
    require(spec.step > 0.0, "step must be positive");
    require(spec.horizon > 0.0, "horizon must be positive");
    require(spec.n_paths >= 1, "n_paths must be positive");
    require(spec.dt > 0.0, "dt must be positive");
    require(spec.mass_step > 0.0, "mass_step must be positive");
    require(spec.tolerance > 0.0, "tolerance must be positive");

    Market m = load_market_file(spec.market_file);
    std::filesystem::path out(spec.output_dir.empty() ? "." : spec.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IOError("cannot create output directory " + out.string());

    if (spec.command == "benchmark") return run_benchmark(spec, m, out);
    if (spec.command == "equilibrium") return run_equilibrium(spec, m, out);
    if (spec.command == "optimal") return run_optimal(spec, m, out);
    if (spec.command == "simulate") return run_simulate(spec, m, out);
    if (spec.command == "search") return run_search(spec, m, out);
    if (spec.command == "verify") return run_verify(spec, m, out);
    throw IOError("unknown command: " + spec.command);
}

}  // namespace detail

inline ExitStatus run(const RunSpec& spec) {
    try {
        return detail::run_checked(spec);
    } catch (const IOError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ExitStatus::ConfigError;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ExitStatus::ConfigError;
    } catch (const SolveError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == SolveErrorKind::InvalidPolicy ? ExitStatus::ConfigError
                                                         : ExitStatus::Infeasible;
    } catch (const DesignError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ExitStatus::Infeasible;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ExitStatus::ConfigError;
    }
}

}  // namespace disclose
