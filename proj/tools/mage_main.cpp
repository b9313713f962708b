#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mage/sweep.hpp"

namespace fs = std::filesystem;
using namespace mage;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Scenario load_from_arg(const std::string& arg) {
    if (arg == "builtin:small") return build_small_benchmark();
    return load_scenario(read_file(arg), fs::path(arg).parent_path().string());
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::vector<double> parse_schedule(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
}

int cmd_solve(const std::string& cfg, const std::string& out_dir, double tol,
              const std::string& tau_schedule, unsigned seed,
              double time_limit) {
    Scenario scn;
    try {
        scn = load_from_arg(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    EquilibriumSystem sys(std::move(scn));

    SolverOptions opts;
    opts.tol = tol;
    opts.max_iters = 600;
    opts.seed = seed;
    opts.time_limit_seconds = time_limit;

    BoxMcp base;
    base.n = sys.dimension();
    base.lo = sys.lower();
    base.hi = sys.upper();
    base.residual = [&sys](const Eigen::VectorXd& x) {
        return sys.residual(x);
    };
    base.jacobian = [&sys](const Eigen::VectorXd& x) {
        return sys.jacobian(x);
    };

    Eigen::VectorXd x;
    SolveTrace trace;
    if (tau_schedule.empty()) {
        std::tie(x, trace) = solve(base, opts, sys.initial_state());
    } else {
        try {
            opts.tau_schedule = parse_schedule(tau_schedule);
        } catch (const std::exception&) {
            std::cerr << "config error: bad --tau-schedule list\n";
            return 1;
        }
        Eigen::VectorXd nu_ref =
            Eigen::VectorXd::Zero(sys.dimension());
        auto family = [&](double tau) {
            BoxMcp p = base;
            p.residual = [&sys, tau, nu_ref](const Eigen::VectorXd& xx) {
                return sys.regularized_residual(xx, tau, nu_ref);
            };
            p.jacobian = [&sys, tau](const Eigen::VectorXd& xx) {
                return sys.regularized_jacobian(xx, tau);
            };
            return p;
        };
        std::tie(x, trace) = solve_homotopy(family, opts, sys.initial_state());
    }

    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "trace.csv", trace.to_csv());
    if (!trace.converged) {
        std::cerr << "solver failed (" << trace.termination << "), residual "
                  << trace.final_residual << "\n";
        return 2;
    }

    EquilibriumReport rep = compute_kpis(sys, x, std::max(tol * 10, 1e-6));
    write_file(fs::path(out_dir) / "report.json", rep.to_json());
    write_file(fs::path(out_dir) / "kpis.csv",
               EquilibriumReport::csv_header() + "\n" + rep.csv_row(cfg) +
                   "\n");
    bool audits_ok = true;
    for (const AuditResult& a : rep.audits) {
        if (!a.pass)
            std::cerr << "audit failed: " << a.name << " worst " << a.worst
                      << " at " << a.detail << "\n";
        audits_ok = audits_ok && a.pass;
    }
    std::cout << "converged, residual " << trace.final_residual << " in "
              << trace.wall_seconds << " s; reports in " << out_dir << "\n";
    return audits_ok ? 0 : 2;
}

int cmd_sweep(const std::string& cfg, const std::string& out_dir, double tol,
              int jobs, double time_limit) {
    SweepSpec spec;
    try {
        spec = load_sweep(read_file(cfg),
                          fs::path(cfg).parent_path().string());
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    SolverOptions opts;
    opts.tol = tol;
    opts.max_iters = 600;
    opts.time_limit_seconds = time_limit;
    SweepResult res = run_sweep(spec, opts, jobs > 0 ? jobs : spec.workers);
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "sweep.csv", res.to_csv());
    std::cout << res.rows.size() << " grid points, " << res.failed
              << " failed; sweep.csv in " << out_dir << "\n";
    if (res.failed == static_cast<int>(res.rows.size())) return 2;
    return res.failed > 0 ? 3 : 0;
}

int cmd_validate(const std::string& cfg) {
    try {
        Scenario scn = load_from_arg(cfg);
        EquilibriumSystem sys(std::move(scn));
        const IndexSets& sets = sys.sets();
        std::cout << "od pairs: " << sets.od_pairs.size() << "\n"
                  << "classes: " << sets.classes.size() << "\n"
                  << "paths: " << sys.catalog().paths.size() << "\n"
                  << "variables: " << sys.dimension() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

int cmd_paths(const std::string& cfg) {
    try {
        Scenario scn = load_from_arg(cfg);
        IndexSets sets = derive_index_sets(scn);
        PathCatalog catalog = build_catalog(scn, sets);
        std::cout << "pair,path_id,free_flow_hours,miles,links\n";
        for (const Path& p : catalog.paths) {
            std::cout << p.od.first << "->" << p.od.second << ',' << p.id
                      << ',' << path_free_flow_time(scn.network, p) << ','
                      << path_length(scn.network, p) << ',';
            for (size_t i = 0; i < p.links.size(); ++i)
                std::cout << (i ? " " : "") << p.links[i];
            std::cout << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed-autonomy ride-hailing equilibrium solver"};
    app.require_subcommand(1);

    std::string cfg, out_dir = ".", tau_schedule;
    double tol = 1e-6;
    double time_limit = 0.0;
    unsigned seed = 0;
    int jobs = 0;

    auto* s = app.add_subcommand("solve", "solve one scenario");
    s->add_option("config", cfg, "scenario JSON or builtin:small")->required();
    s->add_option("--out", out_dir, "output directory");
    s->add_option("--tol", tol, "residual tolerance");
    s->add_option("--tau-schedule", tau_schedule,
                  "comma list engaging fleet-row continuation, e.g. 1,0.1,0");
    s->add_option("--seed", seed, "multistart perturbation seed");
    s->add_option("--time-limit", time_limit,
                  "wall-clock budget in seconds, 0 = unlimited");

    auto* w = app.add_subcommand("sweep", "run a parameter grid");
    w->add_option("config", cfg, "sweep JSON")->required();
    w->add_option("--out", out_dir, "output directory");
    w->add_option("--tol", tol, "residual tolerance");
    w->add_option("--jobs", jobs, "worker override (default from config)");
    w->add_option("--time-limit", time_limit,
                  "per-point wall-clock budget in seconds, 0 = unlimited");

    auto* v = app.add_subcommand("validate", "parse and check a scenario");
    v->add_option("config", cfg, "scenario JSON or builtin:small")->required();

    auto* pa = app.add_subcommand("paths", "dump the path catalog");
    pa->add_option("config", cfg, "scenario JSON or builtin:small")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (s->parsed())
            return cmd_solve(cfg, out_dir, tol, tau_schedule, seed, time_limit);
        if (w->parsed()) return cmd_sweep(cfg, out_dir, tol, jobs, time_limit);
        if (v->parsed()) return cmd_validate(cfg);
        return cmd_paths(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
