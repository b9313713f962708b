#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mage/sweep.hpp"

#include <sstream>

using namespace mage;

namespace {

const char* kSweepCfg = R"({
  "base": "builtin:small",
  "workers": 2,
  "axes": [
    {"param": "policy.av_cap", "values": [0.5, 1.0]},
    {"param": "companies.1.mu_hv", "values": [1.0, 1.1]}
  ]
})";

int line_count(const std::string& s) {
    return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("axis application and validation") {
    Scenario scn = build_small_benchmark();
    apply_axis(scn, "policy.av_cap", 0.4);
    CHECK(scn.av_cap == 0.4);
    apply_axis(scn, "companies.2.mu_hv", 1.3);
    CHECK(scn.companies.at(2).mu_hv == 1.3);

    CHECK_THROWS_WITH_AS(apply_axis(scn, "policy.av_cap", 0.0),
                         doctest::Contains("av_cap"), std::runtime_error);
    CHECK_THROWS_WITH_AS(apply_axis(scn, "companies.1.mu_hv", 0.5),
                         doctest::Contains("relaxation must be >= 1"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(apply_axis(scn, "companies.9.mu_av", 1.2),
                         doctest::Contains("unknown company"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(apply_axis(scn, "solo.time_rate", 10.0),
                         doctest::Contains("unsupported sweep parameter"),
                         std::runtime_error);
}

TEST_CASE("sweep config parsing") {
    SweepSpec spec = load_sweep(kSweepCfg);
    CHECK(spec.workers == 2);
    REQUIRE(spec.axes.size() == 2);
    CHECK(spec.axes[0].param == "policy.av_cap");
    CHECK(spec.axes[1].values == std::vector<double>{1.0, 1.1});

    CHECK_THROWS_WITH_AS(load_sweep("{\"axes\": []}"),
                         doctest::Contains("base scenario"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(load_sweep("{\"base\": \"builtin:small\"}"),
                         doctest::Contains("axes"), std::runtime_error);
    CHECK_THROWS_WITH_AS(
        load_sweep("{\"base\": \"builtin:small\", \"axes\": "
                   "[{\"param\": \"companies.1.mu_hv\", \"values\": [0.9]}]}"),
        doctest::Contains("relaxation"), std::runtime_error);
}

TEST_CASE("grid run: row count, flags, determinism") {
    SweepSpec spec = load_sweep(kSweepCfg);
    SolverOptions opts;
    opts.tol = 1e-7;
    opts.max_iters = 600;
    SweepResult serial = run_sweep(spec, opts, 1);
    REQUIRE(serial.rows.size() == 4);
    CHECK(serial.failed == 0);
    for (const SweepRow& r : serial.rows) {
        CHECK(r.converged);
        CHECK(r.residual <= opts.tol);
        CHECK_FALSE(r.kpi_cells.empty());
    }
    // sorted by axis values
    CHECK(serial.rows.front().axis_values ==
          std::vector<double>{0.5, 1.0});
    CHECK(serial.rows.back().axis_values == std::vector<double>{1.0, 1.1});

    SweepResult parallel = run_sweep(spec, opts, 4);
    CHECK(serial.to_csv() == parallel.to_csv());

    std::string csv = serial.to_csv();
    CHECK(line_count(csv) == 5);  // header + one row per grid point
    CHECK(csv.rfind("policy.av_cap,companies.1.mu_hv,converged,residual,vmt",
                    0) == 0);
}

TEST_CASE("single-point sweep matches a direct solve") {
    SweepSpec spec = load_sweep(R"({
      "base": "builtin:small",
      "axes": [{"param": "companies.1.mu_hv", "values": [1.0]}]
    })");
    SolverOptions opts;
    opts.tol = 1e-8;
    opts.max_iters = 600;
    SweepResult res = run_sweep(spec, opts, 1);
    REQUIRE(res.rows.size() == 1);
    REQUIRE(res.rows[0].converged);

    EquilibriumSystem sys(build_small_benchmark());
    BoxMcp p;
    p.n = sys.dimension();
    p.lo = sys.lower();
    p.hi = sys.upper();
    p.residual = [&](const Eigen::VectorXd& x) { return sys.residual(x); };
    p.jacobian = [&](const Eigen::VectorXd& x) { return sys.jacobian(x); };
    auto [x, trace] = solve(p, opts, sys.initial_state());
    REQUIRE(trace.converged);
    EquilibriumReport rep = compute_kpis(sys, x, 1e-6);
    CHECK(res.rows[0].kpi_cells == rep.csv_row("").substr(1));
}
