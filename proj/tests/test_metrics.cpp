#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mage/metrics.hpp"
#include "mage/mcp_solver.hpp"

#include <cmath>

#include "json.hpp"

using namespace mage;

namespace {

/// One OD pair, one link each way, one HV company: every KPI is hand
/// computable.
Scenario two_link_scenario() {
    Scenario scn;
    scn.network = make_network({{1, 1, 2, 0.5, 10.0, 100.0},
                                {2, 2, 1, 0.5, 12.0, 100.0}});
    VehicleParams hv;
    hv.fixed_fare = 3.0;
    hv.time_fare_rate = 20.0;
    hv.dist_fare_rate = 2.0;
    hv.time_cost_rate = 2.0;
    hv.dist_cost_rate = 0.55;
    hv.vehicle_wait_cost_rate = 0.2;
    hv.traveler_time_value = 7.0;
    hv.traveler_wait_value = 3.0;
    CompanyParams c;
    c.hv = hv;
    c.fleet = 100.0;
    scn.companies[1] = c;
    scn.solo = {40.0, 0.9};
    scn.demand[{1, 2}] = 10.0;
    scn.paths.mode = PathGenMode::AllSimple;
    scn.paths.k = 5;
    return scn;
}

Eigen::VectorXd solve_benchmark(const EquilibriumSystem& sys) {
    BoxMcp p;
    p.n = sys.dimension();
    p.lo = sys.lower();
    p.hi = sys.upper();
    p.residual = [&](const Eigen::VectorXd& x) { return sys.residual(x); };
    p.jacobian = [&](const Eigen::VectorXd& x) { return sys.jacobian(x); };
    SolverOptions opts;
    opts.tol = 1e-8;
    opts.max_iters = 600;
    auto [x, trace] = solve(p, opts, sys.initial_state());
    REQUIRE(trace.converged);
    return x;
}

}  // namespace

TEST_CASE("zero flows give zero mileage KPIs") {
    EquilibriumSystem sys(two_link_scenario());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.dimension());
    // huge tolerance bypasses the solved-state gate for this boundary case
    EquilibriumReport rep = compute_kpis(sys, x, 1e9);
    CHECK(rep.vmt == 0.0);
    CHECK(rep.vht_total == 0.0);
    CHECK(rep.dhm == 0.0);
    CHECK(rep.avg_wait_minutes == 0.0);
}

TEST_CASE("unsolved state is refused") {
    EquilibriumSystem sys(build_small_benchmark());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.dimension());
    CHECK_THROWS_WITH_AS(compute_kpis(sys, x),
                         doctest::Contains("not an equilibrium"),
                         std::runtime_error);
}

TEST_CASE("single-path mileage oracle") {
    EquilibriumSystem sys(two_link_scenario());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.dimension());
    NodePair od{1, 2};
    x[sys.dsv_index(od)] = 10.0;
    x[sys.h_sv_indices(od)[0]] = 10.0;  // forward link, 10 mi
    x[sys.h_pickup_indices(1, VehicleType::HV, 2, 1)[0]] = 2.0;  // 12 mi back
    EquilibriumReport rep = compute_kpis(sys, x, 1e9);

    CHECK(rep.vmt == doctest::Approx(10.0 * 10.0 + 2.0 * 12.0));
    CHECK(rep.dhm == doctest::Approx(2.0 * 12.0));
    // BPR: 0.5 (1 + 0.15 (v/100)^4) per link
    double t1 = 0.5 * (1.0 + 0.15 * std::pow(0.10, 4));
    double t2 = 0.5 * (1.0 + 0.15 * std::pow(0.02, 4));
    CHECK(rep.vht_total == doctest::Approx(10.0 * t1 + 2.0 * t2).epsilon(1e-12));
    CHECK(rep.vht_per_trip ==
          doctest::Approx((10.0 * t1 + 2.0 * t2) / 10.0).epsilon(1e-12));
    CHECK(rep.avg_wardrop_hours == doctest::Approx(t1).epsilon(1e-12));
    CHECK(rep.solo_share == doctest::Approx(1.0));
}

TEST_CASE("volume-based and path-based mileage agree") {
    EquilibriumSystem sys(build_small_benchmark());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.dimension());
    // deterministic synthetic flows on every path variable
    int i = 0;
    for (const auto& [var, pid] : sys.h_vars()) x[var] = 1.0 + 0.1 * (i++ % 7);
    EquilibriumReport rep = compute_kpis(sys, x, 1e9);
    double path_vmt = 0.0;
    for (const auto& [var, pid] : sys.h_vars())
        path_vmt +=
            x[var] * path_length(sys.scenario().network,
                                 sys.catalog().paths[pid]);
    CHECK(rep.vmt == doctest::Approx(path_vmt).epsilon(1e-9));
}

TEST_CASE("profit matches the dispatch-margin evaluation") {
    EquilibriumSystem sys(two_link_scenario());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.dimension());
    NodePair od{1, 2};
    double z = 5.0, d = 4.0, t_ij = 0.6, t_si = 0.2;
    x[sys.z_index(1, VehicleType::HV, 2, od)] = z;
    x[sys.d_index(1, VehicleType::HV, od)] = d;
    x[sys.t_service_index(1, VehicleType::HV, od)] = t_ij;
    x[sys.t_pickup_index(1, VehicleType::HV, 2, 1)] = t_si;
    EquilibriumReport rep = compute_kpis(sys, x, 1e9);

    // hand oracle: fare 3 + 20(0.6-0.5) + 2*10 = 25;
    // margin 25 - 2*0.8 - 0.55*(12+10) + 0.2*0.2 = 11.34
    CHECK(rep.companies.at(1).avg_fare_hv == doctest::Approx(25.0));
    CHECK(rep.companies.at(1).profit_hv == doctest::Approx(5.0 * 11.34));

    // independent evaluation through the fixed-revenue decomposition
    double alt = z * (sys.fixed_revenue(1, VehicleType::HV, 2, od) +
                      20.0 * t_ij - 2.0 * (t_si + t_ij) + 0.2 * t_si);
    CHECK(rep.companies.at(1).profit_hv == doctest::Approx(alt).epsilon(1e-9));
}

TEST_CASE("solved benchmark passes every audit") {
    EquilibriumSystem sys(build_small_benchmark());
    Eigen::VectorXd x = solve_benchmark(sys);
    EquilibriumReport rep = compute_kpis(sys, x);
    for (const AuditResult& a : rep.audits) {
        INFO(a.name, " worst ", a.worst, " at ", a.detail);
        CHECK(a.pass);
    }
    double share_sum = rep.solo_share;
    for (const auto& [k, ck] : rep.companies) share_sum += ck.share;
    CHECK(share_sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::isfinite(rep.vmt));
    CHECK(std::isfinite(rep.avg_wait_minutes));
    CHECK(rep.vmt > 0.0);
}

TEST_CASE("perturbed flow trips the balance audit") {
    EquilibriumSystem sys(build_small_benchmark());
    Eigen::VectorXd x = solve_benchmark(sys);
    x[sys.h_sv_indices({1, 2})[0]] += 1.0;
    auto audits = audit_equilibrium(sys, x, 1e-6);
    bool found = false;
    for (const AuditResult& a : audits)
        if (a.name == "flow balance") {
            found = true;
            CHECK_FALSE(a.pass);
            CHECK(a.worst == doctest::Approx(1.0).epsilon(1e-6));
            CHECK(a.detail.find("solo od (1,2)") != std::string::npos);
        }
    CHECK(found);
}

TEST_CASE("report serialization") {
    EquilibriumSystem sys(build_small_benchmark());
    Eigen::VectorXd x = solve_benchmark(sys);
    EquilibriumReport rep = compute_kpis(sys, x);

    auto j = nlohmann::json::parse(rep.to_json());
    CHECK(j.contains("kpis"));
    CHECK(j["kpis"]["vmt"].get<double>() == doctest::Approx(rep.vmt));
    CHECK(j["audits"].size() == rep.audits.size());
    CHECK(j["companies"].contains("1"));

    std::string header = EquilibriumReport::csv_header();
    std::string row = rep.csv_row("base");
    CHECK(std::count(header.begin(), header.end(), ',') ==
          std::count(row.begin(), row.end(), ','));
    CHECK(row.rfind("base,", 0) == 0);
}
