#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mage/scenario.hpp"

using namespace mage;

namespace {

std::string minimal_config(const std::string& extra_company_field = "",
                           double mu_av = 1.0) {
    std::string cfg = R"({
      "network": "builtin:small",
      "demand": [{"i":1,"j":2,"d":50},{"i":1,"j":3,"d":40},{"i":1,"j":4,"d":50}],
      "solo": {"time_rate": 40, "dist_rate": 0.9},
      "companies": {
        "1": {"fleet": 400, "mu_av": )" + std::to_string(mu_av) + R"(,
              "hv": {"fixed_fare":3,"time_fare_rate":20,"dist_fare_rate":2,
                     "time_cost_rate":2,"dist_cost_rate":0.55,
                     "vehicle_wait_cost_rate":0.2,"traveler_time_value":7,
                     "traveler_wait_value":3)" + extra_company_field + R"(},
              "mu_hv": 1.0},
        "2": {"fleet": 400,
              "hv": {"fixed_fare":2,"time_fare_rate":15,"dist_fare_rate":1.5,
                     "time_cost_rate":2,"dist_cost_rate":0.9,
                     "vehicle_wait_cost_rate":0.1,"traveler_time_value":18,
                     "traveler_wait_value":2}}
      }
    })";
    return cfg;
}

}  // namespace

TEST_CASE("loads the two-company HV-only benchmark config") {
    Scenario scn = load_scenario(minimal_config());
    CHECK(scn.companies.size() == 2);
    CHECK(scn.companies.at(1).hv.has_value());
    CHECK_FALSE(scn.companies.at(1).av.has_value());
    CHECK(scn.companies.at(1).hv->dist_cost_rate == doctest::Approx(0.55));
    CHECK(scn.demand.at({1, 3}) == doctest::Approx(40.0));
    // defaults are logged
    bool logged = false;
    for (const auto& p : scn.provenance)
        if (p.find("bpr_alpha") != std::string::npos) logged = true;
    CHECK(logged);
    CHECK(scn.cost.bpr_alpha == doctest::Approx(0.15));
}

TEST_CASE("relaxation below one is rejected") {
    CHECK_THROWS_WITH_AS(load_scenario(minimal_config("", 0.9)),
                         doctest::Contains("relaxation must be >= 1"),
                         std::runtime_error);
}

TEST_CASE("unknown company field is rejected") {
    CHECK_THROWS_WITH_AS(load_scenario(minimal_config(",\"mystery\":1")),
                         doctest::Contains("unknown field 'mystery'"),
                         std::runtime_error);
}

TEST_CASE("validation collects multiple violations") {
    std::string cfg = R"({
      "network": "builtin:small",
      "demand": [{"i":1,"j":2,"d":-5}],
      "solo": {"time_rate": 0, "dist_rate": 0.9},
      "companies": {"1": {"fleet": -1,
        "hv": {"traveler_wait_value": 1}}}
    })";
    try {
        load_scenario(cfg);
        FAIL("expected throw");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("demand (1,2) must be > 0") != std::string::npos);
        CHECK(msg.find("solo.time_rate must be > 0") != std::string::npos);
        CHECK(msg.find("fleet must be > 0") != std::string::npos);
    }
}

TEST_CASE("built-in small benchmark matches the published parameters") {
    Scenario scn = build_small_benchmark();
    CHECK(scn.demand.at({1, 2}) == doctest::Approx(50.0));
    CHECK(scn.demand.at({1, 3}) == doctest::Approx(40.0));
    CHECK(scn.demand.at({1, 4}) == doctest::Approx(50.0));
    const VehicleParams& c1 = *scn.companies.at(1).hv;
    CHECK(c1.fixed_fare == doctest::Approx(3.0));
    CHECK(c1.time_fare_rate == doctest::Approx(20.0));
    CHECK(c1.dist_fare_rate == doctest::Approx(2.0));
    CHECK(c1.time_cost_rate == doctest::Approx(2.0));
    CHECK(c1.dist_cost_rate == doctest::Approx(0.55));
    CHECK(c1.vehicle_wait_cost_rate == doctest::Approx(0.2));
    CHECK(c1.traveler_time_value == doctest::Approx(7.0));
    CHECK(c1.traveler_wait_value == doctest::Approx(3.0));
    CHECK(scn.companies.at(1).fleet == doctest::Approx(400.0));
    const VehicleParams& c2 = *scn.companies.at(2).hv;
    CHECK(c2.traveler_time_value == doctest::Approx(18.0));
    CHECK(c2.traveler_wait_value == doctest::Approx(2.0));
}

TEST_CASE("index sets of the small benchmark") {
    Scenario scn = build_small_benchmark();
    IndexSets sets = derive_index_sets(scn);
    CHECK(sets.origins == std::vector<NodeId>{1});
    CHECK(sets.destinations == std::vector<NodeId>{2, 3, 4});
    CHECK(sets.classes.size() == 2);

    const ClassSets& cs = sets.per_class.at({1, VehicleType::HV});
    CHECK(cs.served.size() == 3);
    CHECK(cs.origins == std::vector<NodeId>{1});
    CHECK(cs.dispatch_nodes == std::vector<NodeId>{2, 3, 4});
    CHECK(cs.dispatch_pairs.size() == 3);  // (2,1),(3,1),(4,1)

    auto serving = sets.serving.at({{1, 2}, VehicleType::HV});
    CHECK(serving == std::vector<int>{1, 2});

    // served pairs imply membership of endpoints in class origin/dispatch sets
    for (const auto& [key, c] : sets.per_class)
        for (const auto& [i, j] : c.served) {
            CHECK(std::count(c.origins.begin(), c.origins.end(), i) == 1);
            CHECK(std::count(c.dispatch_nodes.begin(), c.dispatch_nodes.end(),
                             j) == 1);
        }
}

TEST_CASE("class with no served pairs allocates nothing") {
    Scenario scn = build_small_benchmark();
    scn.companies.at(1).av = *scn.companies.at(1).hv;
    scn.companies.at(1).served_av = {};  // empty means all; restrict instead
    scn.companies.at(1).served_av.push_back({1, 2});
    IndexSets sets = derive_index_sets(scn);
    const ClassSets& av = sets.per_class.at({1, VehicleType::AV});
    CHECK(av.served == std::vector<NodePair>{{1, 2}});
    CHECK(av.dispatch_nodes == std::vector<NodeId>{2});
}

TEST_CASE("serialize round trip") {
    Scenario scn = build_small_benchmark();
    std::string s1 = serialize_scenario(scn);
    Scenario scn2 = load_scenario(s1);
    std::string s2 = serialize_scenario(scn2);
    CHECK(s1 == s2);
}

TEST_CASE("catalog covers demand and dispatch pairs") {
    Scenario scn = build_small_benchmark();
    IndexSets sets = derive_index_sets(scn);
    PathCatalog cat = build_catalog(scn, sets);
    for (const auto& od : sets.od_pairs) CHECK(cat.has_pair(od));
    for (const auto& [key, cs] : sets.per_class)
        for (const auto& dp : cs.dispatch_pairs) CHECK(cat.has_pair(dp));
}
