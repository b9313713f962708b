#include "mage/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mage {

using nlohmann::json;

namespace {

const char* kVehicleFields[] = {
    "fixed_fare",       "time_fare_rate",        "dist_fare_rate",
    "time_cost_rate",   "dist_cost_rate",        "vehicle_wait_cost_rate",
    "traveler_time_value", "traveler_wait_value", "fare_override",
};

struct Validator {
    std::vector<std::string> errors;
    void fail(const std::string& msg) { errors.push_back(msg); }
    void require(bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    }
    void finish() const {
        if (errors.empty()) return;
        std::string joined = "scenario validation failed:";
        for (const auto& e : errors) joined += "\n  - " + e;
        throw std::runtime_error(joined);
    }
};

VehicleParams parse_vehicle(const json& j, const std::string& where,
                            Validator& v) {
    VehicleParams p;
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* f : kVehicleFields)
            if (it.key() == f) known = true;
        if (!known) v.fail(where + ": unknown field '" + it.key() + "'");
    }
    auto num = [&](const char* f, double& out) {
        if (j.contains(f)) {
            if (!j.at(f).is_number())
                v.fail(where + "." + f + ": expected a number");
            else
                out = j.at(f).get<double>();
        }
    };
    num("fixed_fare", p.fixed_fare);
    num("time_fare_rate", p.time_fare_rate);
    num("dist_fare_rate", p.dist_fare_rate);
    num("time_cost_rate", p.time_cost_rate);
    num("dist_cost_rate", p.dist_cost_rate);
    num("vehicle_wait_cost_rate", p.vehicle_wait_cost_rate);
    num("traveler_time_value", p.traveler_time_value);
    num("traveler_wait_value", p.traveler_wait_value);
    for (double r : {p.fixed_fare, p.time_fare_rate, p.dist_fare_rate,
                     p.time_cost_rate, p.dist_cost_rate,
                     p.vehicle_wait_cost_rate, p.traveler_time_value})
        v.require(r >= 0.0, where + ": rates must be >= 0");
    v.require(p.traveler_wait_value > 0.0,
              where + ": traveler_wait_value must be > 0");
    if (j.contains("fare_override")) {
        for (const auto& row : j.at("fare_override")) {
            NodePair od{row.at("i").get<int>(), row.at("j").get<int>()};
            p.fare_override[od] = row.at("fare").get<double>();
        }
    }
    return p;
}

std::vector<NodePair> parse_pairs(const json& j) {
    std::vector<NodePair> out;
    for (const auto& row : j)
        out.push_back({row.at(0).get<int>(), row.at(1).get<int>()});
    std::sort(out.begin(), out.end());
    return out;
}

bool reachable(const Network& net, NodeId src, NodeId dst) {
    std::set<NodeId> seen{src};
    std::queue<NodeId> q;
    q.push(src);
    while (!q.empty()) {
        NodeId u = q.front();
        q.pop();
        if (u == dst) return true;
        auto it = net.out_links.find(u);
        if (it == net.out_links.end()) continue;
        for (int li : it->second) {
            NodeId w = net.links[li].to_node;
            if (seen.insert(w).second) q.push(w);
        }
    }
    return false;
}

Network parse_network_section(const json& j, const std::string& base_dir,
                              std::vector<std::string>& provenance) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "builtin:small") return build_small_network();
        std::ifstream in(base_dir + "/" + s);
        if (!in) throw std::runtime_error("network file not found: " + s);
        std::stringstream buf;
        buf << in.rdbuf();
        return parse_tntp(buf.str());
    }
    if (j.is_object() && j.contains("links")) {
        std::vector<Link> links;
        for (const auto& row : j.at("links"))
            links.push_back({row.at("id").get<int>(), row.at("from").get<int>(),
                             row.at("to").get<int>(), row.at("fftt").get<double>(),
                             row.at("length").get<double>(),
                             row.at("capacity").get<double>()});
        return make_network(std::move(links));
    }
    if (j.is_object() && j.contains("file")) {
        std::ifstream in(base_dir + "/" + j.at("file").get<std::string>());
        if (!in)
            throw std::runtime_error("network file not found: " +
                                     j.at("file").get<std::string>());
        std::stringstream buf;
        buf << in.rdbuf();
        Network net = parse_tntp(buf.str());
        double ts = j.value("time_scale", 1.0);
        double cs = j.value("capacity_scale", 1.0);
        if (ts != 1.0 || cs != 1.0) {
            provenance.push_back("network scaled: time_scale=" +
                                 std::to_string(ts) +
                                 " capacity_scale=" + std::to_string(cs));
            std::vector<Link> links = net.links;
            for (auto& l : links) {
                l.free_flow_time *= ts;
                l.capacity *= cs;
            }
            net = make_network(std::move(links));
        }
        return net;
    }
    throw std::runtime_error("network section: expected a path string, "
                             "\"builtin:small\", or an object");
}

}  // namespace

Scenario load_scenario(const std::string& config_text,
                       const std::string& base_dir) {
    json j;
    try {
        j = json::parse(config_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("config is not valid JSON: ") +
                                 e.what());
    }

    Validator v;
    Scenario scn;

    static const std::set<std::string> top_keys = {
        "network", "demand", "solo", "companies",
        "policy",  "paths",  "cost", "waiting"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!top_keys.count(it.key()))
            v.fail("unknown top-level section '" + it.key() + "'");

    if (!j.contains("network")) v.fail("missing 'network' section");
    if (!j.contains("demand")) v.fail("missing 'demand' section");
    if (!j.contains("solo")) v.fail("missing 'solo' section");
    if (!j.contains("companies")) v.fail("missing 'companies' section");
    v.finish();

    try {
        scn.network = parse_network_section(j.at("network"), base_dir,
                                            scn.provenance);
    } catch (const std::exception& e) {
        v.fail(e.what());
        v.finish();
    }

    for (const auto& row : j.at("demand")) {
        NodePair od{row.at("i").get<int>(), row.at("j").get<int>()};
        double d = row.at("d").get<double>();
        std::string name =
            "(" + std::to_string(od.first) + "," + std::to_string(od.second) + ")";
        if (scn.demand.count(od)) v.fail("duplicate demand pair " + name);
        v.require(d > 0.0, "demand " + name + " must be > 0");
        v.require(od.first != od.second,
                  "demand pair " + name + ": origin equals destination");
        if (scn.network.has_node(od.first) && scn.network.has_node(od.second)) {
            v.require(reachable(scn.network, od.first, od.second),
                      "OD pair " + name + " not connected in network");
        } else {
            v.fail("demand pair " + name + " references unknown node");
        }
        scn.demand[od] = d;
    }
    v.require(!scn.demand.empty(), "demand table is empty");

    {
        const json& s = j.at("solo");
        scn.solo.time_rate = s.value("time_rate", 0.0);
        scn.solo.dist_rate = s.value("dist_rate", 0.0);
        v.require(scn.solo.time_rate > 0.0, "solo.time_rate must be > 0");
        v.require(scn.solo.dist_rate > 0.0, "solo.dist_rate must be > 0");
    }

    for (auto it = j.at("companies").begin(); it != j.at("companies").end();
         ++it) {
        int k = 0;
        try {
            k = std::stoi(it.key());
        } catch (const std::exception&) {
            v.fail("company key '" + it.key() + "' is not an integer");
            continue;
        }
        const json& cj = it.value();
        std::string where = "companies." + it.key();
        static const std::set<std::string> ckeys = {
            "av", "hv", "mu_av", "mu_hv", "fleet", "served_av", "served_hv"};
        for (auto f = cj.begin(); f != cj.end(); ++f)
            if (!ckeys.count(f.key()))
                v.fail(where + ": unknown field '" + f.key() + "'");
        CompanyParams c;
        if (cj.contains("av")) c.av = parse_vehicle(cj.at("av"), where + ".av", v);
        if (cj.contains("hv")) c.hv = parse_vehicle(cj.at("hv"), where + ".hv", v);
        v.require(c.av || c.hv, where + ": needs at least one of 'av', 'hv'");
        c.mu_av = cj.value("mu_av", 1.0);
        c.mu_hv = cj.value("mu_hv", 1.0);
        v.require(c.mu_av >= 1.0, where + ".mu_av: relaxation must be >= 1");
        v.require(c.mu_hv >= 1.0, where + ".mu_hv: relaxation must be >= 1");
        c.fleet = cj.value("fleet", 0.0);
        v.require(c.fleet > 0.0, where + ".fleet must be > 0");
        if (cj.contains("served_av")) c.served_av = parse_pairs(cj.at("served_av"));
        if (cj.contains("served_hv")) c.served_hv = parse_pairs(cj.at("served_hv"));
        for (const auto* sp : {&c.served_av, &c.served_hv})
            for (const auto& od : *sp)
                v.require(scn.demand.count(od) > 0,
                          where + ": served pair (" + std::to_string(od.first) +
                              "," + std::to_string(od.second) +
                              ") is not a demand pair");
        scn.companies[k] = std::move(c);
    }
    v.require(!scn.companies.empty(), "companies section is empty");

    if (j.contains("policy")) {
        scn.av_cap = j.at("policy").value("av_cap", 1.0);
    } else {
        scn.provenance.push_back("policy.av_cap defaulted to 1.0");
    }
    v.require(scn.av_cap > 0.0 && scn.av_cap <= 1.0,
              "policy.av_cap must lie in (0,1]");

    if (j.contains("paths")) {
        const json& p = j.at("paths");
        scn.paths.k = p.value("k", 5);
        std::string mode = p.value("mode", "k_shortest");
        if (mode == "all_simple")
            scn.paths.mode = PathGenMode::AllSimple;
        else if (mode == "k_shortest")
            scn.paths.mode = PathGenMode::KShortestByFreeFlow;
        else
            v.fail("paths.mode must be 'all_simple' or 'k_shortest'");
        v.require(scn.paths.k >= 1, "paths.k must be >= 1");
    } else {
        scn.provenance.push_back("paths defaulted to k_shortest, k=5");
    }

    if (j.contains("cost")) {
        const json& c = j.at("cost");
        if (c.contains("bpr_alpha"))
            scn.cost.bpr_alpha = c.at("bpr_alpha").get<double>();
        else
            scn.provenance.push_back("cost.bpr_alpha defaulted to 0.15");
        if (c.contains("bpr_beta"))
            scn.cost.bpr_beta = c.at("bpr_beta").get<double>();
        else
            scn.provenance.push_back("cost.bpr_beta defaulted to 4");
    } else {
        scn.provenance.push_back("cost.bpr_alpha defaulted to 0.15");
        scn.provenance.push_back("cost.bpr_beta defaulted to 4");
    }
    v.require(scn.cost.bpr_alpha >= 0.0, "cost.bpr_alpha must be >= 0");
    v.require(scn.cost.bpr_beta >= 1.0, "cost.bpr_beta must be >= 1");

    if (j.contains("waiting")) {
        const json& w = j.at("waiting");
        scn.waiting.delta = w.value("delta", 1e-8);
        scn.waiting.epsilon = w.value("epsilon", 0.0);
        std::string pt = w.value("pickup_term", "weighted_mean");
        if (pt == "weighted_mean")
            scn.waiting.pickup_term = PickupTermForm::WeightedMean;
        else if (pt == "literal")
            scn.waiting.pickup_term = PickupTermForm::Literal;
        else
            v.fail("waiting.pickup_term must be 'weighted_mean' or 'literal'");
        v.require(scn.waiting.delta > 0.0, "waiting.delta must be > 0");
        v.require(scn.waiting.epsilon >= 0.0, "waiting.epsilon must be >= 0");
    }

    v.finish();
    return scn;
}

std::string serialize_scenario(const Scenario& scn) {
    json j;
    json links = json::array();
    for (const Link& l : scn.network.links)
        links.push_back({{"id", l.id},
                         {"from", l.from_node},
                         {"to", l.to_node},
                         {"fftt", l.free_flow_time},
                         {"length", l.length},
                         {"capacity", l.capacity}});
    j["network"] = {{"links", links}};

    json demand = json::array();
    for (const auto& [od, d] : scn.demand)
        demand.push_back({{"i", od.first}, {"j", od.second}, {"d", d}});
    j["demand"] = demand;

    j["solo"] = {{"time_rate", scn.solo.time_rate},
                 {"dist_rate", scn.solo.dist_rate}};

    json companies = json::object();
    for (const auto& [k, c] : scn.companies) {
        json cj;
        auto dump_vehicle = [](const VehicleParams& p) {
            json vj = {{"fixed_fare", p.fixed_fare},
                       {"time_fare_rate", p.time_fare_rate},
                       {"dist_fare_rate", p.dist_fare_rate},
                       {"time_cost_rate", p.time_cost_rate},
                       {"dist_cost_rate", p.dist_cost_rate},
                       {"vehicle_wait_cost_rate", p.vehicle_wait_cost_rate},
                       {"traveler_time_value", p.traveler_time_value},
                       {"traveler_wait_value", p.traveler_wait_value}};
            if (!p.fare_override.empty()) {
                json fo = json::array();
                for (const auto& [od, f] : p.fare_override)
                    fo.push_back({{"i", od.first}, {"j", od.second}, {"fare", f}});
                vj["fare_override"] = fo;
            }
            return vj;
        };
        if (c.av) cj["av"] = dump_vehicle(*c.av);
        if (c.hv) cj["hv"] = dump_vehicle(*c.hv);
        cj["mu_av"] = c.mu_av;
        cj["mu_hv"] = c.mu_hv;
        cj["fleet"] = c.fleet;
        auto dump_pairs = [](const std::vector<NodePair>& ps) {
            json a = json::array();
            for (const auto& p : ps) a.push_back({p.first, p.second});
            return a;
        };
        if (!c.served_av.empty()) cj["served_av"] = dump_pairs(c.served_av);
        if (!c.served_hv.empty()) cj["served_hv"] = dump_pairs(c.served_hv);
        companies[std::to_string(k)] = cj;
    }
    j["companies"] = companies;

    j["policy"] = {{"av_cap", scn.av_cap}};
    j["paths"] = {{"k", scn.paths.k},
                  {"mode", scn.paths.mode == PathGenMode::AllSimple
                               ? "all_simple"
                               : "k_shortest"}};
    j["cost"] = {{"bpr_alpha", scn.cost.bpr_alpha},
                 {"bpr_beta", scn.cost.bpr_beta}};
    j["waiting"] = {
        {"delta", scn.waiting.delta},
        {"epsilon", scn.waiting.epsilon},
        {"pickup_term", scn.waiting.pickup_term == PickupTermForm::WeightedMean
                            ? "weighted_mean"
                            : "literal"}};
    return j.dump(2);
}

Scenario build_small_benchmark() {
    Scenario scn;
    scn.network = build_small_network();
    scn.demand = {{{1, 2}, 50.0}, {{1, 3}, 40.0}, {{1, 4}, 50.0}};
    // Solo rates are not part of the published benchmark tables; these are
    // the calibrated defaults documented in the README.
    scn.solo = {40.0, 0.9};
    VehicleParams c1;
    c1.fixed_fare = 3.0;
    c1.time_fare_rate = 20.0;
    c1.dist_fare_rate = 2.0;
    c1.time_cost_rate = 2.0;
    c1.dist_cost_rate = 0.55;
    c1.vehicle_wait_cost_rate = 0.2;
    c1.traveler_time_value = 7.0;
    c1.traveler_wait_value = 3.0;
    VehicleParams c2;
    c2.fixed_fare = 2.0;
    c2.time_fare_rate = 15.0;
    c2.dist_fare_rate = 1.5;
    c2.time_cost_rate = 2.0;
    c2.dist_cost_rate = 0.9;
    c2.vehicle_wait_cost_rate = 0.1;
    c2.traveler_time_value = 18.0;
    c2.traveler_wait_value = 2.0;
    CompanyParams k1;
    k1.hv = c1;
    k1.fleet = 400.0;
    CompanyParams k2;
    k2.hv = c2;
    k2.fleet = 400.0;
    scn.companies[1] = k1;
    scn.companies[2] = k2;
    scn.paths.mode = PathGenMode::AllSimple;
    scn.paths.k = 10;
    return scn;
}

IndexSets derive_index_sets(const Scenario& scn) {
    IndexSets sets;
    std::set<NodeId> origins, dests;
    for (const auto& [od, d] : scn.demand) {
        sets.od_pairs.push_back(od);
        origins.insert(od.first);
        dests.insert(od.second);
    }
    std::sort(sets.od_pairs.begin(), sets.od_pairs.end());
    sets.origins.assign(origins.begin(), origins.end());
    sets.destinations.assign(dests.begin(), dests.end());

    for (const auto& [k, c] : scn.companies) {
        for (VehicleType x : {VehicleType::AV, VehicleType::HV}) {
            if (!scn.has_type(k, x)) continue;
            const auto& restrict_to =
                x == VehicleType::AV ? c.served_av : c.served_hv;
            ClassSets cs;
            if (restrict_to.empty())
                cs.served = sets.od_pairs;
            else
                cs.served = restrict_to;
            std::set<NodeId> o, d;
            for (const auto& [i, jj] : cs.served) {
                o.insert(i);
                d.insert(jj);
            }
            cs.origins.assign(o.begin(), o.end());
            cs.dispatch_nodes.assign(d.begin(), d.end());
            for (NodeId s : cs.dispatch_nodes)
                for (NodeId i : cs.origins)
                    if (s != i) cs.dispatch_pairs.push_back({s, i});
            ClassKey key{k, x};
            sets.classes.push_back(key);
            for (const auto& od : cs.served)
                sets.serving[{od, x}].push_back(k);
            sets.per_class[key] = std::move(cs);
        }
    }
    std::sort(sets.classes.begin(), sets.classes.end());
    return sets;
}

PathCatalog build_catalog(const Scenario& scn, const IndexSets& sets) {
    std::set<NodePair> pairs(sets.od_pairs.begin(), sets.od_pairs.end());
    for (const auto& [key, cs] : sets.per_class)
        pairs.insert(cs.dispatch_pairs.begin(), cs.dispatch_pairs.end());
    return enumerate_paths(scn.network,
                           {pairs.begin(), pairs.end()}, scn.paths.k,
                           scn.paths.mode);
}

}  // namespace mage
