#include "mage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mage {

namespace {

std::string od_str(const NodePair& od) {
    return "(" + std::to_string(od.first) + "," + std::to_string(od.second) +
           ")";
}

std::string class_str(int k, VehicleType x) {
    return "company " + std::to_string(k) + " " + to_string(x);
}

/// Tracks the worst violation seen for one audit category.
struct Worst {
    double mag = 0.0;
    std::string where;
    void offer(double violation, const std::string& detail) {
        if (violation > mag) {
            mag = violation;
            where = detail;
        }
    }
    AuditResult finish(const std::string& name, double tol) const {
        AuditResult r;
        r.name = name;
        r.worst = mag;
        r.pass = mag <= tol;
        r.detail = where;
        return r;
    }
};

/// Aggregate per-path flows (catalog order) from the state vector.
std::vector<double> path_flows(const EquilibriumSystem& sys,
                               const Eigen::VectorXd& state) {
    std::vector<double> flows(sys.catalog().paths.size(), 0.0);
    for (const auto& [var, pid] : sys.h_vars())
        flows[pid] += std::max(0.0, state[var]);
    return flows;
}

std::map<int, int> var_to_path(const EquilibriumSystem& sys) {
    std::map<int, int> m;
    for (const auto& [var, pid] : sys.h_vars()) m[var] = pid;
    return m;
}

double trip_fare(const Scenario& scn, int k, VehicleType x, const NodePair& od,
                 double t_service, const FreeFlowQuantity& ff) {
    const VehicleParams& vp = scn.params(k, x);
    return scn.fare_fixed(k, x, od) + vp.time_fare_rate * (t_service - ff.t0) +
           vp.dist_fare_rate * ff.d0;
}

}  // namespace

std::vector<AuditResult> audit_equilibrium(const EquilibriumSystem& sys,
                                           const Eigen::VectorXd& state,
                                           double tol) {
    const Scenario& scn = sys.scenario();
    const IndexSets& sets = sys.sets();
    auto v2p = var_to_path(sys);
    std::vector<double> flows = path_flows(sys, state);
    std::vector<double> costs =
        path_cost(sys.catalog(), scn.cost, scn.network, flows);

    Worst fleet_demand, conservation, balance, wardrop, capacity, wait_cap,
        dispatch_share;

    // fleet-demand equality and dispatch-share consistency per market
    for (const auto& [k, x] : sets.classes) {
        const ClassSets& cs = sets.per_class.at({k, x});
        for (const NodePair& od : cs.served) {
            double zsum = 0.0;
            for (NodeId s : cs.dispatch_nodes)
                zsum += state[sys.z_index(k, x, s, od)];
            double d = state[sys.d_index(k, x, od)];
            fleet_demand.offer(std::abs(zsum - d),
                               class_str(k, x) + " od " + od_str(od));
            if (zsum > tol) {
                for (NodeId s : cs.dispatch_nodes) {
                    double th = state[sys.theta_index(k, x, s, od)];
                    double z = state[sys.z_index(k, x, s, od)];
                    dispatch_share.offer(std::abs(th - z / zsum),
                                         class_str(k, x) + " s=" +
                                             std::to_string(s) + " od " +
                                             od_str(od));
                }
            }
        }
    }

    // demand conservation per OD pair
    for (const auto& [od, d_ij] : scn.demand) {
        double total = state[sys.dsv_index(od)];
        for (const auto& [k, x] : sets.classes) {
            const ClassSets& cs = sets.per_class.at({k, x});
            if (std::find(cs.served.begin(), cs.served.end(), od) !=
                cs.served.end())
                total += state[sys.d_index(k, x, od)];
        }
        conservation.offer(std::abs(total - d_ij), "od " + od_str(od));
    }

    // flow balance and relaxed Wardrop per time row
    auto check_group = [&](const std::vector<int>& h_idx, double t,
                           double target, double mu, const std::string& who) {
        double hsum = 0.0;
        for (int v : h_idx) hsum += state[v];
        balance.offer(std::abs(hsum - target), who);
        for (int v : h_idx) {
            double mc = mu * costs[v2p.at(v)];
            wardrop.offer(t - mc, who);  // mu*C >= t - tol for all paths
            if (state[v] > tol) wardrop.offer(std::abs(mc - t), who + " used");
        }
    };

    for (const auto& [od, d_ij] : scn.demand)
        check_group(sys.h_sv_indices(od), state[sys.tsv_index(od)],
                    state[sys.dsv_index(od)], 1.0, "solo od " + od_str(od));
    for (const auto& [k, x] : sets.classes) {
        const ClassSets& cs = sets.per_class.at({k, x});
        const CompanyParams& cp = scn.companies.at(k);
        double mu_service = x == VehicleType::AV ? cp.mu_av : 1.0;
        double mu_pickup = x == VehicleType::HV ? cp.mu_hv : 1.0;
        for (const NodePair& od : cs.served)
            check_group(sys.h_service_indices(k, x, od),
                        state[sys.t_service_index(k, x, od)],
                        state[sys.d_index(k, x, od)], mu_service,
                        class_str(k, x) + " service od " + od_str(od));
        for (const auto& [s, i] : cs.dispatch_pairs) {
            double ztot = 0.0;
            for (const NodePair& od : cs.served)
                if (od.first == i) ztot += state[sys.z_index(k, x, s, od)];
            check_group(sys.h_pickup_indices(k, x, s, i),
                        state[sys.t_pickup_index(k, x, s, i)], ztot, mu_pickup,
                        class_str(k, x) + " pickup " + std::to_string(s) +
                            "->" + std::to_string(i));
        }
    }

    // fleet and AV capacity per company
    for (const auto& [k, cp] : scn.companies) {
        double used = 0.0, used_av = 0.0;
        for (const auto& [kk, x] : sets.classes) {
            if (kk != k) continue;
            const ClassSets& cs = sets.per_class.at({k, x});
            for (const NodePair& od : cs.served) {
                double t_ij = state[sys.t_service_index(k, x, od)];
                for (NodeId s : cs.dispatch_nodes) {
                    int tp = sys.t_pickup_index(k, x, s, od.first);
                    double t_si = tp < 0 ? 0.0 : state[tp];
                    double hours =
                        (t_si + t_ij) * state[sys.z_index(k, x, s, od)];
                    used += hours;
                    if (x == VehicleType::AV) used_av += hours;
                }
            }
        }
        capacity.offer(used - cp.fleet, "company " + std::to_string(k));
        if (cp.av.has_value())
            capacity.offer(used_av - scn.av_cap * cp.fleet,
                           "company " + std::to_string(k) + " av");
    }

    // waiting cap per served market
    for (const auto& [k, x] : sets.classes) {
        const ClassSets& cs = sets.per_class.at({k, x});
        for (const NodePair& od : cs.served) {
            double w = sys.customer_wait(k, x, od, state);
            double cap = sys.w_max(od, state) + scn.waiting.epsilon;
            wait_cap.offer(std::max(-w, w - cap),
                           class_str(k, x) + " od " + od_str(od));
        }
    }

    return {fleet_demand.finish("fleet-demand equality", tol),
            conservation.finish("demand conservation", tol),
            balance.finish("flow balance", tol),
            wardrop.finish("relaxed Wardrop on used paths", tol),
            capacity.finish("fleet capacity", tol),
            wait_cap.finish("waiting cap", tol),
            dispatch_share.finish("dispatch shares", tol)};
}

EquilibriumReport compute_kpis(const EquilibriumSystem& sys,
                               const Eigen::VectorXd& state,
                               double solved_tol) {
    const Scenario& scn = sys.scenario();
    const IndexSets& sets = sys.sets();

    // refuse unsolved states: complementarity residual must be small
    Eigen::VectorXd F = sys.residual(state);
    double worst = 0.0;
    for (int i = 0; i < sys.dimension(); ++i) {
        double mid = std::min(sys.upper()[i],
                              std::max(sys.lower()[i], state[i] - F[i]));
        worst = std::max(worst, std::abs(state[i] - mid));
    }
    if (worst > solved_tol)
        throw std::runtime_error(
            "state is not an equilibrium (residual " + std::to_string(worst) +
            " > " + std::to_string(solved_tol) + "); solve first");

    EquilibriumReport rep;
    rep.state = state;
    rep.scenario_digest = [&] {
        std::ostringstream h;
        h << std::hex << std::hash<std::string>{}(serialize_scenario(scn));
        return h.str();
    }();

    std::vector<double> flows = path_flows(sys, state);
    rep.link_volume = link_volumes(scn.network, sys.catalog(), flows);
    rep.link_time.resize(scn.network.links.size());
    for (size_t a = 0; a < scn.network.links.size(); ++a) {
        const Link& l = scn.network.links[a];
        rep.link_time[a] = bpr_time(l, scn.cost, rep.link_volume[a]);
        rep.vmt += rep.link_volume[a] * l.length;
        rep.vht_total += rep.link_volume[a] * rep.link_time[a];
    }

    double total_demand = 0.0;
    for (const auto& [od, d] : scn.demand) total_demand += d;
    rep.vht_per_trip = total_demand > 0.0 ? rep.vht_total / total_demand : 0.0;

    auto v2p = var_to_path(sys);
    for (const auto& [k, x] : sets.classes)
        for (const auto& [s, i] : sets.per_class.at({k, x}).dispatch_pairs)
            for (int v : sys.h_pickup_indices(k, x, s, i))
                rep.dhm +=
                    state[v] *
                    path_length(scn.network, sys.catalog().paths[v2p.at(v)]);

    // shares, fares, waits, profits
    double solo = 0.0;
    for (const auto& [od, d] : scn.demand) solo += state[sys.dsv_index(od)];
    rep.solo_share = total_demand > 0.0 ? solo / total_demand : 0.0;

    double wait_num = 0.0, wait_den = 0.0;
    double fare_num_av = 0.0, fare_den_av = 0.0;
    double fare_num_hv = 0.0, fare_den_hv = 0.0;
    for (const auto& [k, x] : sets.classes) {
        const ClassSets& cs = sets.per_class.at({k, x});
        CompanyKpi& ck = rep.companies[k];
        double fare_num = 0.0, fare_den = 0.0, profit = 0.0;
        for (const NodePair& od : cs.served) {
            double d = state[sys.d_index(k, x, od)];
            double t_ij = state[sys.t_service_index(k, x, od)];
            const FreeFlowQuantity& ff = sys.free_flow().at(od);
            double fare = trip_fare(scn, k, x, od, t_ij, ff);
            fare_num += fare * d;
            fare_den += d;
            wait_num += sys.customer_wait(k, x, od, state) * d;
            wait_den += d;
            const VehicleParams& vp = scn.params(k, x);
            for (NodeId s : cs.dispatch_nodes) {
                double z = state[sys.z_index(k, x, s, od)];
                if (z <= 0.0) continue;
                int tp = sys.t_pickup_index(k, x, s, od.first);
                double t_si = tp < 0 ? 0.0 : state[tp];
                double d_si =
                    s == od.first ? 0.0 : sys.free_flow().at({s, od.first}).d0;
                profit += z * (fare - vp.time_cost_rate * (t_si + t_ij) -
                               vp.dist_cost_rate * (d_si + ff.d0) +
                               vp.vehicle_wait_cost_rate * t_si);
            }
        }
        ck.share += total_demand > 0.0 ? fare_den / total_demand : 0.0;
        double avg = fare_den > 0.0 ? fare_num / fare_den : 0.0;
        if (x == VehicleType::AV) {
            ck.profit_av = profit;
            ck.avg_fare_av = avg;
            fare_num_av += fare_num;
            fare_den_av += fare_den;
        } else {
            ck.profit_hv = profit;
            ck.avg_fare_hv = avg;
            fare_num_hv += fare_num;
            fare_den_hv += fare_den;
        }
    }
    rep.avg_wait_minutes = wait_den > 0.0 ? 60.0 * wait_num / wait_den : 0.0;
    rep.avg_fare_av = fare_den_av > 0.0 ? fare_num_av / fare_den_av : 0.0;
    rep.avg_fare_hv = fare_den_hv > 0.0 ? fare_num_hv / fare_den_hv : 0.0;

    std::vector<double> costs =
        path_cost(sys.catalog(), scn.cost, scn.network, flows);
    double tmin_sum = 0.0;
    for (const auto& [od, d] : scn.demand) {
        double best = std::numeric_limits<double>::infinity();
        for (int pid : sys.catalog().paths_for(od))
            best = std::min(best, costs[pid]);
        tmin_sum += best;
    }
    rep.avg_wardrop_hours =
        scn.demand.empty() ? 0.0 : tmin_sum / scn.demand.size();

    rep.audits = audit_equilibrium(sys, state, std::max(solved_tol, 1e-6));
    return rep;
}

std::string EquilibriumReport::to_json() const {
    nlohmann::json j;
    j["scenario_digest"] = scenario_digest;
    j["kpis"] = {{"vmt", vmt},
                 {"vht_total", vht_total},
                 {"vht_per_trip", vht_per_trip},
                 {"dhm", dhm},
                 {"solo_share", solo_share},
                 {"avg_wait_minutes", avg_wait_minutes},
                 {"avg_wardrop_hours", avg_wardrop_hours},
                 {"avg_fare_av", avg_fare_av},
                 {"avg_fare_hv", avg_fare_hv}};
    for (const auto& [k, ck] : companies)
        j["companies"][std::to_string(k)] = {{"profit_av", ck.profit_av},
                                             {"profit_hv", ck.profit_hv},
                                             {"share", ck.share},
                                             {"avg_fare_av", ck.avg_fare_av},
                                             {"avg_fare_hv", ck.avg_fare_hv}};
    j["link_volume"] = link_volume;
    j["link_time"] = link_time;
    j["state"] = std::vector<double>(state.data(), state.data() + state.size());
    for (const AuditResult& a : audits)
        j["audits"].push_back({{"name", a.name},
                               {"pass", a.pass},
                               {"worst", a.worst},
                               {"detail", a.detail}});
    return j.dump(2);
}

std::string EquilibriumReport::csv_header() {
    return "label,vmt,vht_total,vht_per_trip,dhm,solo_share,tnc_share,"
           "avg_wait_minutes,avg_wardrop_hours,avg_fare_av,avg_fare_hv,"
           "profit_total,audits_pass";
}

std::string EquilibriumReport::csv_row(const std::string& label) const {
    double tnc = 0.0, profit = 0.0;
    bool ok = true;
    for (const auto& [k, ck] : companies) {
        tnc += ck.share;
        profit += ck.profit_av + ck.profit_hv;
    }
    for (const AuditResult& a : audits) ok = ok && a.pass;
    std::ostringstream out;
    out.precision(12);
    out << label << ',' << vmt << ',' << vht_total << ',' << vht_per_trip
        << ',' << dhm << ',' << solo_share << ',' << tnc << ','
        << avg_wait_minutes << ',' << avg_wardrop_hours << ',' << avg_fare_av
        << ',' << avg_fare_hv << ',' << profit << ',' << (ok ? 1 : 0);
    return out.str();
}

}  // namespace mage
