#pragma once

#include "mage/equilibrium.hpp"

#include <map>
#include <string>
#include <vector>

namespace mage {

/// One equilibrium invariant check. Violations are data, not exceptions.
struct AuditResult {
    std::string name;
    bool pass = true;
    double worst = 0.0;   // largest violation magnitude found
    std::string detail;   // where the worst violation occurred
};

struct CompanyKpi {
    double profit_av = 0.0;   // $/h
    double profit_hv = 0.0;   // $/h
    double share = 0.0;       // fraction of total demand served
    double avg_fare_av = 0.0; // $/trip, demand weighted; 0 when unused
    double avg_fare_hv = 0.0;
};

struct EquilibriumReport {
    std::string scenario_digest;
    Eigen::VectorXd state;
    std::vector<double> link_volume;  // veh/h, indexed like network.links
    std::vector<double> link_time;    // hours at those volumes

    double vmt = 0.0;           // veh-mi/h over all links
    double vht_total = 0.0;     // veh-h/h over all links
    double vht_per_trip = 0.0;  // hours per demanded trip
    double dhm = 0.0;           // pickup-phase (deadhead) veh-mi/h

    double solo_share = 0.0;
    std::map<int, CompanyKpi> companies;
    double avg_wait_minutes = 0.0;   // demand-weighted over TNC trips
    double avg_wardrop_hours = 0.0;  // mean over OD pairs of min path time
    double avg_fare_av = 0.0;        // $/trip across companies
    double avg_fare_hv = 0.0;

    std::vector<AuditResult> audits;

    std::string to_json() const;
    /// Flat one-line form for sweep aggregation; label goes in the first
    /// column of csv_row.
    static std::string csv_header();
    std::string csv_row(const std::string& label) const;
};

/// All equilibrium invariants at tolerance tol: fleet-demand equality,
/// demand conservation, flow balance per time row, relaxed Wardrop on used
/// paths, fleet and AV capacity, waiting cap, dispatch-share consistency.
std::vector<AuditResult> audit_equilibrium(const EquilibriumSystem& sys,
                                           const Eigen::VectorXd& state,
                                           double tol);

/// KPIs plus audits for a solved state. Refuses (std::runtime_error) when
/// the state does not satisfy the complementarity residual at solved_tol.
EquilibriumReport compute_kpis(const EquilibriumSystem& sys,
                               const Eigen::VectorXd& state,
                               double solved_tol = 1e-4);

}  // namespace mage
