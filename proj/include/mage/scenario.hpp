#pragma once

#include "mage/netcore.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mage {

enum class VehicleType { AV, HV };

inline const char* to_string(VehicleType x) {
    return x == VehicleType::AV ? "av" : "hv";
}

/// Rate bundle for one company's vehicle type. Money in dollars, times in
/// hours, distances in miles.
struct VehicleParams {
    double fixed_fare = 0.0;             // F, $ per trip
    double time_fare_rate = 0.0;         // alpha1, $/h
    double dist_fare_rate = 0.0;         // alpha2, $/mi
    double time_cost_rate = 0.0;         // beta1, $/h
    double dist_cost_rate = 0.0;         // beta2, $/mi
    double vehicle_wait_cost_rate = 0.0; // beta3, $/h
    double traveler_time_value = 0.0;    // gamma1, $/h
    double traveler_wait_value = 0.0;    // gamma2, $/h
    std::map<NodePair, double> fare_override;  // per-OD fixed fare
};

struct CompanyParams {
    std::optional<VehicleParams> av;
    std::optional<VehicleParams> hv;
    double mu_av = 1.0;   // service-phase routing relaxation for AVs
    double mu_hv = 1.0;   // pickup-phase routing relaxation for HVs
    double fleet = 0.0;   // N^k, vehicles
    /// OD pairs served per type; empty means "all demand pairs".
    std::vector<NodePair> served_av;
    std::vector<NodePair> served_hv;
};

struct SoloParams {
    double time_rate = 0.0;  // $/h
    double dist_rate = 0.0;  // $/mi
};

enum class PickupTermForm { WeightedMean, Literal };

struct WaitingConfig {
    double delta = 1e-8;    // queue denominator floor
    double epsilon = 0.0;   // cap smoothing width; 0 keeps the exact min
    PickupTermForm pickup_term = PickupTermForm::WeightedMean;
};

struct PathSettings {
    int k = 5;
    PathGenMode mode = PathGenMode::KShortestByFreeFlow;
};

struct Scenario {
    Network network;
    std::map<int, CompanyParams> companies;
    SoloParams solo;
    std::map<NodePair, double> demand;  // D_ij, trips/h
    double av_cap = 1.0;                // max AV share of fleet time
    LinkCostModel cost;
    PathSettings paths;
    WaitingConfig waiting;
    std::vector<std::string> provenance;  // defaults filled during load

    bool has_type(int k, VehicleType x) const {
        const auto& c = companies.at(k);
        return x == VehicleType::AV ? c.av.has_value() : c.hv.has_value();
    }
    const VehicleParams& params(int k, VehicleType x) const {
        const auto& c = companies.at(k);
        return x == VehicleType::AV ? *c.av : *c.hv;
    }
    double mu(int k, VehicleType x) const {
        const auto& c = companies.at(k);
        return x == VehicleType::AV ? c.mu_av : c.mu_hv;
    }
    double fare_fixed(int k, VehicleType x, const NodePair& od) const {
        const auto& p = params(k, x);
        auto it = p.fare_override.find(od);
        return it == p.fare_override.end() ? p.fixed_fare : it->second;
    }
};

using ClassKey = std::pair<int, VehicleType>;  // (company, vehicle type)

struct ClassSets {
    std::vector<NodePair> served;          // W^{k,x}
    std::vector<NodeId> origins;           // O^{k,x}
    std::vector<NodeId> dispatch_nodes;    // D^{k,x}
    std::vector<NodePair> dispatch_pairs;  // (s,i), s != i
};

struct IndexSets {
    std::vector<NodePair> od_pairs;     // W, sorted
    std::vector<NodeId> origins;        // O
    std::vector<NodeId> destinations;   // D
    std::vector<ClassKey> classes;      // all (k,x) present, sorted
    std::map<ClassKey, ClassSets> per_class;
    /// K^x_ij: companies serving pair (i,j) with type x.
    std::map<std::pair<NodePair, VehicleType>, std::vector<int>> serving;
};

/// Parses and validates a scenario config (JSON). Collects every violation
/// before throwing. base_dir resolves relative network file paths.
Scenario load_scenario(const std::string& config_text,
                       const std::string& base_dir = ".");

std::string serialize_scenario(const Scenario& scn);

/// The two-company HV-only benchmark on the small network.
Scenario build_small_benchmark();

IndexSets derive_index_sets(const Scenario& scn);

/// Enumerates paths for all demand pairs and all dispatch pairs of scn.
PathCatalog build_catalog(const Scenario& scn, const IndexSets& sets);

}  // namespace mage
