#pragma once

#include "mage/scenario.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mage {

struct Bounds {
    double h_bar = 0.0;  // cap on every path-flow variable, veh/h
    double t_bar = 0.0;  // cap on every travel-time variable, hours
};

struct BlockRange {
    std::string name;
    int begin = 0;
    int end = 0;  // half-open
};

/// Queuing matching time 1/(z_sum - D), floored at cfg.delta so the value
/// stays finite; the waiting cap resolves the blow-up downstream.
double matching_time(double z_sum, double D, const WaitingConfig& cfg);

/// The complete complementarity system for one scenario: flat variable
/// layout with box bounds, block residual, hybrid Jacobian, and the
/// waiting-time machinery.
class EquilibriumSystem {
  public:
    explicit EquilibriumSystem(Scenario scn);
    ~EquilibriumSystem();
    EquilibriumSystem(EquilibriumSystem&&) noexcept;
    EquilibriumSystem& operator=(EquilibriumSystem&&) noexcept;

    int dimension() const { return n_; }
    const Scenario& scenario() const { return scn_; }
    const IndexSets& sets() const { return sets_; }
    const PathCatalog& catalog() const { return catalog_; }
    const Bounds& bounds() const { return bounds_; }
    const Eigen::VectorXd& lower() const { return lo_; }
    const Eigen::VectorXd& upper() const { return hi_; }
    const std::vector<BlockRange>& blocks() const { return blocks_; }

    /// R-tilde: fixed part of per-trip revenue for company k, type x,
    /// dispatch node s, OD pair od.
    double fixed_revenue(int k, VehicleType x, NodeId s, NodePair od) const;

    /// Patience cap for OD pair od given the current travel times.
    /// Zero (with an audit note available) when no company serves od.
    double w_max(NodePair od, const Eigen::VectorXd& x) const;

    /// Capped customer waiting time for (k,x) on od.
    double customer_wait(int k, VehicleType x, NodePair od,
                         const Eigen::VectorXd& x_state) const;

    Eigen::VectorXd residual(const Eigen::VectorXd& x) const;
    /// residual with +tau*(nu - nu_ref) on the fleet/AV capacity rows.
    Eigen::VectorXd regularized_residual(const Eigen::VectorXd& x, double tau,
                                         const Eigen::VectorXd& nu_ref) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd regularized_jacobian(const Eigen::VectorXd& x,
                                         double tau) const;

    /// Demand split equal across modes, dispatch spread at fleet-demand
    /// equality, free-flow times, shortest-path flows, zero multipliers.
    Eigen::VectorXd initial_state() const;

    /// Indices of the fleet/AV capacity multiplier variables (the nu block).
    std::vector<int> nu_indices() const;

    /// JSON report: per block, max |residual component| and its index.
    std::string residual_block_report(const Eigen::VectorXd& x) const;

    // Variable index lookups (asserting existence), used by metrics and tests.
    int z_index(int k, VehicleType x, NodeId s, NodePair od) const;
    int theta_index(int k, VehicleType x, NodeId s, NodePair od) const;
    int phi_index(int k, VehicleType x, NodeId s) const;
    int lambda_index(int k, VehicleType x, NodePair od) const;
    int nu_index(int k) const;
    int nu_av_index(int k) const;  // -1 if company has no AV class
    int dsv_index(NodePair od) const;
    int d_index(int k, VehicleType x, NodePair od) const;
    int sigma_index(NodePair od) const;
    int tsv_index(NodePair od) const;
    int t_service_index(int k, VehicleType x, NodePair od) const;
    int t_pickup_index(int k, VehicleType x, NodeId s, NodeId i) const;  // -1 if s==i
    std::vector<int> h_sv_indices(NodePair od) const;
    std::vector<int> h_service_indices(int k, VehicleType x, NodePair od) const;
    std::vector<int> h_pickup_indices(int k, VehicleType x, NodeId s,
                                      NodeId i) const;
    /// Every path-flow variable paired with its catalog path id, for
    /// volume aggregation.
    const std::vector<std::pair<int, int>>& h_vars() const { return h_var_path_; }

    const std::map<NodePair, FreeFlowQuantity>& free_flow() const { return ff_; }

  private:
    struct ClassInfo;
    struct Market;
    struct OdInfo;

    void build_layout();
    void assemble(const Eigen::VectorXd& x, Eigen::VectorXd& F) const;
    std::vector<int> wait_columns(int mi) const;

    Scenario scn_;
    IndexSets sets_;
    PathCatalog catalog_;
    std::map<NodePair, FreeFlowQuantity> ff_;
    Bounds bounds_;
    int n_ = 0;
    Eigen::VectorXd lo_, hi_;
    std::vector<BlockRange> blocks_;

    std::vector<ClassInfo> classes_;
    std::vector<Market> markets_;              // one per (class, served od)
    std::vector<OdInfo> ods_;                  // one per demand od
    std::map<NodePair, int> od_of_;            // od -> index into ods_
    std::map<std::pair<ClassKey, NodePair>, int> market_of_;
    std::vector<std::pair<int, int>> h_var_path_;  // (var index, path id)
};

Bounds compute_bounds(const Scenario& scn, const PathCatalog& catalog);

}  // namespace mage
