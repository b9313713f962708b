#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mage {

using NodeId = int;
using NodePair = std::pair<NodeId, NodeId>;

/// Directed link with free-flow attributes. Times in hours, lengths in
/// miles, capacities in vehicles/hour.
struct Link {
    int id = 0;
    NodeId from_node = 0;
    NodeId to_node = 0;
    double free_flow_time = 0.0;
    double length = 0.0;
    double capacity = 0.0;
};

struct Network {
    std::vector<NodeId> nodes;          // sorted, unique
    std::vector<Link> links;            // arbitrary order, unique ids
    std::map<NodeId, std::vector<int>> out_links;  // node -> indices into links

    bool has_node(NodeId n) const;
    /// Index into links for a link id; -1 if absent.
    int link_index(int link_id) const;

  private:
    friend Network make_network(std::vector<Link> links);
    std::map<int, int> id_to_index_;
};

/// Builds a Network from a link list, validating the invariants
/// (positive attributes, distinct endpoints, unique ids).
Network make_network(std::vector<Link> links);

/// Parses a TNTP-format network file (<NUMBER OF NODES>, <NUMBER OF LINKS>,
/// <END OF METADATA> header followed by whitespace-separated link rows:
/// init_node term_node capacity length free_flow_time ...).
/// Throws std::runtime_error naming the offending line on malformed input.
Network parse_tntp(const std::string& net_text);

/// The 4-node / 9-link benchmark network.
Network build_small_network();

/// Simple path: ordered list of link ids forming a walk with no repeated node.
struct Path {
    int id = 0;
    NodePair od;
    std::vector<int> links;  // link ids
};

enum class PathGenMode { AllSimple, KShortestByFreeFlow };

struct PathCatalog {
    std::vector<Path> paths;                      // id == index
    std::map<NodePair, std::vector<int>> by_pair; // pair -> path ids
    std::vector<std::vector<int>> link_paths;     // link index -> path ids

    bool has_pair(const NodePair& p) const { return by_pair.count(p) > 0; }
    const std::vector<int>& paths_for(const NodePair& p) const;
};

/// Enumerates up to max_paths_per_pair simple paths for each requested pair.
/// In KShortestByFreeFlow mode the K shortest by free-flow time are kept
/// (Yen-style loopless ranking). Output order is deterministic: ties broken
/// by lexicographic link-id sequence.
PathCatalog enumerate_paths(const Network& net,
                            const std::vector<NodePair>& pairs,
                            int max_paths_per_pair,
                            PathGenMode mode);

struct LinkCostModel {
    double bpr_alpha = 0.15;
    double bpr_beta = 4.0;
};

struct FreeFlowQuantity {
    double t0 = 0.0;  // min free-flow time over catalogued paths, hours
    double d0 = 0.0;  // length of the time-minimal path, miles
};

/// Free-flow time and distance per catalogued pair. The arg-min path for d0
/// is the time-minimal one; ties resolved toward smaller distance, then
/// lexicographic link ids.
std::map<NodePair, FreeFlowQuantity> free_flow_quantities(
    const Network& net, const PathCatalog& catalog);

/// Aggregate link volumes from per-path flows (indexed by catalog path id).
std::vector<double> link_volumes(const Network& net, const PathCatalog& catalog,
                                 const std::vector<double>& all_path_flows);

/// BPR link travel time at volume v.
double bpr_time(const Link& link, const LinkCostModel& model, double v);

/// Congested cost of every catalogued path given the aggregate per-path flow
/// vector (all classes summed). BPR: t_a = t0_a (1 + alpha (v/cap)^beta);
/// path cost = sum of link times. Throws on negative flow.
std::vector<double> path_cost(const PathCatalog& catalog,
                              const LinkCostModel& model, const Network& net,
                              const std::vector<double>& all_path_flows);

/// Free-flow time of a single path.
double path_free_flow_time(const Network& net, const Path& p);
double path_length(const Network& net, const Path& p);

}  // namespace mage
