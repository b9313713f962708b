#include "mage/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mage {

bool Network::has_node(NodeId n) const {
    return std::binary_search(nodes.begin(), nodes.end(), n);
}

int Network::link_index(int link_id) const {
    auto it = id_to_index_.find(link_id);
    return it == id_to_index_.end() ? -1 : it->second;
}

Network make_network(std::vector<Link> links) {
    Network net;
    std::set<NodeId> nodes;
    std::set<int> ids;
    for (const auto& l : links) {
        if (l.free_flow_time <= 0.0)
            throw std::runtime_error("link " + std::to_string(l.id) +
                                     ": free_flow_time must be positive");
        if (l.length <= 0.0)
            throw std::runtime_error("link " + std::to_string(l.id) +
                                     ": length must be positive");
        if (l.capacity <= 0.0)
            throw std::runtime_error("link " + std::to_string(l.id) +
                                     ": capacity must be positive");
        if (l.from_node == l.to_node)
            throw std::runtime_error("link " + std::to_string(l.id) +
                                     ": self-loop not allowed");
        if (!ids.insert(l.id).second)
            throw std::runtime_error("duplicate link id " + std::to_string(l.id));
        nodes.insert(l.from_node);
        nodes.insert(l.to_node);
    }
    net.nodes.assign(nodes.begin(), nodes.end());
    net.links = std::move(links);
    for (int i = 0; i < static_cast<int>(net.links.size()); ++i) {
        net.out_links[net.links[i].from_node].push_back(i);
        net.id_to_index_[net.links[i].id] = i;
    }
    // deterministic expansion order
    for (auto& [node, out] : net.out_links) {
        std::sort(out.begin(), out.end(), [&](int a, int b) {
            return net.links[a].id < net.links[b].id;
        });
    }
    return net;
}

namespace {

bool is_blank_or_comment(const std::string& s) {
    for (char c : s) {
        if (c == '~') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

}  // namespace

Network parse_tntp(const std::string& net_text) {
    std::istringstream in(net_text);
    std::string line;
    int line_no = 0;
    int n_nodes = -1, n_links = -1;
    bool in_data = false;
    std::vector<Link> links;

    auto fail = [&](const std::string& msg) {
        throw std::runtime_error("tntp parse error, line " +
                                 std::to_string(line_no) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!in_data) {
            auto tag_value = [&](const char* tag) -> long {
                auto pos = line.find('>');
                if (pos == std::string::npos) fail(std::string("malformed header tag ") + tag);
                try {
                    return std::stol(line.substr(pos + 1));
                } catch (const std::exception&) {
                    fail(std::string("non-numeric value for ") + tag);
                }
                return 0;
            };
            if (line.find("<NUMBER OF NODES>") != std::string::npos)
                n_nodes = static_cast<int>(tag_value("<NUMBER OF NODES>"));
            else if (line.find("<NUMBER OF LINKS>") != std::string::npos)
                n_links = static_cast<int>(tag_value("<NUMBER OF LINKS>"));
            else if (line.find("<END OF METADATA>") != std::string::npos) {
                if (n_nodes <= 0) fail("<NUMBER OF NODES> missing or non-positive");
                if (n_links <= 0) fail("<NUMBER OF LINKS> missing or non-positive");
                in_data = true;
            }
            continue;
        }
        if (is_blank_or_comment(line)) continue;
        std::istringstream row(line);
        long init = 0, term = 0;
        double cap = 0, len = 0, fft = 0;
        if (!(row >> init >> term >> cap >> len >> fft))
            fail("expected init_node term_node capacity length free_flow_time");
        if (init < 1 || init > n_nodes)
            fail("init node " + std::to_string(init) + " out of range 1.." +
                 std::to_string(n_nodes));
        if (term < 1 || term > n_nodes)
            fail("term node " + std::to_string(term) + " out of range 1.." +
                 std::to_string(n_nodes));
        if (cap <= 0.0) fail("non-positive capacity " + std::to_string(cap));
        if (len <= 0.0) fail("non-positive length " + std::to_string(len));
        if (fft <= 0.0) fail("non-positive free-flow time " + std::to_string(fft));
        Link l;
        l.id = static_cast<int>(links.size()) + 1;
        l.from_node = static_cast<NodeId>(init);
        l.to_node = static_cast<NodeId>(term);
        l.capacity = cap;
        l.length = len;
        l.free_flow_time = fft;
        links.push_back(l);
    }
    if (!in_data)
        throw std::runtime_error("tntp parse error: <END OF METADATA> not found");
    if (links.empty()) throw std::runtime_error("tntp parse error: no links");
    if (static_cast<int>(links.size()) != n_links)
        throw std::runtime_error(
            "tntp parse error: link table has " + std::to_string(links.size()) +
            " rows, header declares " + std::to_string(n_links));
    return make_network(std::move(links));
}

Network build_small_network() {
    // id, from, to, fftt (h), length (mi), capacity (veh/h)
    std::vector<Link> links = {
        {1, 1, 2, 0.3, 10, 40}, {2, 1, 3, 0.5, 20, 40}, {3, 2, 3, 0.4, 20, 60},
        {4, 2, 4, 0.4, 10, 40}, {5, 3, 4, 0.3, 20, 40}, {6, 4, 1, 1.0, 40, 60},
        {7, 2, 1, 0.4, 15, 50}, {8, 3, 1, 0.4, 20, 60}, {9, 3, 2, 0.5, 20, 40},
    };
    return make_network(std::move(links));
}

const std::vector<int>& PathCatalog::paths_for(const NodePair& p) const {
    auto it = by_pair.find(p);
    if (it == by_pair.end())
        throw std::runtime_error("pair (" + std::to_string(p.first) + "," +
                                 std::to_string(p.second) + ") not in path catalog");
    return it->second;
}

double path_free_flow_time(const Network& net, const Path& p) {
    double t = 0.0;
    for (int id : p.links) t += net.links[net.link_index(id)].free_flow_time;
    return t;
}

double path_length(const Network& net, const Path& p) {
    double d = 0.0;
    for (int id : p.links) d += net.links[net.link_index(id)].length;
    return d;
}

namespace {

using LinkSeq = std::vector<int>;  // link ids

void dfs_all_simple(const Network& net, NodeId cur, NodeId dst,
                    std::set<NodeId>& visited, LinkSeq& stack,
                    std::vector<LinkSeq>& out) {
    if (cur == dst) {
        out.push_back(stack);
        return;
    }
    auto it = net.out_links.find(cur);
    if (it == net.out_links.end()) return;
    for (int li : it->second) {
        const Link& l = net.links[li];
        if (visited.count(l.to_node)) continue;
        visited.insert(l.to_node);
        stack.push_back(l.id);
        dfs_all_simple(net, l.to_node, dst, visited, stack, out);
        stack.pop_back();
        visited.erase(l.to_node);
    }
}

// Dijkstra by free-flow time with banned links/nodes; returns the link-id
// sequence of a shortest path, empty if unreachable.
LinkSeq dijkstra(const Network& net, NodeId src, NodeId dst,
                 const std::set<int>& banned_links,
                 const std::set<NodeId>& banned_nodes) {
    const double inf = std::numeric_limits<double>::infinity();
    std::map<NodeId, double> dist;
    std::map<NodeId, int> pred_link;  // link index used to reach node
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.push({0.0, src});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[u] + 1e-15) continue;
        if (u == dst) break;
        auto it = net.out_links.find(u);
        if (it == net.out_links.end()) continue;
        for (int li : it->second) {
            const Link& l = net.links[li];
            if (banned_links.count(l.id) || banned_nodes.count(l.to_node)) continue;
            double nd = d + l.free_flow_time;
            auto dit = dist.find(l.to_node);
            double old = dit == dist.end() ? inf : dit->second;
            if (nd < old - 1e-15) {
                dist[l.to_node] = nd;
                pred_link[l.to_node] = li;
                pq.push({nd, l.to_node});
            }
        }
    }
    if (!dist.count(dst)) return {};
    LinkSeq seq;
    NodeId cur = dst;
    while (cur != src) {
        int li = pred_link.at(cur);
        seq.push_back(net.links[li].id);
        cur = net.links[li].from_node;
    }
    std::reverse(seq.begin(), seq.end());
    return seq;
}

// K shortest loopless paths (Yen).
std::vector<LinkSeq> yen_k_shortest(const Network& net, NodeId src, NodeId dst,
                                    int K) {
    std::vector<LinkSeq> result;
    LinkSeq first = dijkstra(net, src, dst, {}, {});
    if (first.empty()) return result;
    result.push_back(first);

    auto seq_time = [&](const LinkSeq& s) {
        double t = 0.0;
        for (int id : s) t += net.links[net.link_index(id)].free_flow_time;
        return t;
    };
    // candidates ordered by (time, lex link ids)
    auto cmp = [&](const LinkSeq& a, const LinkSeq& b) {
        double ta = seq_time(a), tb = seq_time(b);
        if (std::abs(ta - tb) > 1e-12) return ta < tb;
        return a < b;
    };
    std::vector<LinkSeq> candidates;

    while (static_cast<int>(result.size()) < K) {
        const LinkSeq& prev = result.back();
        // spur from each node of the previous path
        NodeId spur_node = src;
        LinkSeq root;
        for (size_t i = 0; i <= prev.size(); ++i) {
            if (i > 0) {
                int li = net.link_index(prev[i - 1]);
                root.push_back(prev[i - 1]);
                spur_node = net.links[li].to_node;
            }
            if (i == prev.size()) break;
            std::set<int> banned_links;
            for (const LinkSeq& r : result) {
                if (r.size() > i && std::equal(root.begin(), root.end(), r.begin()))
                    banned_links.insert(r[i]);
            }
            for (const LinkSeq& c : candidates) {
                if (c.size() > i && std::equal(root.begin(), root.end(), c.begin()))
                    banned_links.insert(c[i]);
            }
            std::set<NodeId> banned_nodes;
            NodeId n = src;
            banned_nodes.insert(src);
            for (size_t j = 0; j < i; ++j) {
                n = net.links[net.link_index(root[j])].to_node;
                banned_nodes.insert(n);
            }
            banned_nodes.erase(spur_node);
            LinkSeq spur = dijkstra(net, spur_node, dst, banned_links, banned_nodes);
            if (spur.empty()) continue;
            LinkSeq total = root;
            total.insert(total.end(), spur.begin(), spur.end());
            if (std::find_if(candidates.begin(), candidates.end(),
                             [&](const LinkSeq& c) { return c == total; }) ==
                candidates.end())
                candidates.push_back(total);
        }
        if (candidates.empty()) break;
        auto best = std::min_element(candidates.begin(), candidates.end(), cmp);
        result.push_back(*best);
        candidates.erase(best);
    }
    return result;
}

}  // namespace

PathCatalog enumerate_paths(const Network& net,
                            const std::vector<NodePair>& pairs,
                            int max_paths_per_pair, PathGenMode mode) {
    if (max_paths_per_pair < 1)
        throw std::runtime_error("max_paths_per_pair must be >= 1");
    PathCatalog cat;
    cat.link_paths.resize(net.links.size());

    // de-duplicate pairs, keep deterministic order
    std::vector<NodePair> uniq;
    {
        std::set<NodePair> seen;
        for (const auto& p : pairs)
            if (seen.insert(p).second) uniq.push_back(p);
        std::sort(uniq.begin(), uniq.end());
    }

    for (const auto& [src, dst] : uniq) {
        if (src == dst)
            throw std::runtime_error("origin equals destination: node " +
                                     std::to_string(src));
        if (!net.has_node(src) || !net.has_node(dst))
            throw std::runtime_error("pair (" + std::to_string(src) + "," +
                                     std::to_string(dst) + ") not in network");
        std::vector<LinkSeq> seqs;
        if (mode == PathGenMode::AllSimple) {
            std::set<NodeId> visited{src};
            LinkSeq stack;
            dfs_all_simple(net, src, dst, visited, stack, seqs);
            std::sort(seqs.begin(), seqs.end(), [&](const LinkSeq& a, const LinkSeq& b) {
                double ta = 0, tb = 0;
                for (int id : a) ta += net.links[net.link_index(id)].free_flow_time;
                for (int id : b) tb += net.links[net.link_index(id)].free_flow_time;
                if (std::abs(ta - tb) > 1e-12) return ta < tb;
                return a < b;
            });
            if (static_cast<int>(seqs.size()) > max_paths_per_pair)
                seqs.resize(max_paths_per_pair);
        } else {
            seqs = yen_k_shortest(net, src, dst, max_paths_per_pair);
        }
        if (seqs.empty())
            throw std::runtime_error("pair (" + std::to_string(src) + "," +
                                     std::to_string(dst) + ") is disconnected");
        std::vector<int>& ids = cat.by_pair[{src, dst}];
        for (auto& seq : seqs) {
            Path p;
            p.id = static_cast<int>(cat.paths.size());
            p.od = {src, dst};
            p.links = std::move(seq);
            ids.push_back(p.id);
            for (int lid : p.links) cat.link_paths[net.link_index(lid)].push_back(p.id);
            cat.paths.push_back(std::move(p));
        }
    }
    return cat;
}

std::map<NodePair, FreeFlowQuantity> free_flow_quantities(
    const Network& net, const PathCatalog& catalog) {
    std::map<NodePair, FreeFlowQuantity> out;
    for (const auto& [pair, ids] : catalog.by_pair) {
        const Path* best = nullptr;
        double best_t = 0, best_d = 0;
        for (int id : ids) {
            const Path& p = catalog.paths[id];
            double t = path_free_flow_time(net, p);
            double d = path_length(net, p);
            bool better = false;
            if (!best)
                better = true;
            else if (t < best_t - 1e-12)
                better = true;
            else if (std::abs(t - best_t) <= 1e-12) {
                if (d < best_d - 1e-12)
                    better = true;
                else if (std::abs(d - best_d) <= 1e-12 && p.links < best->links)
                    better = true;
            }
            if (better) {
                best = &p;
                best_t = t;
                best_d = d;
            }
        }
        out[pair] = {best_t, best_d};
    }
    return out;
}

std::vector<double> link_volumes(const Network& net, const PathCatalog& catalog,
                                 const std::vector<double>& all_path_flows) {
    if (all_path_flows.size() != catalog.paths.size())
        throw std::logic_error("flow vector size does not match catalog");
    std::vector<double> v(net.links.size(), 0.0);
    for (size_t a = 0; a < net.links.size(); ++a)
        for (int pid : catalog.link_paths[a]) v[a] += all_path_flows[pid];
    return v;
}

double bpr_time(const Link& link, const LinkCostModel& model, double v) {
    return link.free_flow_time *
           (1.0 + model.bpr_alpha * std::pow(v / link.capacity, model.bpr_beta));
}

std::vector<double> path_cost(const PathCatalog& catalog,
                              const LinkCostModel& model, const Network& net,
                              const std::vector<double>& all_path_flows) {
    for (double f : all_path_flows)
        if (f < 0.0) throw std::runtime_error("negative path flow");
    std::vector<double> v = link_volumes(net, catalog, all_path_flows);
    std::vector<double> link_t(net.links.size());
    for (size_t a = 0; a < net.links.size(); ++a)
        link_t[a] = bpr_time(net.links[a], model, v[a]);
    std::vector<double> cost(catalog.paths.size(), 0.0);
    for (size_t p = 0; p < catalog.paths.size(); ++p)
        for (int lid : catalog.paths[p].links)
            cost[p] += link_t[net.link_index(lid)];
    return cost;
}

}  // namespace mage
