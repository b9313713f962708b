#include "mage/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace mage {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double matching_time(double z_sum, double D, const WaitingConfig& cfg) {
    return 1.0 / std::max(z_sum - D, cfg.delta);
}

struct EquilibriumSystem::ClassInfo {
    ClassKey key;
    int k = 0;
    VehicleType x = VehicleType::HV;
    VehicleParams p;
    double mu_service = 1.0;  // multiplier on C_p in service-phase rows
    double mu_pickup = 1.0;   // multiplier on C_p in pickup-phase rows
    double fleet = 0.0;
    std::vector<NodeId> dispatch;
    int nu_var = -1;
    int nu_av_var = -1;  // -1 for HV classes or companies without AVs
    std::map<NodeId, int> phi_var;
    // phi row terms per dispatch node s
    std::map<NodeId, std::vector<int>> phi_d_in;  // D vars of markets ending at s
    std::map<NodeId, std::vector<int>> phi_z_out; // z vars dispatched from s
    struct PickupRow {
        int t_var = -1;
        std::vector<int> h_vars;
        std::vector<int> z_vars;  // flows consuming this pickup movement
    };
    std::map<NodePair, PickupRow> pickup;  // (s,i), s != i
    std::vector<int> market_ids;
};

struct EquilibriumSystem::Market {
    int ci = 0;
    NodePair od;
    std::vector<NodeId> s_nodes;
    std::vector<int> z_vars;
    std::vector<int> theta_vars;
    std::vector<int> tsi_vars;  // -1 where s == od.first
    std::vector<double> r_tilde;
    int d_var = -1;
    int lam_var = -1;
    int t_var = -1;
    std::vector<int> h_serv;
    double t0 = 0.0, d0 = 0.0;
    double fare_fixed = 0.0;
};

struct EquilibriumSystem::OdInfo {
    NodePair od;
    double demand = 0.0;
    int dsv_var = -1, sigma_var = -1, tsv_var = -1;
    std::vector<int> h_sv;
    std::vector<int> market_ids;
    double t0 = 0.0, d0 = 0.0;
};

EquilibriumSystem::~EquilibriumSystem() = default;
EquilibriumSystem::EquilibriumSystem(EquilibriumSystem&&) noexcept = default;
EquilibriumSystem& EquilibriumSystem::operator=(EquilibriumSystem&&) noexcept =
    default;

Bounds compute_bounds(const Scenario& scn, const PathCatalog& catalog) {
    Bounds b;
    double total = 0.0;
    for (const auto& [od, d] : scn.demand) total += d;
    b.h_bar = 1.05 * total;

    double mu_max = 1.0;
    for (const auto& [k, c] : scn.companies) {
        if (c.av) mu_max = std::max(mu_max, c.mu_av);
        if (c.hv) mu_max = std::max(mu_max, c.mu_hv);
    }
    std::vector<double> flows(catalog.paths.size(), b.h_bar);
    std::vector<double> costs = path_cost(catalog, scn.cost, scn.network, flows);
    double cmax = 0.0;
    for (double c : costs) cmax = std::max(cmax, c);
    b.t_bar = 1.05 * mu_max * cmax;
    return b;
}

EquilibriumSystem::EquilibriumSystem(Scenario scn)
    : scn_(std::move(scn)),
      sets_(derive_index_sets(scn_)),
      catalog_(build_catalog(scn_, sets_)),
      ff_(free_flow_quantities(scn_.network, catalog_)),
      bounds_(compute_bounds(scn_, catalog_)) {
    build_layout();
}

void EquilibriumSystem::build_layout() {
    int next = 0;
    auto begin_block = [&](const char* name) {
        blocks_.push_back({name, next, next});
    };
    auto end_block = [&]() { blocks_.back().end = next; };

    for (const ClassKey& key : sets_.classes) {
        ClassInfo ci;
        ci.key = key;
        ci.k = key.first;
        ci.x = key.second;
        ci.p = scn_.params(ci.k, ci.x);
        const CompanyParams& comp = scn_.companies.at(ci.k);
        if (ci.x == VehicleType::AV) {
            ci.mu_service = comp.mu_av;
            ci.mu_pickup = 1.0;
        } else {
            ci.mu_service = 1.0;
            ci.mu_pickup = comp.mu_hv;
        }
        ci.fleet = comp.fleet;
        ci.dispatch = sets_.per_class.at(key).dispatch_nodes;
        classes_.push_back(std::move(ci));
    }

    for (const auto& [od, d] : scn_.demand) {
        OdInfo oi;
        oi.od = od;
        oi.demand = d;
        oi.t0 = ff_.at(od).t0;
        oi.d0 = ff_.at(od).d0;
        od_of_[od] = static_cast<int>(ods_.size());
        ods_.push_back(std::move(oi));
    }

    for (size_t c = 0; c < classes_.size(); ++c) {
        const ClassSets& cs = sets_.per_class.at(classes_[c].key);
        for (const NodePair& od : cs.served) {
            Market m;
            m.ci = static_cast<int>(c);
            m.od = od;
            m.s_nodes = classes_[c].dispatch;
            m.t0 = ff_.at(od).t0;
            m.d0 = ff_.at(od).d0;
            m.fare_fixed = scn_.fare_fixed(classes_[c].k, classes_[c].x, od);
            market_of_[{classes_[c].key, od}] = static_cast<int>(markets_.size());
            ods_[od_of_.at(od)].market_ids.push_back(
                static_cast<int>(markets_.size()));
            classes_[c].market_ids.push_back(static_cast<int>(markets_.size()));
            markets_.push_back(std::move(m));
        }
    }

    // block 1: z
    begin_block("z");
    for (Market& m : markets_)
        for (size_t si = 0; si < m.s_nodes.size(); ++si) m.z_vars.push_back(next++);
    end_block();

    begin_block("phi");
    for (ClassInfo& ci : classes_)
        for (NodeId s : ci.dispatch) ci.phi_var[s] = next++;
    end_block();

    begin_block("lambda");
    for (Market& m : markets_) m.lam_var = next++;
    end_block();

    begin_block("nu");
    for (const auto& [k, comp] : scn_.companies) {
        int var = next++;
        for (ClassInfo& ci : classes_)
            if (ci.k == k) ci.nu_var = var;
    }
    end_block();

    begin_block("nu_av");
    for (const auto& [k, comp] : scn_.companies) {
        if (!comp.av) continue;
        int var = next++;
        for (ClassInfo& ci : classes_)
            if (ci.k == k && ci.x == VehicleType::AV) ci.nu_av_var = var;
    }
    end_block();

    begin_block("D_sv");
    for (OdInfo& oi : ods_) oi.dsv_var = next++;
    end_block();

    begin_block("D");
    for (Market& m : markets_) m.d_var = next++;
    end_block();

    begin_block("sigma");
    for (OdInfo& oi : ods_) oi.sigma_var = next++;
    end_block();

    begin_block("theta");
    for (Market& m : markets_)
        for (size_t si = 0; si < m.s_nodes.size(); ++si)
            m.theta_vars.push_back(next++);
    end_block();

    begin_block("t_sv");
    for (OdInfo& oi : ods_) oi.tsv_var = next++;
    end_block();

    begin_block("t_service");
    for (Market& m : markets_) m.t_var = next++;
    end_block();

    begin_block("t_pickup");
    for (ClassInfo& ci : classes_) {
        const ClassSets& cs = sets_.per_class.at(ci.key);
        for (const NodePair& sp : cs.dispatch_pairs)
            ci.pickup[sp].t_var = next++;
    }
    end_block();

    begin_block("h_sv");
    for (OdInfo& oi : ods_)
        for (int pid : catalog_.paths_for(oi.od)) {
            oi.h_sv.push_back(next);
            h_var_path_.push_back({next, pid});
            ++next;
        }
    end_block();

    begin_block("h_service");
    for (Market& m : markets_)
        for (int pid : catalog_.paths_for(m.od)) {
            m.h_serv.push_back(next);
            h_var_path_.push_back({next, pid});
            ++next;
        }
    end_block();

    begin_block("h_pickup");
    for (ClassInfo& ci : classes_)
        for (auto& [sp, row] : ci.pickup)
            for (int pid : catalog_.paths_for(sp)) {
                row.h_vars.push_back(next);
                h_var_path_.push_back({next, pid});
                ++next;
            }
    end_block();

    n_ = next;

    // wire up the cross-references now that all vars exist
    for (Market& m : markets_) {
        const ClassInfo& ci = classes_[m.ci];
        for (size_t si = 0; si < m.s_nodes.size(); ++si) {
            NodeId s = m.s_nodes[si];
            NodeId i = m.od.first;
            m.tsi_vars.push_back(s == i ? -1 : classes_[m.ci].pickup.at({s, i}).t_var);
            m.r_tilde.push_back(fixed_revenue(ci.k, ci.x, s, m.od));
        }
    }
    for (ClassInfo& ci : classes_) {
        for (int mi : ci.market_ids) {
            const Market& m = markets_[mi];
            for (size_t si = 0; si < m.s_nodes.size(); ++si)
                ci.phi_z_out[m.s_nodes[si]].push_back(m.z_vars[si]);
            ci.phi_d_in[m.od.second].push_back(m.d_var);
            for (size_t si = 0; si < m.s_nodes.size(); ++si) {
                NodeId s = m.s_nodes[si];
                if (s == m.od.first) continue;
                ci.pickup.at({s, m.od.first}).z_vars.push_back(m.z_vars[si]);
            }
        }
    }

    lo_ = Eigen::VectorXd::Zero(n_);
    hi_ = Eigen::VectorXd::Constant(n_, kInf);
    for (const BlockRange& b : blocks_) {
        double cap = kInf;
        if (b.name == "theta") cap = 1.0;
        else if (b.name == "t_sv" || b.name == "t_service" ||
                 b.name == "t_pickup")
            cap = bounds_.t_bar;
        else if (b.name == "h_sv" || b.name == "h_service" ||
                 b.name == "h_pickup")
            cap = bounds_.h_bar;
        for (int i = b.begin; i < b.end; ++i) hi_[i] = cap;
    }
}

double EquilibriumSystem::fixed_revenue(int k, VehicleType x, NodeId s,
                                        NodePair od) const {
    const VehicleParams& p = scn_.params(k, x);
    double F = scn_.fare_fixed(k, x, od);
    double t0 = ff_.at(od).t0;
    double d0 = ff_.at(od).d0;
    double d0_si = s == od.first ? 0.0 : ff_.at({s, od.first}).d0;
    return F - p.time_fare_rate * t0 + p.dist_fare_rate * d0 -
           p.dist_cost_rate * (d0 + d0_si);
}

double EquilibriumSystem::w_max(NodePair od, const Eigen::VectorXd& x) const {
    const OdInfo& oi = ods_[od_of_.at(od)];
    double solo = scn_.solo.time_rate * x[oi.tsv_var] +
                  scn_.solo.dist_rate * oi.d0;
    double min_g = kInf, min_gamma2 = kInf;
    for (int mi : oi.market_ids) {
        const Market& m = markets_[mi];
        const VehicleParams& p = classes_[m.ci].p;
        double t = x[m.t_var];
        double g = m.fare_fixed + p.time_fare_rate * (t - m.t0) +
                   p.dist_fare_rate * m.d0 + p.traveler_time_value * t;
        min_g = std::min(min_g, g);
        min_gamma2 = std::min(min_gamma2, p.traveler_wait_value);
    }
    if (oi.market_ids.empty()) return 0.0;
    return std::max(0.0, (solo - min_g) / min_gamma2);
}

namespace {
double wait_of(const WaitingConfig& cfg, double wmax, double w_raw) {
    if (cfg.epsilon > 0.0) {
        double a = wmax, b = w_raw;
        return 0.5 * (a + b - std::sqrt((a - b) * (a - b) +
                                        cfg.epsilon * cfg.epsilon));
    }
    return std::min(wmax, w_raw);
}
}  // namespace

double EquilibriumSystem::customer_wait(int k, VehicleType x, NodePair od,
                                        const Eigen::VectorXd& xs) const {
    int mi = market_of_.at({{k, x}, od});
    const Market& m = markets_[mi];
    double z_sum = 0.0;
    for (int zv : m.z_vars) z_sum += xs[zv];
    double w_tilde = matching_time(z_sum, xs[m.d_var], scn_.waiting);
    double pickup = 0.0;
    if (scn_.waiting.pickup_term == PickupTermForm::WeightedMean) {
        for (size_t si = 0; si < m.s_nodes.size(); ++si)
            if (m.tsi_vars[si] >= 0)
                pickup += xs[m.tsi_vars[si]] * xs[m.theta_vars[si]];
    } else {
        double t_sum = 0.0, th_mean = 0.0;
        for (size_t si = 0; si < m.s_nodes.size(); ++si) {
            if (m.tsi_vars[si] >= 0) t_sum += xs[m.tsi_vars[si]];
            th_mean += xs[m.theta_vars[si]];
        }
        th_mean /= static_cast<double>(m.s_nodes.size());
        pickup = t_sum * th_mean;
    }
    return wait_of(scn_.waiting, w_max(od, xs), w_tilde + pickup);
}

void EquilibriumSystem::assemble(const Eigen::VectorXd& x,
                                 Eigen::VectorXd& F) const {
    F.setZero(n_);

    std::vector<double> flows(catalog_.paths.size(), 0.0);
    for (const auto& [var, pid] : h_var_path_) flows[pid] += x[var];
    std::vector<double> C =
        path_cost(catalog_, scn_.cost, scn_.network, flows);

    // z rows (TNC dispatch optimality)
    for (const Market& m : markets_) {
        const ClassInfo& ci = classes_[m.ci];
        double t_ij = x[m.t_var];
        double nu = x[ci.nu_var] + (ci.nu_av_var >= 0 ? x[ci.nu_av_var] : 0.0);
        for (size_t si = 0; si < m.s_nodes.size(); ++si) {
            double t_si = m.tsi_vars[si] >= 0 ? x[m.tsi_vars[si]] : 0.0;
            F[m.z_vars[si]] =
                -m.r_tilde[si] - ci.p.time_fare_rate * t_ij +
                ci.p.time_cost_rate * (t_si + t_ij) -
                ci.p.vehicle_wait_cost_rate * t_si +
                x[ci.phi_var.at(m.s_nodes[si])] - x[m.lam_var] +
                (t_si + t_ij) * nu;
        }
    }

    // phi rows (idle-vehicle availability at dispatch nodes)
    for (const ClassInfo& ci : classes_) {
        for (const auto& [s, var] : ci.phi_var) {
            double v = 0.0;
            auto din = ci.phi_d_in.find(s);
            if (din != ci.phi_d_in.end())
                for (int dv : din->second) v += x[dv];
            auto zout = ci.phi_z_out.find(s);
            if (zout != ci.phi_z_out.end())
                for (int zv : zout->second) v -= x[zv];
            F[var] = v;
        }
    }

    // lambda rows (dispatch covers demand)
    for (const Market& m : markets_) {
        double v = -x[m.d_var];
        for (int zv : m.z_vars) v += x[zv];
        F[m.lam_var] = v;
    }

    // nu / nu_av rows (fleet time budgets)
    for (const auto& [k, comp] : scn_.companies) {
        int nu_var = -1, nu_av_var = -1;
        double used = 0.0, used_av = 0.0;
        for (const ClassInfo& ci : classes_) {
            if (ci.k != k) continue;
            nu_var = ci.nu_var;
            if (ci.nu_av_var >= 0) nu_av_var = ci.nu_av_var;
            double cls_used = 0.0;
            for (int mi : ci.market_ids) {
                const Market& m = markets_[mi];
                double t_ij = x[m.t_var];
                for (size_t si = 0; si < m.s_nodes.size(); ++si) {
                    double t_si =
                        m.tsi_vars[si] >= 0 ? x[m.tsi_vars[si]] : 0.0;
                    cls_used += (t_si + t_ij) * x[m.z_vars[si]];
                }
            }
            used += cls_used;
            if (ci.x == VehicleType::AV) used_av += cls_used;
        }
        F[nu_var] = comp.fleet - used;
        if (nu_av_var >= 0) F[nu_av_var] = scn_.av_cap * comp.fleet - used_av;
    }

    // D_sv rows (solo disutility vs accessibility price)
    for (const OdInfo& oi : ods_)
        F[oi.dsv_var] = scn_.solo.time_rate * x[oi.tsv_var] +
                        scn_.solo.dist_rate * oi.d0 - x[oi.sigma_var];

    // D rows (TNC generalized cost vs accessibility price)
    for (const OdInfo& oi : ods_) {
        double wmax = w_max(oi.od, x);
        for (int mi : oi.market_ids) {
            const Market& m = markets_[mi];
            const VehicleParams& p = classes_[m.ci].p;
            double z_sum = 0.0;
            for (int zv : m.z_vars) z_sum += x[zv];
            double w_tilde = matching_time(z_sum, x[m.d_var], scn_.waiting);
            double pick = 0.0;
            if (scn_.waiting.pickup_term == PickupTermForm::WeightedMean) {
                for (size_t si = 0; si < m.s_nodes.size(); ++si)
                    if (m.tsi_vars[si] >= 0)
                        pick += x[m.tsi_vars[si]] * x[m.theta_vars[si]];
            } else {
                double t_sum = 0.0, th = 0.0;
                for (size_t si = 0; si < m.s_nodes.size(); ++si) {
                    if (m.tsi_vars[si] >= 0) t_sum += x[m.tsi_vars[si]];
                    th += x[m.theta_vars[si]];
                }
                pick = t_sum * th / static_cast<double>(m.s_nodes.size());
            }
            double w = wait_of(scn_.waiting, wmax, w_tilde + pick);
            double t = x[m.t_var];
            F[m.d_var] = m.fare_fixed + p.time_fare_rate * (t - m.t0) +
                         p.dist_fare_rate * m.d0 + p.traveler_time_value * t +
                         p.traveler_wait_value * w - x[oi.sigma_var] +
                         x[m.lam_var];
        }
    }

    // sigma rows (total demand satisfaction)
    for (const OdInfo& oi : ods_) {
        double v = x[oi.dsv_var] - oi.demand;
        for (int mi : oi.market_ids) v += x[markets_[mi].d_var];
        F[oi.sigma_var] = v;
    }

    // theta rows (dispatch-share consistency)
    for (const Market& m : markets_) {
        double z_sum = 0.0;
        for (int zv : m.z_vars) z_sum += x[zv];
        for (size_t si = 0; si < m.s_nodes.size(); ++si)
            F[m.theta_vars[si]] = x[m.theta_vars[si]] * z_sum - x[m.z_vars[si]];
    }

    // t rows (flow balance)
    for (const OdInfo& oi : ods_) {
        double v = -x[oi.dsv_var];
        for (int hv : oi.h_sv) v += x[hv];
        F[oi.tsv_var] = v;
    }
    for (const Market& m : markets_) {
        double v = -x[m.d_var];
        for (int hv : m.h_serv) v += x[hv];
        F[m.t_var] = v;
    }
    for (const ClassInfo& ci : classes_) {
        for (const auto& [sp, row] : ci.pickup) {
            double v = 0.0;
            for (int hv : row.h_vars) v += x[hv];
            for (int zv : row.z_vars) v -= x[zv];
            F[row.t_var] = v;
        }
    }

    // h rows (relaxed Wardrop per phase)
    for (const OdInfo& oi : ods_) {
        const auto& pids = catalog_.paths_for(oi.od);
        for (size_t pi = 0; pi < pids.size(); ++pi)
            F[oi.h_sv[pi]] = C[pids[pi]] - x[oi.tsv_var];
    }
    for (const Market& m : markets_) {
        const ClassInfo& ci = classes_[m.ci];
        const auto& pids = catalog_.paths_for(m.od);
        for (size_t pi = 0; pi < pids.size(); ++pi)
            F[m.h_serv[pi]] = ci.mu_service * C[pids[pi]] - x[m.t_var];
    }
    for (const ClassInfo& ci : classes_) {
        for (const auto& [sp, row] : ci.pickup) {
            const auto& pids = catalog_.paths_for(sp);
            for (size_t pi = 0; pi < pids.size(); ++pi)
                F[row.h_vars[pi]] = ci.mu_pickup * C[pids[pi]] - x[row.t_var];
        }
    }
}

Eigen::VectorXd EquilibriumSystem::residual(const Eigen::VectorXd& x) const {
    Eigen::VectorXd F(n_);
    assemble(x, F);
    return F;
}

Eigen::VectorXd EquilibriumSystem::regularized_residual(
    const Eigen::VectorXd& x, double tau, const Eigen::VectorXd& nu_ref) const {
    Eigen::VectorXd F = residual(x);
    if (tau != 0.0) {
        std::vector<int> nus = nu_indices();
        for (size_t i = 0; i < nus.size(); ++i)
            F[nus[i]] += tau * (x[nus[i]] - nu_ref[i]);
    }
    return F;
}

std::vector<int> EquilibriumSystem::nu_indices() const {
    std::vector<int> out;
    for (const BlockRange& b : blocks_)
        if (b.name == "nu" || b.name == "nu_av")
            for (int i = b.begin; i < b.end; ++i) out.push_back(i);
    return out;
}

std::vector<int> EquilibriumSystem::wait_columns(int mi) const {
    const Market& m = markets_[mi];
    const OdInfo& oi = ods_[od_of_.at(m.od)];
    std::vector<int> cols;
    for (int v : m.z_vars) cols.push_back(v);
    cols.push_back(m.d_var);
    for (int v : m.tsi_vars)
        if (v >= 0) cols.push_back(v);
    for (int v : m.theta_vars) cols.push_back(v);
    cols.push_back(oi.tsv_var);
    for (int omi : oi.market_ids) cols.push_back(markets_[omi].t_var);
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    return cols;
}

Eigen::MatrixXd EquilibriumSystem::jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n_, n_);

    // z rows
    for (const Market& m : markets_) {
        const ClassInfo& ci = classes_[m.ci];
        double t_ij = x[m.t_var];
        double nu = x[ci.nu_var] + (ci.nu_av_var >= 0 ? x[ci.nu_av_var] : 0.0);
        for (size_t si = 0; si < m.s_nodes.size(); ++si) {
            int r = m.z_vars[si];
            double t_si = m.tsi_vars[si] >= 0 ? x[m.tsi_vars[si]] : 0.0;
            J(r, m.t_var) +=
                -ci.p.time_fare_rate + ci.p.time_cost_rate + nu;
            if (m.tsi_vars[si] >= 0)
                J(r, m.tsi_vars[si]) += ci.p.time_cost_rate -
                                        ci.p.vehicle_wait_cost_rate + nu;
            J(r, ci.phi_var.at(m.s_nodes[si])) += 1.0;
            J(r, m.lam_var) -= 1.0;
            J(r, ci.nu_var) += t_si + t_ij;
            if (ci.nu_av_var >= 0) J(r, ci.nu_av_var) += t_si + t_ij;
        }
    }

    // phi rows
    for (const ClassInfo& ci : classes_) {
        for (const auto& [s, r] : ci.phi_var) {
            auto din = ci.phi_d_in.find(s);
            if (din != ci.phi_d_in.end())
                for (int dv : din->second) J(r, dv) += 1.0;
            auto zout = ci.phi_z_out.find(s);
            if (zout != ci.phi_z_out.end())
                for (int zv : zout->second) J(r, zv) -= 1.0;
        }
    }

    // lambda rows
    for (const Market& m : markets_) {
        for (int zv : m.z_vars) J(m.lam_var, zv) += 1.0;
        J(m.lam_var, m.d_var) -= 1.0;
    }

    // nu rows
    for (const ClassInfo& ci : classes_) {
        for (int mi : ci.market_ids) {
            const Market& m = markets_[mi];
            double t_ij = x[m.t_var];
            for (size_t si = 0; si < m.s_nodes.size(); ++si) {
                double t_si = m.tsi_vars[si] >= 0 ? x[m.tsi_vars[si]] : 0.0;
                double z = x[m.z_vars[si]];
                for (int r : {ci.nu_var, ci.nu_av_var}) {
                    if (r < 0) continue;
                    J(r, m.z_vars[si]) -= t_si + t_ij;
                    J(r, m.t_var) -= z;
                    if (m.tsi_vars[si] >= 0) J(r, m.tsi_vars[si]) -= z;
                }
            }
        }
    }

    // D_sv rows
    for (const OdInfo& oi : ods_) {
        J(oi.dsv_var, oi.tsv_var) += scn_.solo.time_rate;
        J(oi.dsv_var, oi.sigma_var) -= 1.0;
    }

    // D rows: analytic part plus finite differences through the waiting term
    for (const OdInfo& oi : ods_) {
        for (int mi : oi.market_ids) {
            const Market& m = markets_[mi];
            const VehicleParams& p = classes_[m.ci].p;
            int r = m.d_var;
            J(r, m.t_var) += p.time_fare_rate + p.traveler_time_value;
            J(r, oi.sigma_var) -= 1.0;
            J(r, m.lam_var) += 1.0;
            const ClassInfo& ci = classes_[m.ci];
            Eigen::VectorXd xp = x;
            for (int c : wait_columns(mi)) {
                double h = 1e-7 * (1.0 + std::abs(x[c]));
                xp[c] = x[c] + h;
                double wp = customer_wait(ci.k, ci.x, m.od, xp);
                xp[c] = x[c] - h;
                double wm = customer_wait(ci.k, ci.x, m.od, xp);
                xp[c] = x[c];
                J(r, c) += p.traveler_wait_value * (wp - wm) / (2.0 * h);
            }
        }
    }

    // sigma rows
    for (const OdInfo& oi : ods_) {
        J(oi.sigma_var, oi.dsv_var) += 1.0;
        for (int mi : oi.market_ids) J(oi.sigma_var, markets_[mi].d_var) += 1.0;
    }

    // theta rows
    for (const Market& m : markets_) {
        double z_sum = 0.0;
        for (int zv : m.z_vars) z_sum += x[zv];
        for (size_t si = 0; si < m.s_nodes.size(); ++si) {
            int r = m.theta_vars[si];
            J(r, m.theta_vars[si]) += z_sum;
            for (size_t sj = 0; sj < m.s_nodes.size(); ++sj)
                J(r, m.z_vars[sj]) +=
                    x[m.theta_vars[si]] - (si == sj ? 1.0 : 0.0);
        }
    }

    // t rows
    for (const OdInfo& oi : ods_) {
        for (int hv : oi.h_sv) J(oi.tsv_var, hv) += 1.0;
        J(oi.tsv_var, oi.dsv_var) -= 1.0;
    }
    for (const Market& m : markets_) {
        for (int hv : m.h_serv) J(m.t_var, hv) += 1.0;
        J(m.t_var, m.d_var) -= 1.0;
    }
    for (const ClassInfo& ci : classes_) {
        for (const auto& [sp, row] : ci.pickup) {
            for (int hv : row.h_vars) J(row.t_var, hv) += 1.0;
            for (int zv : row.z_vars) J(row.t_var, zv) -= 1.0;
        }
    }

    // h rows: mu * dC_p/dh_q - dt/dt
    std::vector<double> flows(catalog_.paths.size(), 0.0);
    for (const auto& [var, pid] : h_var_path_) flows[pid] += x[var];
    std::vector<double> vols = link_volumes(scn_.network, catalog_, flows);
    size_t P = catalog_.paths.size();
    Eigen::MatrixXd dC = Eigen::MatrixXd::Zero(P, P);
    for (size_t a = 0; a < scn_.network.links.size(); ++a) {
        const Link& l = scn_.network.links[a];
        double dt = 0.0;
        if (scn_.cost.bpr_alpha > 0.0) {
            dt = l.free_flow_time * scn_.cost.bpr_alpha * scn_.cost.bpr_beta *
                 std::pow(vols[a] / l.capacity, scn_.cost.bpr_beta - 1.0) /
                 l.capacity;
        }
        if (dt == 0.0) continue;
        for (int p : catalog_.link_paths[a])
            for (int q : catalog_.link_paths[a]) dC(p, q) += dt;
    }
    std::vector<std::vector<int>> path_hvars(P);
    for (const auto& [var, pid] : h_var_path_) path_hvars[pid].push_back(var);

    auto fill_h_row = [&](int r, int pid, double mu, int tvar) {
        for (size_t q = 0; q < P; ++q) {
            if (dC(pid, q) == 0.0) continue;
            for (int qv : path_hvars[q]) J(r, qv) += mu * dC(pid, q);
        }
        J(r, tvar) -= 1.0;
    };
    for (const OdInfo& oi : ods_) {
        const auto& pids = catalog_.paths_for(oi.od);
        for (size_t pi = 0; pi < pids.size(); ++pi)
            fill_h_row(oi.h_sv[pi], pids[pi], 1.0, oi.tsv_var);
    }
    for (const Market& m : markets_) {
        const ClassInfo& ci = classes_[m.ci];
        const auto& pids = catalog_.paths_for(m.od);
        for (size_t pi = 0; pi < pids.size(); ++pi)
            fill_h_row(m.h_serv[pi], pids[pi], ci.mu_service, m.t_var);
    }
    for (const ClassInfo& ci : classes_) {
        for (const auto& [sp, row] : ci.pickup) {
            const auto& pids = catalog_.paths_for(sp);
            for (size_t pi = 0; pi < pids.size(); ++pi)
                fill_h_row(row.h_vars[pi], pids[pi], ci.mu_pickup, row.t_var);
        }
    }
    return J;
}

Eigen::MatrixXd EquilibriumSystem::regularized_jacobian(
    const Eigen::VectorXd& x, double tau) const {
    Eigen::MatrixXd J = jacobian(x);
    if (tau != 0.0)
        for (int i : nu_indices()) J(i, i) += tau;
    return J;
}

Eigen::VectorXd EquilibriumSystem::initial_state() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    for (const OdInfo& oi : ods_) {
        double modes = 1.0 + static_cast<double>(oi.market_ids.size());
        double dsv = oi.demand / modes;
        x[oi.dsv_var] = dsv;
        x[oi.tsv_var] = oi.t0;
        // price the OD at the free-flow solo cost so the solo row starts
        // balanced; all other multipliers start at zero
        x[oi.sigma_var] =
            scn_.solo.time_rate * oi.t0 + scn_.solo.dist_rate * oi.d0;
        x[oi.h_sv[0]] = dsv;
        for (int mi : oi.market_ids) {
            const Market& m = markets_[mi];
            double dm = oi.demand / modes;
            x[m.d_var] = dm;
            x[m.t_var] = m.t0;
            x[m.h_serv[0]] = dm;
            double ns = static_cast<double>(m.s_nodes.size());
            // dispatch 10% above demand so the queue term starts on its
            // smooth side instead of at the 1/delta cliff
            for (size_t si = 0; si < m.s_nodes.size(); ++si) {
                x[m.z_vars[si]] = 1.10 * dm / ns;
                x[m.theta_vars[si]] = 1.0 / ns;
            }
        }
    }
    for (const ClassInfo& ci : classes_) {
        for (const auto& [sp, row] : ci.pickup) {
            x[row.t_var] = ff_.at(sp).t0;
            double z = 0.0;
            for (int zv : row.z_vars) z += x[zv];
            x[row.h_vars[0]] = z;
        }
    }
    return x;
}

std::string EquilibriumSystem::residual_block_report(
    const Eigen::VectorXd& x) const {
    Eigen::VectorXd F = residual(x);
    nlohmann::json out = nlohmann::json::array();
    for (const BlockRange& b : blocks_) {
        double worst = 0.0;
        int arg = b.begin;
        for (int i = b.begin; i < b.end; ++i)
            if (std::abs(F[i]) > worst) {
                worst = std::abs(F[i]);
                arg = i;
            }
        out.push_back({{"block", b.name},
                       {"size", b.end - b.begin},
                       {"max_abs", worst},
                       {"worst_index", arg}});
    }
    return out.dump(2);
}

int EquilibriumSystem::z_index(int k, VehicleType x, NodeId s,
                               NodePair od) const {
    const Market& m = markets_[market_of_.at({{k, x}, od})];
    for (size_t si = 0; si < m.s_nodes.size(); ++si)
        if (m.s_nodes[si] == s) return m.z_vars[si];
    throw std::logic_error("z_index: dispatch node not in class");
}

int EquilibriumSystem::theta_index(int k, VehicleType x, NodeId s,
                                   NodePair od) const {
    const Market& m = markets_[market_of_.at({{k, x}, od})];
    for (size_t si = 0; si < m.s_nodes.size(); ++si)
        if (m.s_nodes[si] == s) return m.theta_vars[si];
    throw std::logic_error("theta_index: dispatch node not in class");
}

int EquilibriumSystem::phi_index(int k, VehicleType x, NodeId s) const {
    for (const ClassInfo& ci : classes_)
        if (ci.k == k && ci.x == x) return ci.phi_var.at(s);
    throw std::logic_error("phi_index: class not found");
}

int EquilibriumSystem::lambda_index(int k, VehicleType x, NodePair od) const {
    return markets_[market_of_.at({{k, x}, od})].lam_var;
}

int EquilibriumSystem::nu_index(int k) const {
    for (const ClassInfo& ci : classes_)
        if (ci.k == k) return ci.nu_var;
    throw std::logic_error("nu_index: company not found");
}

int EquilibriumSystem::nu_av_index(int k) const {
    for (const ClassInfo& ci : classes_)
        if (ci.k == k && ci.nu_av_var >= 0) return ci.nu_av_var;
    return -1;
}

int EquilibriumSystem::dsv_index(NodePair od) const {
    return ods_[od_of_.at(od)].dsv_var;
}

int EquilibriumSystem::d_index(int k, VehicleType x, NodePair od) const {
    return markets_[market_of_.at({{k, x}, od})].d_var;
}

int EquilibriumSystem::sigma_index(NodePair od) const {
    return ods_[od_of_.at(od)].sigma_var;
}

int EquilibriumSystem::tsv_index(NodePair od) const {
    return ods_[od_of_.at(od)].tsv_var;
}

int EquilibriumSystem::t_service_index(int k, VehicleType x,
                                       NodePair od) const {
    return markets_[market_of_.at({{k, x}, od})].t_var;
}

int EquilibriumSystem::t_pickup_index(int k, VehicleType x, NodeId s,
                                      NodeId i) const {
    if (s == i) return -1;
    for (const ClassInfo& ci : classes_)
        if (ci.k == k && ci.x == x) return ci.pickup.at({s, i}).t_var;
    throw std::logic_error("t_pickup_index: class not found");
}

std::vector<int> EquilibriumSystem::h_sv_indices(NodePair od) const {
    return ods_[od_of_.at(od)].h_sv;
}

std::vector<int> EquilibriumSystem::h_service_indices(int k, VehicleType x,
                                                      NodePair od) const {
    return markets_[market_of_.at({{k, x}, od})].h_serv;
}

std::vector<int> EquilibriumSystem::h_pickup_indices(int k, VehicleType x,
                                                     NodeId s, NodeId i) const {
    for (const ClassInfo& ci : classes_)
        if (ci.k == k && ci.x == x) return ci.pickup.at({s, i}).h_vars;
    throw std::logic_error("h_pickup_indices: class not found");
}

}  // namespace mage
