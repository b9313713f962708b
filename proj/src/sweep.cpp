#include "mage/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace mage {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int kpi_cell_count() {
    const std::string h = EquilibriumReport::csv_header();
    return static_cast<int>(std::count(h.begin(), h.end(), ','));
}

}  // namespace

void apply_axis(Scenario& scn, const std::string& param, double value) {
    if (param == "policy.av_cap") {
        if (value <= 0.0 || value > 1.0)
            throw std::runtime_error("av_cap must lie in (0, 1], got " +
                                     std::to_string(value));
        scn.av_cap = value;
        return;
    }
    if (param.rfind("companies.", 0) == 0) {
        std::string rest = param.substr(10);
        auto dot = rest.find('.');
        if (dot != std::string::npos) {
            int k = 0;
            try {
                k = std::stoi(rest.substr(0, dot));
            } catch (const std::exception&) {
                throw std::runtime_error("bad company id in axis " + param);
            }
            std::string field = rest.substr(dot + 1);
            auto it = scn.companies.find(k);
            if (it == scn.companies.end())
                throw std::runtime_error("axis " + param +
                                         " names an unknown company");
            if (field == "mu_av" || field == "mu_hv") {
                if (value < 1.0)
                    throw std::runtime_error("relaxation must be >= 1, got " +
                                             std::to_string(value));
                (field == "mu_av" ? it->second.mu_av : it->second.mu_hv) =
                    value;
                return;
            }
        }
    }
    throw std::runtime_error(
        "unsupported sweep parameter " + param +
        " (expected policy.av_cap, companies.<k>.mu_av or companies.<k>.mu_hv)");
}

SweepSpec load_sweep(const std::string& config_text,
                     const std::string& base_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(config_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("sweep config is not valid JSON: ") +
                                 e.what());
    }
    SweepSpec spec;
    if (!j.contains("base"))
        throw std::runtime_error("sweep config needs a base scenario");
    std::string base = j.at("base").get<std::string>();
    std::string path = base;
    if (base.rfind("builtin:", 0) != 0 && !base.empty() && base[0] != '/')
        path = base_dir + "/" + base;
    std::string text =
        base.rfind("builtin:", 0) == 0 ? "{\"network\": \"" + base + "\"}"
                                       : read_file(path);
    if (base.rfind("builtin:", 0) == 0 && base == "builtin:small")
        spec.base = build_small_benchmark();
    else
        spec.base = load_scenario(text, base_dir);
    spec.workers = j.value("workers", 1);
    if (spec.workers < 1)
        throw std::runtime_error("workers must be positive");
    if (!j.contains("axes") || !j.at("axes").is_array() || j.at("axes").empty())
        throw std::runtime_error("sweep config needs a nonempty axes list");
    for (const auto& a : j.at("axes")) {
        SweepAxis ax;
        ax.param = a.at("param").get<std::string>();
        for (const auto& v : a.at("values"))
            ax.values.push_back(v.get<double>());
        if (ax.values.empty())
            throw std::runtime_error("axis " + ax.param + " has no values");
        // validate every value against a scratch copy up front
        Scenario scratch = spec.base;
        for (double v : ax.values) apply_axis(scratch, ax.param, v);
        spec.axes.push_back(std::move(ax));
    }
    return spec;
}

SweepResult run_sweep(const SweepSpec& spec, const SolverOptions& opts,
                      int jobs) {
    SweepResult result;
    for (const SweepAxis& a : spec.axes) result.axis_names.push_back(a.param);

    // chains: fix all outer axes, run the innermost axis sequentially so
    // each point warm-starts from its grid neighbor
    size_t n_axes = spec.axes.size();
    size_t inner = n_axes ? spec.axes.back().values.size() : 1;
    size_t n_chains = 1;
    for (size_t a = 0; a + 1 < n_axes; ++a)
        n_chains *= spec.axes[a].values.size();

    std::vector<std::vector<SweepRow>> chain_rows(n_chains);
    std::atomic<size_t> next_chain{0};
    std::mutex err_mtx;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            size_t c = next_chain.fetch_add(1);
            if (c >= n_chains) return;
            try {
                // decode chain id into outer-axis indices
                std::vector<size_t> idx(n_axes, 0);
                size_t rem = c;
                for (size_t a = n_axes >= 1 ? n_axes - 1 : 0; a-- > 0;) {
                    idx[a] = rem % spec.axes[a].values.size();
                    rem /= spec.axes[a].values.size();
                }
                Eigen::VectorXd warm;
                bool have_warm = false;
                for (size_t i = 0; i < inner; ++i) {
                    if (n_axes) idx[n_axes - 1] = i;
                    Scenario scn = spec.base;
                    SweepRow row;
                    for (size_t a = 0; a < n_axes; ++a) {
                        double v = spec.axes[a].values[idx[a]];
                        apply_axis(scn, spec.axes[a].param, v);
                        row.axis_values.push_back(v);
                    }
                    EquilibriumSystem sys(std::move(scn));
                    BoxMcp p;
                    p.n = sys.dimension();
                    p.lo = sys.lower();
                    p.hi = sys.upper();
                    p.residual = [&sys](const Eigen::VectorXd& x) {
                        return sys.residual(x);
                    };
                    p.jacobian = [&sys](const Eigen::VectorXd& x) {
                        return sys.jacobian(x);
                    };
                    Eigen::VectorXd x0 =
                        have_warm ? warm : sys.initial_state();
                    auto [x, trace] = solve(p, opts, x0);
                    row.converged = trace.converged;
                    row.residual = trace.final_residual;
                    if (trace.converged) {
                        warm = x;
                        have_warm = true;
                        EquilibriumReport rep =
                            compute_kpis(sys, x, std::max(opts.tol * 10, 1e-6));
                        std::string r = rep.csv_row("");
                        row.kpi_cells = r.substr(1);  // drop the label cell
                    }
                    chain_rows[c].push_back(std::move(row));
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(err_mtx);
                if (first_error.empty()) first_error = e.what();
                return;
            }
        }
    };

    int n_workers = std::max(1, std::min<int>(jobs, (int)n_chains));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (!first_error.empty()) throw std::runtime_error(first_error);

    for (auto& rows : chain_rows)
        for (auto& r : rows) result.rows.push_back(std::move(r));
    std::sort(result.rows.begin(), result.rows.end(),
              [](const SweepRow& a, const SweepRow& b) {
                  return a.axis_values < b.axis_values;
              });
    for (const SweepRow& r : result.rows)
        if (!r.converged) ++result.failed;
    return result;
}

std::string SweepResult::to_csv() const {
    std::ostringstream out;
    out.precision(12);
    for (const std::string& n : axis_names) out << n << ',';
    out << "converged,residual,"
        << EquilibriumReport::csv_header().substr(6) << '\n';
    int kpi_cells = kpi_cell_count();
    for (const SweepRow& r : rows) {
        for (double v : r.axis_values) out << v << ',';
        out << (r.converged ? 1 : 0) << ',' << r.residual << ',';
        if (r.converged)
            out << r.kpi_cells;
        else
            for (int i = 1; i < kpi_cells; ++i) out << ',';
        out << '\n';
    }
    return out.str();
}

}  // namespace mage
