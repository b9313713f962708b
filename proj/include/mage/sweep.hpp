#pragma once

#include "mage/mcp_solver.hpp"
#include "mage/metrics.hpp"

#include <string>
#include <vector>

namespace mage {

/// One grid axis: a mutable scenario parameter and its value list.
/// Supported parameter paths: policy.av_cap, companies.<k>.mu_av,
/// companies.<k>.mu_hv.
struct SweepAxis {
    std::string param;
    std::vector<double> values;
};

struct SweepSpec {
    Scenario base;
    std::vector<SweepAxis> axes;
    int workers = 1;
};

/// Parses a sweep config (JSON: base scenario path or inline, axes,
/// workers). base_dir resolves the base scenario path.
SweepSpec load_sweep(const std::string& config_text,
                     const std::string& base_dir = ".");

struct SweepRow {
    std::vector<double> axis_values;
    bool converged = false;
    double residual = 0.0;
    std::string kpi_cells;  // empty on failure, never fabricated
};

struct SweepResult {
    std::vector<std::string> axis_names;
    std::vector<SweepRow> rows;  // sorted by axis values
    int failed = 0;
    std::string to_csv() const;
};

/// Solves every grid point. Points sharing all but the innermost axis form
/// a chain solved sequentially with warm starts; chains run in parallel
/// over jobs workers, so output is identical for any worker count.
SweepResult run_sweep(const SweepSpec& spec, const SolverOptions& opts,
                      int jobs);

/// Applies one axis setting to a scenario copy; throws on unknown paths or
/// out-of-range values.
void apply_axis(Scenario& scn, const std::string& param, double value);

}  // namespace mage
