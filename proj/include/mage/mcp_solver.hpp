#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace mage {

/// Box-constrained mixed complementarity problem:
/// find lo <= x <= hi with mid(lo, hi, x - F(x)) = x.
struct BoxMcp {
    int n = 0;
    Eigen::VectorXd lo, hi;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
    /// Optional; when absent the solver falls back to central differences.
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

enum class NcpForm { MinMap, FischerBurmeister };

struct SolverOptions {
    double tol = 1e-6;           // infinity norm of the min-map residual
    int max_iters = 300;
    double armijo_slope = 1e-4;  // sigma in the sufficient-decrease test
    double backtrack = 0.5;
    int max_backtracks = 40;
    double lm_damping = 1e-10;   // initial Levenberg shift on bad systems
    std::vector<double> tau_schedule;  // nonincreasing, last entry 0
    int restarts = 3;            // total starts including the first
    unsigned seed = 0;
    NcpForm form = NcpForm::MinMap;
    double time_limit_seconds = 0.0;  // 0 disables the wall-clock budget
};

struct IterRecord {
    int iter = 0;
    double residual = 0.0;
    double step = 0.0;
    double damping = 0.0;
    double tau = 0.0;
};

struct SolveTrace {
    std::vector<IterRecord> iterations;
    bool converged = false;
    std::string termination;
    double final_residual = 0.0;
    double wall_seconds = 0.0;
    int starts_used = 1;
    std::string to_csv() const;
};

/// Phi(x) = x - mid(lo, hi, x - F(x)); zero exactly at box-VI solutions.
/// Throws on NaN in F, naming the offending index.
Eigen::VectorXd minmap_residual(const BoxMcp& p, const Eigen::VectorXd& x);

/// Damped semismooth Newton with Armijo backtracking and seeded multistart.
std::pair<Eigen::VectorXd, SolveTrace> solve(const BoxMcp& p,
                                             const SolverOptions& opts,
                                             const Eigen::VectorXd& x0);

/// Continuation over opts.tau_schedule; family(tau) must yield the
/// tau-regularized problem, family(0) the original one.
std::pair<Eigen::VectorXd, SolveTrace> solve_homotopy(
    const std::function<BoxMcp(double)>& family, const SolverOptions& opts,
    const Eigen::VectorXd& x0);

}  // namespace mage
