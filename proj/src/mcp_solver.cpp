#include "mage/mcp_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mage {

namespace {

double mid(double lo, double hi, double v) {
    return std::min(hi, std::max(lo, v));
}

Eigen::VectorXd clamp_box(const BoxMcp& p, Eigen::VectorXd x) {
    for (int i = 0; i < p.n; ++i) x[i] = mid(p.lo[i], p.hi[i], x[i]);
    return x;
}

double fb(double a, double b) { return std::sqrt(a * a + b * b) - a - b; }

/// Two-sided Fischer-Burmeister composition; reduces to the classic form
/// when hi is infinite.
Eigen::VectorXd fb_residual(const BoxMcp& p, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& F) {
    Eigen::VectorXd out(p.n);
    for (int i = 0; i < p.n; ++i) {
        double inner = std::isinf(p.hi[i])
                           ? F[i]
                           : -fb(p.hi[i] - x[i], -F[i]);
        out[i] = fb(x[i] - p.lo[i], inner);
    }
    return out;
}

Eigen::MatrixXd fd_jacobian(const BoxMcp& p, const Eigen::VectorXd& x) {
    Eigen::MatrixXd J(p.n, p.n);
    Eigen::VectorXd xp = x;
    for (int c = 0; c < p.n; ++c) {
        double h = 1e-7 * (1.0 + std::abs(x[c]));
        xp[c] = x[c] + h;
        Eigen::VectorXd Fp = p.residual(xp);
        xp[c] = x[c] - h;
        Eigen::VectorXd Fm = p.residual(xp);
        xp[c] = x[c];
        J.col(c) = (Fp - Fm) / (2.0 * h);
    }
    return J;
}

struct Attempt {
    Eigen::VectorXd x;
    bool converged = false;
    double residual = 0.0;
    std::string reason;
};

using Clock = std::chrono::steady_clock;

Attempt newton_run(const BoxMcp& p, const SolverOptions& opts,
                   Eigen::VectorXd x, SolveTrace& trace, double tau_label,
                   Clock::time_point deadline) {
    auto jac = [&](const Eigen::VectorXd& xx) {
        return p.jacobian ? p.jacobian(xx) : fd_jacobian(p, xx);
    };

    Attempt a;
    Eigen::VectorXd F = p.residual(x);
    Eigen::VectorXd Phi = minmap_residual(p, x);
    double merit = 0.5 * Phi.squaredNorm();

    for (int it = 0; it < opts.max_iters; ++it) {
        double rn = Phi.lpNorm<Eigen::Infinity>();
        if (it > 0 && Clock::now() >= deadline) {
            a.x = x;
            a.converged = false;
            a.residual = rn;
            a.reason = "time limit";
            return a;
        }
        if (rn <= opts.tol) {
            // independent re-verification
            double check = minmap_residual(p, x).lpNorm<Eigen::Infinity>();
            a.x = x;
            a.converged = check <= opts.tol;
            a.residual = check;
            a.reason = a.converged ? "converged" : "verification failed";
            trace.iterations.push_back({it, check, 0.0, 0.0, tau_label});
            return a;
        }

        // active-set selection for the B-subdifferential element:
        // F-branch where x - F lies inside the clamp (ties toward F)
        Eigen::VectorXd y = x - F;
        std::vector<int> free_idx, bound_idx;
        for (int i = 0; i < p.n; ++i) {
            if (y[i] >= p.lo[i] && y[i] <= p.hi[i])
                free_idx.push_back(i);
            else
                bound_idx.push_back(i);
        }

        Eigen::VectorXd d = Eigen::VectorXd::Zero(p.n);
        for (int i : bound_idx) d[i] = -Phi[i];

        Eigen::MatrixXd J = jac(x);
        int nf = static_cast<int>(free_idx.size());

        // gradient of the merit along the chosen subdifferential element
        Eigen::MatrixXd JB = Eigen::MatrixXd::Zero(p.n, p.n);
        for (int i : bound_idx) JB(i, i) = 1.0;
        for (int i : free_idx) JB.row(i) = J.row(i);
        Eigen::VectorXd grad = JB.transpose() * Phi;

        double damping_used = 0.0;
        bool have_dir = false;
        if (nf > 0) {
            Eigen::MatrixXd Jff(nf, nf);
            Eigen::VectorXd rhs(nf);
            for (int r = 0; r < nf; ++r) {
                double carry = 0.0;
                for (int i : bound_idx) carry += J(free_idx[r], i) * d[i];
                rhs[r] = -Phi[free_idx[r]] - carry;
                for (int c = 0; c < nf; ++c)
                    Jff(r, c) = J(free_idx[r], free_idx[c]);
            }
            double scale = std::max(1.0, Jff.cwiseAbs().maxCoeff());
            double dir_cap = 1e4 * (1.0 + x.lpNorm<Eigen::Infinity>());
            auto try_dir = [&](const Eigen::VectorXd& ds, double lm) {
                if (!ds.allFinite()) return false;
                Eigen::VectorXd cand = d;
                for (int r = 0; r < nf; ++r) cand[free_idx[r]] = ds[r];
                if (cand.lpNorm<Eigen::Infinity>() > dir_cap) return false;
                if (cand.dot(grad) >= 0.0) return false;
                d = cand;
                damping_used = lm;
                have_dir = true;
                return true;
            };
            // plain LU first (cheap; its direction is the Newton step when
            // the block is nonsingular), then rank-revealing least squares,
            // then escalating Levenberg shifts
            {
                Eigen::PartialPivLU<Eigen::MatrixXd> lu(Jff);
                try_dir(lu.solve(rhs), 0.0);
            }
            if (!have_dir) {
                Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(
                    Jff);
                try_dir(cod.solve(rhs), 0.0);
            }
            if (!have_dir) {
                double lm = std::max(opts.lm_damping, 1e-10) * scale;
                for (int attempt = 0; attempt < 8 && !have_dir; ++attempt) {
                    Eigen::MatrixXd A =
                        Jff + lm * Eigen::MatrixXd::Identity(nf, nf);
                    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
                    if (try_dir(lu.solve(rhs), lm)) break;
                    lm *= 100.0;
                }
            }
        } else if (d.dot(grad) < 0.0) {
            have_dir = true;
        }

        if (!have_dir) {
            d = -grad;  // fallback steepest descent on the merit
            damping_used = -1.0;
        }

        // Armijo backtracking on merit with clamping into the box
        double alpha = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new, Phi_new;
        double merit_new = 0.0;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            x_new = clamp_box(p, x + alpha * d);
            Phi_new = minmap_residual(p, x_new);
            merit_new = 0.5 * Phi_new.squaredNorm();
            if (merit_new <=
                merit - opts.armijo_slope * alpha * Phi.squaredNorm()) {
                accepted = true;
                break;
            }
            alpha *= opts.backtrack;
        }
        if (!accepted) {
            a.x = x;
            a.converged = false;
            a.residual = rn;
            a.reason = "line search failed";
            return a;
        }

        x = x_new;
        Phi = Phi_new;
        merit = merit_new;
        F = p.residual(x);
        trace.iterations.push_back(
            {it, Phi.lpNorm<Eigen::Infinity>(), alpha, damping_used, tau_label});
    }

    a.x = x;
    a.converged = false;
    a.residual = Phi.lpNorm<Eigen::Infinity>();
    a.reason = "max iterations";
    return a;
}

}  // namespace

Eigen::VectorXd minmap_residual(const BoxMcp& p, const Eigen::VectorXd& x) {
    Eigen::VectorXd F = p.residual(x);
    for (int i = 0; i < p.n; ++i)
        if (std::isnan(F[i]))
            throw std::runtime_error("residual returned NaN at index " +
                                     std::to_string(i));
    Eigen::VectorXd Phi(p.n);
    for (int i = 0; i < p.n; ++i)
        Phi[i] = x[i] - mid(p.lo[i], p.hi[i], x[i] - F[i]);
    return Phi;
}

std::string SolveTrace::to_csv() const {
    std::ostringstream out;
    out << "iteration,residual,step,damping,tau\n";
    for (const IterRecord& r : iterations)
        out << r.iter << ',' << r.residual << ',' << r.step << ',' << r.damping
            << ',' << r.tau << '\n';
    return out.str();
}

std::pair<Eigen::VectorXd, SolveTrace> solve(const BoxMcp& p,
                                             const SolverOptions& opts,
                                             const Eigen::VectorXd& x0) {
    auto t_start = std::chrono::steady_clock::now();
    SolveTrace trace;

    // FB mode: solve the Fischer-Burmeister system as plain equations (an
    // unbounded box makes the min-map machinery reduce to G(x) = 0), then
    // re-certify against the true min-map residual of the original problem.
    BoxMcp prob = p;
    if (opts.form == NcpForm::FischerBurmeister) {
        prob.lo = Eigen::VectorXd::Constant(
            p.n, -std::numeric_limits<double>::infinity());
        prob.hi = Eigen::VectorXd::Constant(
            p.n, std::numeric_limits<double>::infinity());
        prob.residual = [&p](const Eigen::VectorXd& x) {
            // evaluate F at the projected point so residuals defined only
            // on the box (flows, times) stay valid during line searches
            return fb_residual(p, x, p.residual(clamp_box(p, x)));
        };
        prob.jacobian = nullptr;  // generalized derivative via differences
    }

    Eigen::VectorXd x_start = clamp_box(p, x0);
    std::mt19937 rng(opts.seed);
    Attempt best;
    best.residual = std::numeric_limits<double>::infinity();

    Clock::time_point deadline =
        opts.time_limit_seconds > 0.0
            ? t_start + std::chrono::duration_cast<Clock::duration>(
                            std::chrono::duration<double>(
                                opts.time_limit_seconds))
            : Clock::time_point::max();

    // proximal continuation: solve F + tau*(x - anchor) with the anchor
    // re-centered on every inner solution, so the bias vanishes as the
    // proximal iteration settles; rescues starts where plain Newton stalls
    auto proximal_rescue = [&](const BoxMcp& base, Eigen::VectorXd anchor,
                               SolveTrace& tr) {
        Attempt out;
        out.residual = std::numeric_limits<double>::infinity();
        out.x = anchor;
        out.reason = "proximal continuation failed";
        double tau = 1.0;
        Eigen::VectorXd xcur = anchor;
        for (int round = 0; round < 120; ++round) {
            if (Clock::now() >= deadline) {
                out.reason = "time limit";
                return out;
            }
            BoxMcp reg = base;
            reg.residual = [&base, tau, anchor](const Eigen::VectorXd& x) {
                return (base.residual(x) + tau * (x - anchor)).eval();
            };
            if (base.jacobian)
                reg.jacobian = [&base, tau](const Eigen::VectorXd& x) {
                    Eigen::MatrixXd J = base.jacobian(x);
                    J.diagonal().array() += tau;
                    return J;
                };
            else
                reg.jacobian = nullptr;
            SolverOptions inner = opts;
            inner.max_iters = std::max(50, opts.max_iters / 4);
            Attempt a = newton_run(reg, inner, xcur, tr, tau, deadline);
            if (a.converged) {
                double true_res =
                    minmap_residual(base, a.x).lpNorm<Eigen::Infinity>();
                if (true_res <= opts.tol) {
                    out = a;
                    out.residual = true_res;
                    out.reason = "converged";
                    return out;
                }
                if (true_res < out.residual) {
                    out.x = a.x;
                    out.residual = true_res;
                }
                // keep the anchor fixed while stages succeed: the Tikhonov
                // path then biases the iteration toward the start point
                xcur = a.x;
                tau *= 0.3;
                if (tau < 1e-12) {
                    Attempt fin = newton_run(base, opts, xcur, tr, 0.0, deadline);
                    if (fin.residual < out.residual ||
                        fin.converged) out = fin;
                    return out;
                }
            } else {
                // stage failed: re-center the anchor on the best iterate so
                // the proximal term stops fighting the progress made so far
                anchor = a.x;
                xcur = a.x;
                tau *= 10.0;
                if (tau > 1e8) return out;
            }
        }
        return out;
    };

    int total = std::max(1, opts.restarts);
    for (int s = 0; s < total; ++s) {
        Eigen::VectorXd xs = x_start;
        if (s > 0) {
            std::uniform_real_distribution<double> u(-0.1, 0.1);
            for (int i = 0; i < p.n; ++i) xs[i] *= 1.0 + u(rng);
            xs = clamp_box(p, xs);
        }
        const BoxMcp& active =
            opts.form == NcpForm::FischerBurmeister ? prob : p;
        Attempt a = newton_run(active, opts, xs, trace, 0.0, deadline);
        if (!a.converged) {
            Attempt r = proximal_rescue(active, xs, trace);
            if (r.converged || r.residual < a.residual) a = r;
        }
        if (opts.form == NcpForm::FischerBurmeister) {
            // re-certify against the min-map residual of the original problem
            a.x = clamp_box(p, a.x);
            double r = minmap_residual(p, a.x).lpNorm<Eigen::Infinity>();
            a.residual = r;
            a.converged = r <= opts.tol;
        }
        trace.starts_used = s + 1;
        if (a.converged) {
            best = a;
            break;
        }
        if (a.residual < best.residual) best = a;
    }

    trace.converged = best.converged;
    trace.termination = best.reason;
    trace.final_residual = best.residual;
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    return {best.x, trace};
}

std::pair<Eigen::VectorXd, SolveTrace> solve_homotopy(
    const std::function<BoxMcp(double)>& family, const SolverOptions& opts,
    const Eigen::VectorXd& x0) {
    auto t_start = std::chrono::steady_clock::now();
    std::vector<double> schedule = opts.tau_schedule;
    if (schedule.empty()) schedule = {0.0};
    if (schedule.back() != 0.0) schedule.push_back(0.0);

    SolveTrace trace;
    Eigen::VectorXd x = x0;
    Eigen::VectorXd last_good = x0;
    bool any_good = false;

    for (double tau : schedule) {
        BoxMcp p = family(tau);
        SolverOptions stage = opts;
        stage.tau_schedule.clear();
        auto [xs, st] = solve(p, stage, x);
        for (IterRecord r : st.iterations) {
            r.tau = tau;
            trace.iterations.push_back(r);
        }
        if (!st.converged) {
            trace.converged = false;
            trace.termination = "stage tau=" + std::to_string(tau) +
                                " failed: " + st.termination;
            trace.final_residual = st.final_residual;
            trace.wall_seconds = std::chrono::duration<double>(
                                     std::chrono::steady_clock::now() - t_start)
                                     .count();
            return {any_good ? last_good : xs, trace};
        }
        x = xs;
        last_good = xs;
        any_good = true;
        trace.converged = true;
        trace.termination = "converged";
        trace.final_residual = st.final_residual;
    }
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    return {x, trace};
}

}  // namespace mage
