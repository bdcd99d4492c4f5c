#pragma once

#include <functional>
#include <string>
#include <vector>

#include "chns/csr.hpp"
#include "chns/errors.hpp"
#include "chns/solvers.hpp"

namespace chns {

struct NewtonConfig {
    double tol = 1e-9;       // absolute tolerance on ||residual||_2
    int max_iterations = 30;
    double forcing = 1e-4;   // inexact-Newton linear rtol per iteration
    // Eisenstat-Walker style schedule: eta_k ~ (r_k/r_{k-1})^2, never solving
    // tighter than the Newton tolerance requires. Off by default (constant
    // forcing); large runs enable it through the config.
    bool adaptive_forcing = false;
};

struct NewtonReport {
    int iterations = 0;
    std::vector<double> residual_norms;
    bool converged = false;
};

/// Newton iteration on R(x) = 0 with a caller-supplied inner linear solver
/// `linear_solve(J, rhs, dx, rtol)` for the inexact updates J dx = -R.
/// Throws NewtonError (carrying the norm history) if the tolerance is not met.
template <typename LinearSolve>
NewtonReport newton_solve_with(
    const std::function<std::vector<double>(const std::vector<double>&)>& residual,
    const std::function<const SparseOperator&(const std::vector<double>&)>& jacobian,
    std::vector<double>& x, const NewtonConfig& ncfg, LinearSolve&& linear_solve) {
    NewtonReport rep;
    std::vector<double> r = residual(x);
    double rnorm = norm2(r);
    rep.residual_norms.push_back(rnorm);
    double prev_norm = rnorm;
    for (int it = 0; it < ncfg.max_iterations; ++it) {
        if (rnorm <= ncfg.tol) {
            rep.converged = true;
            return rep;
        }
        double eta = ncfg.forcing;
        if (ncfg.adaptive_forcing) {
            if (it == 0) {
                eta = 1e-2;  // first update is quadratic-error-limited anyway
            } else {
                const double q = rnorm / prev_norm;
                eta = std::clamp(0.9 * q * q, 1e-6, 1e-2);
            }
        }
        if (ncfg.adaptive_forcing)
            eta = std::min(0.99, std::max(eta, 0.5 * ncfg.tol / rnorm));  // no oversolving
        const SparseOperator& J = jacobian(x);
        std::vector<double> rhs(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) rhs[i] = -r[i];
        std::vector<double> dx(x.size(), 0.0);
        try {
            linear_solve(J, rhs, dx, eta);
        } catch (const SolveError& e) {
            throw NewtonError(std::string("newton_solve: linear solve failed (") + e.what() + ")",
                              rep.residual_norms);
        }
        prev_norm = rnorm;
        axpy(1.0, dx, x);
        r = residual(x);
        rnorm = norm2(r);
        rep.residual_norms.push_back(rnorm);
        rep.iterations = it + 1;
    }
    if (rnorm <= ncfg.tol) {
        rep.converged = true;
        return rep;
    }
    throw NewtonError("newton_solve: no convergence after " +
                          std::to_string(ncfg.max_iterations) + " iterations, residual " +
                          std::to_string(rnorm),
                      rep.residual_norms);
}

/// Standard driver: inexact updates via `lcfg`'s Krylov method at rtol = forcing.
inline NewtonReport newton_solve(
    const std::function<std::vector<double>(const std::vector<double>&)>& residual,
    const std::function<const SparseOperator&(const std::vector<double>&)>& jacobian,
    std::vector<double>& x, const NewtonConfig& ncfg, SolverConfig lcfg) {
    return newton_solve_with(residual, jacobian, x, ncfg,
                             [&lcfg](const SparseOperator& J, const std::vector<double>& rhs,
                                     std::vector<double>& dx, double rtol) {
                                 lcfg.rtol = rtol;
                                 solve(J, rhs, lcfg, dx);
                             });
}

} // namespace chns
