#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "chns/csr.hpp"
#include "chns/dense.hpp"
#include "chns/errors.hpp"

namespace chns {

// Fixed-order reductions keep iteration counts reproducible.
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

/// Abstract square operator; concrete types wrap CSR storage or add low-rank terms.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual std::size_t size() const = 0;
    virtual void apply(const double* x, double* y) const = 0;
    virtual std::vector<double> diagonal() const = 0;

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(size());
        apply(x.data(), y.data());
        return y;
    }
};

class CsrOperatorRef final : public LinearOperator {
public:
    explicit CsrOperatorRef(const SparseOperator& a) : a_(&a) {}
    std::size_t size() const override { return a_->n; }
    void apply(const double* x, double* y) const override { a_->apply(x, y); }
    std::vector<double> diagonal() const override { return a_->diagonal(); }

private:
    const SparseOperator* a_;
};

/// A + gamma * k k^T. Used to pin the constant mode of singular pure-Neumann
/// operators: for RHS orthogonal to k the solution satisfies A x = b, k.x = 0.
class MeanPinnedOperator final : public LinearOperator {
public:
    MeanPinnedOperator(const SparseOperator& a, std::vector<double> k, double gamma)
        : a_(&a), k_(std::move(k)), gamma_(gamma) {}
    std::size_t size() const override { return a_->n; }
    void apply(const double* x, double* y) const override {
        a_->apply(x, y);
        double kx = 0.0;
        for (std::size_t i = 0; i < k_.size(); ++i) kx += k_[i] * x[i];
        const double s = gamma_ * kx;
        for (std::size_t i = 0; i < k_.size(); ++i) y[i] += s * k_[i];
    }
    std::vector<double> diagonal() const override {
        auto d = a_->diagonal();
        for (std::size_t i = 0; i < k_.size(); ++i) d[i] += gamma_ * k_[i] * k_[i];
        return d;
    }
    const std::vector<double>& kernel_vector() const { return k_; }

private:
    const SparseOperator* a_;
    std::vector<double> k_;
    double gamma_;
};

enum class KrylovMethod { CG, BiCGStab, GMRES };

struct SolverConfig {
    KrylovMethod method = KrylovMethod::CG;
    double rtol = 1e-10;
    double atol = 1e-14;
    int max_iterations = 20000;
    int restart = 30;       // GMRES only
    bool jacobi = true;
};

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Inverse-diagonal preconditioner.
struct JacobiPreconditioner {
    std::vector<double> inv_diag;

    static JacobiPreconditioner make(const LinearOperator& op) {
        JacobiPreconditioner p;
        auto d = op.diagonal();
        p.inv_diag.resize(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i] == 0.0) throw PrecondError("jacobi_preconditioner: zero diagonal entry");
            p.inv_diag[i] = 1.0 / d[i];
        }
        return p;
    }

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = inv_diag[i] * x[i];
    }
};

struct IdentityPreconditioner {
    void apply(const std::vector<double>& x, std::vector<double>& y) const { y = x; }
};

/// Element-block Jacobi: inverts the diagonal element blocks of a DG operator,
/// gathering all `fields` copies of an element's modes into one dense block
/// (dof layout: field * n_elem * n_modes + element * n_modes + mode).
class BlockJacobiPreconditioner {
public:
    /// diag0_shift is added to the (mode 0, field 0) diagonal entry of every
    /// block; it mirrors the rank-one mean-pinning of singular Neumann solves.
    static BlockJacobiPreconditioner make(const SparseOperator& A, int fields, int n_elem,
                                          int n_modes, double diag0_shift = 0.0) {
        BlockJacobiPreconditioner p;
        p.fields_ = fields;
        p.n_elem_ = n_elem;
        p.nm_ = n_modes;
        const int nb = fields * n_modes;
        p.lus_.reserve(static_cast<std::size_t>(n_elem));
        std::vector<double> blk(static_cast<std::size_t>(nb) * nb);
        const std::size_t stride = static_cast<std::size_t>(n_elem) * static_cast<std::size_t>(n_modes);
        for (int e = 0; e < n_elem; ++e) {
            std::fill(blk.begin(), blk.end(), 0.0);
            for (int fr = 0; fr < fields; ++fr)
                for (int m = 0; m < n_modes; ++m) {
                    const std::size_t row = static_cast<std::size_t>(fr) * stride +
                                            static_cast<std::size_t>(e) * n_modes + static_cast<std::size_t>(m);
                    for (std::size_t k = A.row_ptr[row]; k < A.row_ptr[row + 1]; ++k) {
                        const std::size_t col = static_cast<std::size_t>(A.cols[k]);
                        const int fc = static_cast<int>(col / stride);
                        const std::size_t rem = col % stride;
                        const int ce = static_cast<int>(rem / static_cast<std::size_t>(n_modes));
                        if (ce != e) continue;
                        const int cm = static_cast<int>(rem % static_cast<std::size_t>(n_modes));
                        blk[static_cast<std::size_t>(fr * n_modes + m) * nb +
                            static_cast<std::size_t>(fc * n_modes + cm)] = A.vals[k];
                    }
                }
            blk[0] += diag0_shift;
            p.lus_.push_back(DenseLU::factor(blk, nb));
        }
        return p;
    }

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        const int nb = fields_ * nm_;
        const std::size_t stride = static_cast<std::size_t>(n_elem_) * static_cast<std::size_t>(nm_);
        parallel_for(static_cast<std::size_t>(n_elem_), [&](std::size_t lo, std::size_t hi) {
            std::vector<double> local(static_cast<std::size_t>(nb));
            for (std::size_t e = lo; e < hi; ++e) {
                for (int f = 0; f < fields_; ++f)
                    for (int m = 0; m < nm_; ++m)
                        local[static_cast<std::size_t>(f * nm_ + m)] =
                            x[static_cast<std::size_t>(f) * stride + e * static_cast<std::size_t>(nm_) + static_cast<std::size_t>(m)];
                lus_[e].solve(local.data());
                for (int f = 0; f < fields_; ++f)
                    for (int m = 0; m < nm_; ++m)
                        y[static_cast<std::size_t>(f) * stride + e * static_cast<std::size_t>(nm_) + static_cast<std::size_t>(m)] =
                            local[static_cast<std::size_t>(f * nm_ + m)];
            }
        });
    }

private:
    int fields_ = 1, n_elem_ = 0, nm_ = 0;
    std::vector<DenseLU> lus_;
};

namespace detail {

template <typename Precond>
SolveReport cg_impl(const LinearOperator& A, const std::vector<double>& b, const Precond& M,
                    const SolverConfig& cfg, std::vector<double>& x,
                    std::vector<double>& history) {
    const std::size_t n = A.size();
    const double bnorm = norm2(b);
    const double tol = std::max(cfg.rtol * bnorm, cfg.atol);
    std::vector<double> r(n), z(n), p(n), q(n);
    A.apply(x.data(), r.data());
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double rnorm = norm2(r);
    history.push_back(rnorm);
    SolveReport rep;
    if (rnorm <= tol) {
        rep.converged = true;
        rep.residual = rnorm;
        return rep;
    }
    M.apply(r, z);
    p = z;
    double rz = dot(r, z);
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        A.apply(p.data(), q.data());
        const double pq = dot(p, q);
        if (pq <= 0.0)
            throw SolveError("cg: operator is not positive definite (p.Ap <= 0)", history);
        const double alpha = rz / pq;
        axpy(alpha, p, x);
        axpy(-alpha, q, r);
        rnorm = norm2(r);
        history.push_back(rnorm);
        rep.iterations = it;
        if (rnorm <= tol) {
            rep.converged = true;
            rep.residual = rnorm;
            return rep;
        }
        M.apply(r, z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    rep.residual = rnorm;
    return rep;
}

template <typename Precond>
SolveReport bicgstab_impl(const LinearOperator& A, const std::vector<double>& b, const Precond& M,
                          const SolverConfig& cfg, std::vector<double>& x,
                          std::vector<double>& history) {
    const std::size_t n = A.size();
    const double bnorm = norm2(b);
    const double tol = std::max(cfg.rtol * bnorm, cfg.atol);
    std::vector<double> r(n), rhat(n), p(n, 0.0), v(n, 0.0), s(n), t(n), phat(n), shat(n);
    A.apply(x.data(), r.data());
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    rhat = r;
    double rnorm = norm2(r);
    history.push_back(rnorm);
    SolveReport rep;
    if (rnorm <= tol) {
        rep.converged = true;
        rep.residual = rnorm;
        return rep;
    }
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        const double rho1 = dot(rhat, r);
        if (rho1 == 0.0) throw SolveError("bicgstab: rho breakdown", history);
        if (it == 1) {
            p = r;
        } else {
            const double beta = (rho1 / rho) * (alpha / omega);
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        M.apply(p, phat);
        A.apply(phat.data(), v.data());
        const double rv = dot(rhat, v);
        if (rv == 0.0) throw SolveError("bicgstab: rhat.v breakdown", history);
        alpha = rho1 / rv;
        for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        double snorm = norm2(s);
        rep.iterations = it;
        if (snorm <= tol) {
            axpy(alpha, phat, x);
            history.push_back(snorm);
            rep.converged = true;
            rep.residual = snorm;
            return rep;
        }
        M.apply(s, shat);
        A.apply(shat.data(), t.data());
        const double tt = dot(t, t);
        if (tt == 0.0) throw SolveError("bicgstab: t.t breakdown", history);
        omega = dot(t, s) / tt;
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * phat[i] + omega * shat[i];
        for (std::size_t i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
        rnorm = norm2(r);
        history.push_back(rnorm);
        if (rnorm <= tol) {
            rep.converged = true;
            rep.residual = rnorm;
            return rep;
        }
        if (omega == 0.0) throw SolveError("bicgstab: omega breakdown", history);
        rho = rho1;
    }
    rep.residual = rnorm;
    return rep;
}

template <typename Precond>
SolveReport gmres_impl(const LinearOperator& A, const std::vector<double>& b, const Precond& M,
                       const SolverConfig& cfg, std::vector<double>& x,
                       std::vector<double>& history) {
    const std::size_t n = A.size();
    const int m = std::max(1, cfg.restart);
    const double bnorm = norm2(b);
    const double tol = std::max(cfg.rtol * bnorm, cfg.atol);
    std::vector<std::vector<double>> V(static_cast<std::size_t>(m) + 1, std::vector<double>(n));
    std::vector<double> H(static_cast<std::size_t>(m + 1) * static_cast<std::size_t>(m), 0.0);
    std::vector<double> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m)),
        g(static_cast<std::size_t>(m) + 1), w(n), z(n);
    SolveReport rep;
    int total_it = 0;
    // right preconditioning: solve A M^{-1} u = b, x = M^{-1} u
    while (true) {
        A.apply(x.data(), w.data());
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - w[i];
        double beta = norm2(r);
        if (total_it == 0) history.push_back(beta);
        if (beta <= tol) {
            rep.converged = true;
            rep.residual = beta;
            rep.iterations = total_it;
            return rep;
        }
        if (total_it >= cfg.max_iterations) {
            rep.residual = beta;
            rep.iterations = total_it;
            return rep;
        }
        for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        int j = 0;
        for (; j < m && total_it < cfg.max_iterations; ++j, ++total_it) {
            M.apply(V[static_cast<std::size_t>(j)], z);
            A.apply(z.data(), w.data());
            for (int i = 0; i <= j; ++i) {
                double hij = dot(w, V[static_cast<std::size_t>(i)]);
                H[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] = hij;
                axpy(-hij, V[static_cast<std::size_t>(i)], w);
            }
            double hnext = norm2(w);
            if (hnext > 0.0)
                for (std::size_t i = 0; i < n; ++i) V[static_cast<std::size_t>(j) + 1][i] = w[i] / hnext;
            // apply accumulated Givens rotations to the new column
            double hj = H[static_cast<std::size_t>(j)];
            for (int i = 0; i < j; ++i) {
                const double hi = H[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)];
                const double hi1 = H[(static_cast<std::size_t>(i) + 1) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)];
                H[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] = cs[static_cast<std::size_t>(i)] * hi + sn[static_cast<std::size_t>(i)] * hi1;
                H[(static_cast<std::size_t>(i) + 1) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] = -sn[static_cast<std::size_t>(i)] * hi + cs[static_cast<std::size_t>(i)] * hi1;
            }
            hj = H[static_cast<std::size_t>(j) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)];
            const double denom = std::sqrt(hj * hj + hnext * hnext);
            if (denom == 0.0) throw SolveError("gmres: breakdown (zero Hessenberg column)", history);
            cs[static_cast<std::size_t>(j)] = hj / denom;
            sn[static_cast<std::size_t>(j)] = hnext / denom;
            H[static_cast<std::size_t>(j) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] = denom;
            g[static_cast<std::size_t>(j) + 1] = -sn[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(j)];
            g[static_cast<std::size_t>(j)] = cs[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(j)];
            const double res_est = std::abs(g[static_cast<std::size_t>(j) + 1]);
            history.push_back(res_est);
            if (res_est <= tol) {
                ++j;
                ++total_it;
                break;
            }
        }
        // back substitution for the Krylov coefficients
        std::vector<double> y(static_cast<std::size_t>(j), 0.0);
        for (int i = j - 1; i >= 0; --i) {
            double s = g[static_cast<std::size_t>(i)];
            for (int k2 = i + 1; k2 < j; ++k2)
                s -= H[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(k2)] * y[static_cast<std::size_t>(k2)];
            y[static_cast<std::size_t>(i)] = s / H[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)];
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (int i = 0; i < j; ++i) axpy(y[static_cast<std::size_t>(i)], V[static_cast<std::size_t>(i)], w);
        M.apply(w, z);
        axpy(1.0, z, x);
    }
}

} // namespace detail

/// Solves A x = b so that ||b - A x|| <= max(rtol*||b||, atol).
/// Throws SolveError (with residual history) on breakdown or exhausted budget.
inline SolveReport solve(const LinearOperator& A, const std::vector<double>& b,
                         const SolverConfig& cfg, std::vector<double>& x) {
    if (b.size() != A.size() || x.size() != A.size())
        throw Error("solve: dimension mismatch");
    std::vector<double> history;
    SolveReport rep;
    auto run = [&](auto& M) {
        switch (cfg.method) {
            case KrylovMethod::CG: return detail::cg_impl(A, b, M, cfg, x, history);
            case KrylovMethod::BiCGStab: return detail::bicgstab_impl(A, b, M, cfg, x, history);
            case KrylovMethod::GMRES: return detail::gmres_impl(A, b, M, cfg, x, history);
        }
        throw Error("solve: unknown method");
    };
    if (cfg.jacobi) {
        auto M = JacobiPreconditioner::make(A);
        rep = run(M);
    } else {
        IdentityPreconditioner M;
        rep = run(M);
    }
    if (!rep.converged)
        throw SolveError("solve: max iterations reached, residual " + std::to_string(rep.residual),
                         history);
    return rep;
}

inline SolveReport solve(const SparseOperator& A, const std::vector<double>& b,
                         const SolverConfig& cfg, std::vector<double>& x) {
    CsrOperatorRef ref(A);
    return solve(ref, b, cfg, x);
}

/// Variant with a caller-supplied preconditioner (anything with
/// apply(const vector&, vector&)).
template <typename Precond>
SolveReport solve_preconditioned(const LinearOperator& A, const std::vector<double>& b,
                                 const SolverConfig& cfg, std::vector<double>& x,
                                 const Precond& M) {
    if (b.size() != A.size() || x.size() != A.size())
        throw Error("solve_preconditioned: dimension mismatch");
    std::vector<double> history;
    SolveReport rep;
    switch (cfg.method) {
        case KrylovMethod::CG: rep = detail::cg_impl(A, b, M, cfg, x, history); break;
        case KrylovMethod::BiCGStab: rep = detail::bicgstab_impl(A, b, M, cfg, x, history); break;
        case KrylovMethod::GMRES: rep = detail::gmres_impl(A, b, M, cfg, x, history); break;
    }
    if (!rep.converged)
        throw SolveError("solve_preconditioned: max iterations reached, residual " +
                             std::to_string(rep.residual),
                         history);
    return rep;
}

} // namespace chns
