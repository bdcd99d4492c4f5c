#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "chns/csr.hpp"
#include "chns/errors.hpp"

namespace chns {

/// Banded LDL^T factorization of a symmetric positive definite CSR matrix.
/// Used as a run-long preconditioner for the constant-coefficient pressure
/// operator: factored once, applied per solve in O(n·bandwidth).
struct BandCholesky {
    int n = 0;
    int bw = 0;                 //半 bandwidth (max |i-j| over nonzeros)
    std::vector<double> low;    // low[i*(bw+1) + (i-j)], j in [i-bw, i]; unit diagonal implied
    std::vector<double> d;      // D

    /// Returns nullopt if the band storage would exceed max_bytes.
    /// diag0_shift is added to every n_modes-th diagonal entry (constant-mode
    /// regularization of singular pure-Neumann operators).
    static std::optional<BandCholesky> factor(const SparseOperator& A, int n_modes,
                                              double diag0_shift, std::size_t max_bytes) {
        BandCholesky f;
        f.n = static_cast<int>(A.n);
        int bw = 0;
        for (std::size_t r = 0; r < A.n; ++r)
            for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) {
                const int dist = static_cast<int>(r) - A.cols[k];
                if (dist > bw) bw = dist;
            }
        f.bw = bw;
        const std::size_t bytes = static_cast<std::size_t>(f.n) * (static_cast<std::size_t>(bw) + 1) * sizeof(double);
        if (bytes > max_bytes) return std::nullopt;
        f.low.assign(static_cast<std::size_t>(f.n) * (static_cast<std::size_t>(bw) + 1), 0.0);
        f.d.assign(static_cast<std::size_t>(f.n), 0.0);

        // spread the CSR lower triangle into the band (entry (i, j) at offset i-j)
        auto at = [&f](int i, int j) -> double& {
            return f.low[static_cast<std::size_t>(i) * (static_cast<std::size_t>(f.bw) + 1) +
                         static_cast<std::size_t>(i - j)];
        };
        for (std::size_t r = 0; r < A.n; ++r)
            for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) {
                const int i = static_cast<int>(r), j = A.cols[k];
                if (j <= i) at(i, j) = A.vals[k];
            }
        if (diag0_shift != 0.0)
            for (int i = 0; i < f.n; i += n_modes) at(i, i) += diag0_shift;

        // in-place banded LDL^T
        for (int i = 0; i < f.n; ++i) {
            const int lo = std::max(0, i - bw);
            for (int j = lo; j < i; ++j) {
                double sum = at(i, j);
                const int kmin = std::max(lo, j - bw < 0 ? 0 : j - bw);
                for (int k2 = kmin; k2 < j; ++k2)
                    sum -= at(i, k2) * f.d[static_cast<std::size_t>(k2)] * at(j, k2);
                at(i, j) = sum / f.d[static_cast<std::size_t>(j)];
            }
            double dd = at(i, i);
            for (int k2 = lo; k2 < i; ++k2)
                dd -= at(i, k2) * at(i, k2) * f.d[static_cast<std::size_t>(k2)];
            if (dd <= 0.0) throw Error("BandCholesky: matrix not positive definite");
            f.d[static_cast<std::size_t>(i)] = dd;
            at(i, i) = 1.0;
        }
        return f;
    }

    void solve(double* x) const {
        auto at = [this](int i, int j) {
            return low[static_cast<std::size_t>(i) * (static_cast<std::size_t>(bw) + 1) +
                       static_cast<std::size_t>(i - j)];
        };
        for (int i = 0; i < n; ++i) {
            double s = x[i];
            for (int j = std::max(0, i - bw); j < i; ++j) s -= at(i, j) * x[j];
            x[i] = s;
        }
        for (int i = 0; i < n; ++i) x[i] /= d[static_cast<std::size_t>(i)];
        for (int i = n - 1; i >= 0; --i) {
            double s = x[i];
            const int hi = std::min(n - 1, i + bw);
            for (int j = i + 1; j <= hi; ++j) s -= at(j, i) * x[j];
            x[i] = s;
        }
    }

    /// Preconditioner interface.
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        y = x;
        solve(y.data());
    }
};

} // namespace chns
