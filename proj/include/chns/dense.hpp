#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "chns/errors.hpp"

namespace chns {

/// Dense LU with partial pivoting for the small per-element systems.
struct DenseLU {
    int n = 0;
    std::vector<double> lu;   // row-major
    std::vector<int> piv;

    static DenseLU factor(std::vector<double> a, int n) {
        DenseLU f;
        f.n = n;
        f.lu = std::move(a);
        f.piv.resize(static_cast<std::size_t>(n));
        auto& m = f.lu;
        for (int k = 0; k < n; ++k) {
            int p = k;
            double best = std::abs(m[static_cast<std::size_t>(k) * n + k]);
            for (int i = k + 1; i < n; ++i) {
                const double v = std::abs(m[static_cast<std::size_t>(i) * n + k]);
                if (v > best) {
                    best = v;
                    p = i;
                }
            }
            if (best == 0.0) throw Error("DenseLU: singular matrix");
            f.piv[static_cast<std::size_t>(k)] = p;
            if (p != k)
                for (int j = 0; j < n; ++j)
                    std::swap(m[static_cast<std::size_t>(k) * n + j], m[static_cast<std::size_t>(p) * n + j]);
            const double inv = 1.0 / m[static_cast<std::size_t>(k) * n + k];
            for (int i = k + 1; i < n; ++i) {
                const double l = m[static_cast<std::size_t>(i) * n + k] * inv;
                m[static_cast<std::size_t>(i) * n + k] = l;
                for (int j = k + 1; j < n; ++j)
                    m[static_cast<std::size_t>(i) * n + j] -= l * m[static_cast<std::size_t>(k) * n + j];
            }
        }
        return f;
    }

    void solve(double* x) const {
        for (int k = 0; k < n; ++k) {
            const int p = piv[static_cast<std::size_t>(k)];
            if (p != k) std::swap(x[k], x[p]);
            for (int i = k + 1; i < n; ++i) x[i] -= lu[static_cast<std::size_t>(i) * n + k] * x[k];
        }
        for (int i = n - 1; i >= 0; --i) {
            for (int j = i + 1; j < n; ++j) x[i] -= lu[static_cast<std::size_t>(i) * n + j] * x[j];
            x[i] /= lu[static_cast<std::size_t>(i) * n + i];
        }
    }
};

} // namespace chns
