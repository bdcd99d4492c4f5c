#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "chns/errors.hpp"
#include "chns/quadrature.hpp"

namespace chns {

// Legendre-type polynomials orthonormal on the reference interval [0,1]:
//   ∫_0^1 P_i P_j = δ_ij,  P_0 = 1,  P_1 = √3(2x-1),  P_2 = √5(6x²-6x+1).
inline double legendre01(int k, double x) {
    switch (k) {
        case 0: return 1.0;
        case 1: return 1.7320508075688772935 * (2.0 * x - 1.0);
        case 2: return 2.2360679774997896964 * (6.0 * x * x - 6.0 * x + 1.0);
        default: throw Error("legendre01: degree out of range");
    }
}

inline double legendre01_deriv(int k, double x) {
    switch (k) {
        case 0: return 0.0;
        case 1: return 2.0 * 1.7320508075688772935;
        case 2: return 2.2360679774997896964 * (12.0 * x - 6.0);
        default: throw Error("legendre01_deriv: degree out of range");
    }
}

/// Tensor-product modal basis of degree r on [0,1]^dim. Mode m decomposes into
/// per-axis degrees with the x-degree varying fastest. The first mode is the
/// constant 1, so on the uniform mesh the first modal coefficient of a field
/// equals its cell average (unit proportionality constant).
struct ModalBasis {
    int dim = 2;
    int degree = 1;
    int n_modes = 4;

    ModalBasis() = default;
    ModalBasis(int dim_, int degree_) : dim(dim_), degree(degree_) {
        if (dim != 2 && dim != 3) throw Error("ModalBasis: dim must be 2 or 3");
        if (degree != 1 && degree != 2) throw Error("ModalBasis: degree must be 1 or 2");
        n_modes = 1;
        for (int a = 0; a < dim; ++a) n_modes *= degree + 1;
    }

    std::array<int, 3> mode_degrees(int m) const {
        std::array<int, 3> d = {0, 0, 0};
        const int p = degree + 1;
        d[0] = m % p;
        d[1] = (m / p) % p;
        if (dim == 3) d[2] = m / (p * p);
        return d;
    }

    double value(int m, const std::array<double, 3>& x) const {
        const auto d = mode_degrees(m);
        double v = 1.0;
        for (int a = 0; a < dim; ++a)
            v *= legendre01(d[static_cast<std::size_t>(a)], x[static_cast<std::size_t>(a)]);
        return v;
    }

    /// Reference-cell gradient; physical gradient is this divided by h.
    std::array<double, 3> gradient(int m, const std::array<double, 3>& x) const {
        const auto d = mode_degrees(m);
        std::array<double, 3> g = {0.0, 0.0, 0.0};
        for (int a = 0; a < dim; ++a) {
            double v = 1.0;
            for (int b = 0; b < dim; ++b) {
                const int db = d[static_cast<std::size_t>(b)];
                const double xb = x[static_cast<std::size_t>(b)];
                v *= (a == b) ? legendre01_deriv(db, xb) : legendre01(db, xb);
            }
            g[static_cast<std::size_t>(a)] = v;
        }
        return g;
    }

    /// 1D derivative expansion dP_j/dx = Σ_i D[i][j] P_i (reference interval).
    static double deriv_expansion(int i, int j) {
        if (i == 0 && j == 1) return 2.0 * 1.7320508075688772935; // 2√3
        if (i == 1 && j == 2) return 2.0 * 3.8729833462074168852; // 2√15
        return 0.0;
    }
};

/// Basis values/gradients tabulated at a set of reference points.
struct BasisTable {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;            // empty for non-quadrature tables
    std::vector<double> phi;                // [pt * n_modes + m]
    std::vector<std::array<double, 3>> dphi; // reference gradients, same layout
    int n_modes = 0;

    double value(std::size_t pt, int m) const { return phi[pt * static_cast<std::size_t>(n_modes) + static_cast<std::size_t>(m)]; }
    const std::array<double, 3>& grad(std::size_t pt, int m) const {
        return dphi[pt * static_cast<std::size_t>(n_modes) + static_cast<std::size_t>(m)];
    }
    std::size_t size() const { return points.size(); }

    static BasisTable at_points(const ModalBasis& basis,
                                std::vector<std::array<double, 3>> pts,
                                std::vector<double> wts = {}) {
        BasisTable t;
        t.points = std::move(pts);
        t.weights = std::move(wts);
        t.n_modes = basis.n_modes;
        t.phi.resize(t.points.size() * static_cast<std::size_t>(basis.n_modes));
        t.dphi.resize(t.phi.size());
        for (std::size_t q = 0; q < t.points.size(); ++q)
            for (int m = 0; m < basis.n_modes; ++m) {
                t.phi[q * static_cast<std::size_t>(basis.n_modes) + static_cast<std::size_t>(m)] = basis.value(m, t.points[q]);
                t.dphi[q * static_cast<std::size_t>(basis.n_modes) + static_cast<std::size_t>(m)] = basis.gradient(m, t.points[q]);
            }
        return t;
    }
};

} // namespace chns
