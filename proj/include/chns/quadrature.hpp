#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "chns/errors.hpp"

namespace chns {

/// 1D Gauss-Legendre rule on the reference interval [0,1].
/// n points integrate polynomials of degree <= 2n-1 exactly.
struct GaussRule1D {
    std::vector<double> points;
    std::vector<double> weights;

    static GaussRule1D make(int n) {
        // Nodes/weights on [-1,1], mapped to [0,1].
        static const std::array<std::vector<double>, 7> nodes = {{
            {},
            {0.0},
            {-0.5773502691896257645, 0.5773502691896257645},
            {-0.7745966692414833770, 0.0, 0.7745966692414833770},
            {-0.8611363115940525752, -0.3399810435848562648,
             0.3399810435848562648, 0.8611363115940525752},
            {-0.9061798459386639928, -0.5384693101056830910, 0.0,
             0.5384693101056830910, 0.9061798459386639928},
            {-0.9324695142031520278, -0.6612093864662645137, -0.2386191860831969086,
             0.2386191860831969086, 0.6612093864662645137, 0.9324695142031520278},
        }};
        static const std::array<std::vector<double>, 7> wts = {{
            {},
            {2.0},
            {1.0, 1.0},
            {0.5555555555555555556, 0.8888888888888888889, 0.5555555555555555556},
            {0.3478548451374538574, 0.6521451548625461426,
             0.6521451548625461426, 0.3478548451374538574},
            {0.2369268850561890875, 0.4786286704993664680, 0.5688888888888888889,
             0.4786286704993664680, 0.2369268850561890875},
            {0.1713244923791703450, 0.3607615730481386076, 0.4679139345726910474,
             0.4679139345726910474, 0.3607615730481386076, 0.1713244923791703450},
        }};
        if (n < 1 || n > 6) throw Error("GaussRule1D: supported point counts are 1..6");
        GaussRule1D r;
        r.points.resize(static_cast<std::size_t>(n));
        r.weights.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            r.points[static_cast<std::size_t>(i)] = 0.5 * (nodes[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)] + 1.0);
            r.weights[static_cast<std::size_t>(i)] = 0.5 * wts[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)];
        }
        return r;
    }
};

/// Tensor-product rule on the reference cell [0,1]^dim (or a face, dim-1 axes).
/// Weights sum to the reference measure 1.
struct QuadratureRule {
    int dim = 0;                          // number of tensor axes (0 allowed: single point, weight 1)
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;

    static QuadratureRule tensor(const GaussRule1D& rule1d, int dim) {
        QuadratureRule q;
        q.dim = dim;
        const std::size_t n1 = rule1d.points.size();
        std::size_t total = 1;
        for (int a = 0; a < dim; ++a) total *= n1;
        q.points.resize(total);
        q.weights.resize(total);
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t rem = idx;
            double w = 1.0;
            std::array<double, 3> p = {0.0, 0.0, 0.0};
            for (int a = 0; a < dim; ++a) {
                const std::size_t i = rem % n1;
                rem /= n1;
                p[static_cast<std::size_t>(a)] = rule1d.points[i];
                w *= rule1d.weights[i];
            }
            q.points[idx] = p;
            q.weights[idx] = w;
        }
        return q;
    }
};

} // namespace chns
