#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "chns/basis.hpp"
#include "chns/mesh.hpp"
#include "chns/quadrature.hpp"

namespace chns {

/// Discontinuous tensor-product polynomial space of degree r on a voxel mesh,
/// with all basis/quadrature tables precomputed on the reference cell [0,1]^dim.
///
/// Volume and face rules use (r+1) Gauss points per axis (exact to degree 2r+1);
/// `vol_boost` holds the (r+2)-point rule reserved for cubic-nonlinearity terms.
struct DGSpace {
    const VoxelMesh* mesh = nullptr;
    ModalBasis basis;
    int dim = 2;
    int degree = 1;
    int n_modes = 4;

    BasisTable vol;
    BasisTable vol_boost;
    std::array<std::array<BasisTable, 2>, 3> face;      // [axis][side]
    std::array<std::array<BasisTable, 2>, 3> face_mid;  // face midpoints
    BasisTable vertices;
    BasisTable samples;  // bound-check sample set (see sample_points)

    DGSpace() = default;

    DGSpace(const VoxelMesh& m, int r) : mesh(&m), basis(m.dim, r), dim(m.dim), degree(r) {
        n_modes = basis.n_modes;
        const auto g1 = GaussRule1D::make(r + 1);
        const auto g1b = GaussRule1D::make(r + 2);

        auto vol_rule = QuadratureRule::tensor(g1, dim);
        vol = BasisTable::at_points(basis, vol_rule.points, vol_rule.weights);
        auto boost_rule = QuadratureRule::tensor(g1b, dim);
        vol_boost = BasisTable::at_points(basis, boost_rule.points, boost_rule.weights);

        auto face_rule = QuadratureRule::tensor(g1, dim - 1);
        for (int a = 0; a < dim; ++a)
            for (int s = 0; s < 2; ++s) {
                std::vector<std::array<double, 3>> pts(face_rule.points.size());
                for (std::size_t q = 0; q < pts.size(); ++q)
                    pts[q] = embed_face_point(a, s, face_rule.points[q]);
                face[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)] =
                    BasisTable::at_points(basis, std::move(pts), face_rule.weights);
                std::array<double, 3> mid = {0.5, 0.5, 0.5};
                mid[static_cast<std::size_t>(a)] = static_cast<double>(s);
                if (dim == 2) mid[2] = 0.0;
                face_mid[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)] =
                    BasisTable::at_points(basis, {mid});
            }

        std::vector<std::array<double, 3>> verts;
        for (int v = 0; v < (1 << dim); ++v) {
            std::array<double, 3> p = {0.0, 0.0, 0.0};
            for (int a = 0; a < dim; ++a) p[static_cast<std::size_t>(a)] = (v >> a) & 1 ? 1.0 : 0.0;
            verts.push_back(p);
        }
        vertices = BasisTable::at_points(basis, verts);

        samples = BasisTable::at_points(basis, sample_points());
    }

    double h() const { return mesh->h; }
    double cell_volume() const { return mesh->cell_volume(); }
    double face_area() const { return mesh->face_area(); }
    std::size_t n_scalar_dofs() const {
        return static_cast<std::size_t>(mesh->n_elements()) * static_cast<std::size_t>(n_modes);
    }

    /// Reference coordinates of a face quadrature point inside the element whose
    /// face (axis a, side s) it lies on. Face coordinates map to the non-normal
    /// axes in increasing global order, so both sharing elements of an interior
    /// face see the same physical point at the same face-quadrature index.
    std::array<double, 3> embed_face_point(int a, int s, const std::array<double, 3>& t) const {
        std::array<double, 3> p = {0.0, 0.0, 0.0};
        int c = 0;
        for (int b = 0; b < dim; ++b) {
            if (b == a) p[static_cast<std::size_t>(b)] = static_cast<double>(s);
            else p[static_cast<std::size_t>(b)] = t[static_cast<std::size_t>(c++)];
        }
        return p;
    }

    /// Points at which the order parameter is bound-checked (and its min/max
    /// logged). Multilinear fields attain extrema at vertices, so r=1 uses the
    /// vertex set; r=2 adds every point where the scheme evaluates the field.
    std::vector<std::array<double, 3>> sample_points() const {
        std::vector<std::array<double, 3>> pts;
        for (int v = 0; v < (1 << dim); ++v) {
            std::array<double, 3> p = {0.0, 0.0, 0.0};
            for (int a = 0; a < dim; ++a) p[static_cast<std::size_t>(a)] = (v >> a) & 1 ? 1.0 : 0.0;
            pts.push_back(p);
        }
        if (degree >= 2) {
            for (const auto& p : vol.points) pts.push_back(p);
            for (const auto& p : vol_boost.points) pts.push_back(p);
            for (int a = 0; a < dim; ++a)
                for (int s = 0; s < 2; ++s) {
                    for (const auto& p : face[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)].points)
                        pts.push_back(p);
                    std::array<double, 3> mid = {0.5, 0.5, 0.5};
                    mid[static_cast<std::size_t>(a)] = static_cast<double>(s);
                    if (dim == 2) mid[2] = 0.0;
                    pts.push_back(mid);
                }
        }
        return pts;
    }
};

/// Per-element modal coefficients of a scalar or vector DG field.
/// Layout: coeffs[(element * components + component) * n_modes + mode].
/// The first mode per element/component is the cell average.
struct DGField {
    int degree = 1;
    int components = 1;
    int n_modes = 4;
    int n_elements = 0;
    std::vector<double> coeffs;

    DGField() = default;
    DGField(const DGSpace& space, int nc)
        : degree(space.degree),
          components(nc),
          n_modes(space.n_modes),
          n_elements(space.mesh->n_elements()),
          coeffs(static_cast<std::size_t>(space.mesh->n_elements()) * static_cast<std::size_t>(nc) *
                     static_cast<std::size_t>(space.n_modes),
                 0.0) {}

    double& coeff(int e, int c, int m) {
        return coeffs[(static_cast<std::size_t>(e) * static_cast<std::size_t>(components) +
                       static_cast<std::size_t>(c)) * static_cast<std::size_t>(n_modes) +
                      static_cast<std::size_t>(m)];
    }
    double coeff(int e, int c, int m) const {
        return coeffs[(static_cast<std::size_t>(e) * static_cast<std::size_t>(components) +
                       static_cast<std::size_t>(c)) * static_cast<std::size_t>(n_modes) +
                      static_cast<std::size_t>(m)];
    }
    const double* element_coeffs(int e, int c) const {
        return coeffs.data() + (static_cast<std::size_t>(e) * static_cast<std::size_t>(components) +
                                static_cast<std::size_t>(c)) * static_cast<std::size_t>(n_modes);
    }
    double* element_coeffs(int e, int c) {
        return coeffs.data() + (static_cast<std::size_t>(e) * static_cast<std::size_t>(components) +
                                static_cast<std::size_t>(c)) * static_cast<std::size_t>(n_modes);
    }
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Field value at a tabulated point (hot path; no bounds checks).
inline double eval_at(const DGField& f, int e, int c, const BasisTable& table, std::size_t pt) {
    const double* cf = f.element_coeffs(e, c);
    const double* phi = table.phi.data() + pt * static_cast<std::size_t>(table.n_modes);
    double v = 0.0;
    for (int m = 0; m < f.n_modes; ++m) v += cf[m] * phi[m];
    return v;
}

/// Physical gradient of component c at a tabulated point.
inline std::array<double, 3> eval_grad_at(const DGSpace& space, const DGField& f, int e, int c,
                                          const BasisTable& table, std::size_t pt) {
    const double* cf = f.element_coeffs(e, c);
    std::array<double, 3> g = {0.0, 0.0, 0.0};
    for (int m = 0; m < f.n_modes; ++m) {
        const auto& d = table.grad(pt, m);
        for (int a = 0; a < space.dim; ++a) g[static_cast<std::size_t>(a)] += cf[m] * d[static_cast<std::size_t>(a)];
    }
    const double inv_h = 1.0 / space.h();
    for (int a = 0; a < space.dim; ++a) g[static_cast<std::size_t>(a)] *= inv_h;
    return g;
}

/// Field value at an arbitrary reference point of an element.
inline double eval(const DGSpace& space, const DGField& f, int e,
                   const std::array<double, 3>& ref, int c = 0) {
    if (e < 0 || e >= f.n_elements) throw std::out_of_range("eval: element index out of range");
    const double* cf = f.element_coeffs(e, c);
    double v = 0.0;
    for (int m = 0; m < f.n_modes; ++m) v += cf[m] * space.basis.value(m, ref);
    return v;
}

inline double cell_average(const DGField& f, int e, int c = 0) { return f.coeff(e, c, 0); }

// ---------------------------------------------------------------------------
// L2 projection
// ---------------------------------------------------------------------------

/// Element-wise L2 projection of a pointwise function, exact for polynomials of
/// degree <= r. Uses the boosted rule so that non-polynomial scenario data is
/// projected with the extra-order accuracy the nonlinear terms already require.
inline DGField project_l2(const DGSpace& space,
                          const std::function<double(const std::array<double, 3>&)>& f) {
    DGField out(space, 1);
    const auto& tab = space.vol_boost;
    const int nm = space.n_modes;
    for (int e = 0; e < out.n_elements; ++e) {
        double* cf = out.element_coeffs(e, 0);
        for (std::size_t q = 0; q < tab.size(); ++q) {
            const double fv = f(space.mesh->map_point(e, tab.points[q])) * tab.weights[q];
            const double* phi = tab.phi.data() + q * static_cast<std::size_t>(nm);
            for (int m = 0; m < nm; ++m) cf[m] += fv * phi[m];
        }
    }
    return out;
}

inline DGField project_l2_vector(
    const DGSpace& space,
    const std::function<std::array<double, 3>(const std::array<double, 3>&)>& f) {
    DGField out(space, space.dim);
    const auto& tab = space.vol_boost;
    const int nm = space.n_modes;
    for (int e = 0; e < out.n_elements; ++e) {
        for (std::size_t q = 0; q < tab.size(); ++q) {
            const auto fv = f(space.mesh->map_point(e, tab.points[q]));
            const double* phi = tab.phi.data() + q * static_cast<std::size_t>(nm);
            for (int c = 0; c < space.dim; ++c) {
                double* cf = out.element_coeffs(e, c);
                const double s = fv[static_cast<std::size_t>(c)] * tab.weights[q];
                for (int m = 0; m < nm; ++m) cf[m] += s * phi[m];
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Face traces, averages and jumps
// ---------------------------------------------------------------------------

/// One-sided trace at a face quadrature point. side refers to the element's own
/// face: 1 if the face is on its high-coordinate side, 0 otherwise.
inline double face_trace(const DGSpace& space, const DGField& f, int e, int axis, int side,
                         std::size_t q, int c = 0) {
    return eval_at(f, e, c, space.face[static_cast<std::size_t>(axis)][static_cast<std::size_t>(side)], q);
}

/// Average {·} and jump [[·]] at quadrature point q of an interior face; the
/// jump is (minus-side trace) - (plus-side trace), matching the face normal
/// that points from the minus element into the plus element.
inline std::pair<double, double> avg_jump(const DGSpace& space, const DGField& f,
                                          const InteriorFace& face, std::size_t q, int c = 0) {
    const double vm = face_trace(space, f, face.minus, face.axis, 1, q, c);
    const double vp = face_trace(space, f, face.plus, face.axis, 0, q, c);
    return {0.5 * (vm + vp), vm - vp};
}

/// Boundary-face variant: both average and jump degenerate to the trace.
inline std::pair<double, double> avg_jump(const DGSpace& space, const DGField& f,
                                          const BoundaryFace& face, std::size_t q, int c = 0) {
    const double v = face_trace(space, f, face.element, face.axis,
                                face.orientation > 0 ? 1 : 0, q, c);
    return {v, v};
}

// ---------------------------------------------------------------------------
// Broken gradient
// ---------------------------------------------------------------------------

/// Element-wise analytic gradient. A scalar input of degree r yields a vector
/// field (dim components) in the same degree-r space; exact, no quadrature.
inline DGField broken_gradient(const DGSpace& space, const DGField& f) {
    if (f.components != 1) throw Error("broken_gradient: scalar fields only");
    DGField out(space, space.dim);
    const int p = space.degree + 1;
    const double inv_h = 1.0 / space.h();
    for (int e = 0; e < f.n_elements; ++e) {
        const double* cf = f.element_coeffs(e, 0);
        for (int a = 0; a < space.dim; ++a) {
            double* go = out.element_coeffs(e, a);
            for (int m = 0; m < space.n_modes; ++m) {
                const auto d = space.basis.mode_degrees(m);
                const int da = d[static_cast<std::size_t>(a)];
                if (da == 0) continue;
                // stride of the axis-a degree inside the mode index
                int stride = 1;
                for (int b = 0; b < a; ++b) stride *= p;
                for (int i = 0; i < da; ++i) {
                    const double w = ModalBasis::deriv_expansion(i, da);
                    if (w != 0.0) go[m - (da - i) * stride] += w * inv_h * cf[m];
                }
            }
        }
    }
    return out;
}

/// Broken divergence of a vector field (exact, stays in the degree-r space).
inline DGField divergence(const DGSpace& space, const DGField& v) {
    if (v.components != space.dim) throw Error("divergence: needs a dim-component field");
    DGField out(space, 1);
    const int p = space.degree + 1;
    const double inv_h = 1.0 / space.h();
    for (int e = 0; e < v.n_elements; ++e) {
        double* go = out.element_coeffs(e, 0);
        for (int a = 0; a < space.dim; ++a) {
            const double* cf = v.element_coeffs(e, a);
            for (int m = 0; m < space.n_modes; ++m) {
                const auto d = space.basis.mode_degrees(m);
                const int da = d[static_cast<std::size_t>(a)];
                if (da == 0) continue;
                int stride = 1;
                for (int b = 0; b < a; ++b) stride *= p;
                for (int i = 0; i < da; ++i) {
                    const double w = ModalBasis::deriv_expansion(i, da);
                    if (w != 0.0) go[m - (da - i) * stride] += w * inv_h * cf[m];
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bound sampling
// ---------------------------------------------------------------------------

/// Min/max of a scalar field over the per-element sample set.
inline std::pair<double, double> field_minmax(const DGSpace& space, const DGField& f, int c = 0) {
    double lo = 1e300, hi = -1e300;
    for (int e = 0; e < f.n_elements; ++e) {
        for (std::size_t p = 0; p < space.samples.size(); ++p) {
            const double v = eval_at(f, e, c, space.samples, p);
            if (v < lo) lo = v;
            if (v > hi) hi = v;
        }
    }
    return {lo, hi};
}

} // namespace chns
