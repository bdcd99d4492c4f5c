#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "chns/csr.hpp"
#include "chns/errors.hpp"
#include "chns/field.hpp"

namespace chns {

/// Penalty parameters of the discrete forms. The diffusion family shares one
/// interior value; inflow/outflow boundary faces carry their own, and the
/// outflow-variant diffusion operator (pressure correction) uses diff_out on
/// all of its faces.
struct PenaltySet {
    double diff = 4.0;
    double diff_in = 4.0;
    double diff_out = 8.0;
    double ellip = 8.0;
    double ellip_in = 32.0;
    double bvel = 32.0;
};

/// Dimensionless groups and fluid data.
struct ModelParams {
    double Pe = 1.0;
    double Cn = 1.0 / 64.0;
    double Re = 1.0;
    double Ca = 0.1;
    double rho_a = 1200.0;
    double rho_b = 800.0;
    double rho_ref = 800.0;   // min(rho_a, rho_b) by default
    double theta_deg = 90.0;  // contact angle
    double delta = 1.0;       // wall-jaggedness correction scalar
    double c_inflow = 1.0;    // c_D
    /// v_D on the inflow boundary (physical coordinates).
    std::function<std::array<double, 3>(const std::array<double, 3>&)> inflow_velocity;
    /// Optional per-face delta, indexed by position in mesh.boundary_faces.
    std::vector<double> delta_per_face;

    static constexpr double c_lower = -1.0;
    static constexpr double c_upper = +1.0;

    double cos_theta() const { return std::cos(theta_deg * M_PI / 180.0); }
    double rho_of_c(double c) const { return 0.5 * (1.0 + c) * rho_a + 0.5 * (1.0 - c) * rho_b; }
};

/// Derivatives of the convex/concave split of the double-well potential.
inline double phi_prime_plus(double c) { return c * c * c; }
inline double phi_prime_minus(double c) { return -c; }

enum class DiffVariant { Interior, PlusInflow, PlusOutflow };

namespace detail {

struct FaceCtx {
    const BasisTable* tab[2];  // [side]
    double w_face;             // h^{dim-1}
    double inv_h;
    int nm = 0;
    int axis = 0;

    FaceCtx(const DGSpace& sp, int axis_)
        : w_face(sp.face_area()), inv_h(1.0 / sp.h()), nm(sp.n_modes), axis(axis_) {
        tab[0] = &sp.face[static_cast<std::size_t>(axis_)][0];
        tab[1] = &sp.face[static_cast<std::size_t>(axis_)][1];
    }
    std::size_t n_q() const { return tab[0]->size(); }
    double qw(std::size_t q) const { return tab[0]->weights[q] * w_face; }
    double phi(int side, std::size_t q, int m) const { return tab[side]->value(q, m); }
    /// n_e . grad(phi_m) for n_e = +e_axis (physical).
    double dn(int side, std::size_t q, int m) const {
        return tab[side]->grad(q, m)[static_cast<std::size_t>(axis)] * inv_h;
    }
};

class BlockScratch {
public:
    explicit BlockScratch(int nm) : nm_(static_cast<std::size_t>(nm)), v_(4 * nm_ * nm_, 0.0) {}
    double* operator()(int t, int u) { return v_.data() + (static_cast<std::size_t>(t) * 2 + static_cast<std::size_t>(u)) * nm_ * nm_; }
    void clear() { std::fill(v_.begin(), v_.end(), 0.0); }

private:
    std::size_t nm_;
    std::vector<double> v_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// a_diff: SIPG discretization of -Δ, interior faces, optionally with weakly
// enforced Dirichlet terms on the inflow or outflow boundary.
// ---------------------------------------------------------------------------
inline SparseOperator assemble_a_diff(const DGSpace& sp, double sigma, DiffVariant variant,
                                      double sigma_boundary) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    SparseOperator A = SparseOperator::from_pattern(BlockPattern::dg_scalar(mesh, nm));
    std::vector<double> blk(static_cast<std::size_t>(nm) * nm);
    const double vol = sp.cell_volume();
    const double grad_scale = vol / (sp.h() * sp.h());

    // volume term (∇ξ, ∇χ), identical on every element
    std::fill(blk.begin(), blk.end(), 0.0);
    for (std::size_t q = 0; q < sp.vol.size(); ++q) {
        const double w = sp.vol.weights[q] * grad_scale;
        for (int m = 0; m < nm; ++m)
            for (int n = 0; n < nm; ++n) {
                double g = 0.0;
                for (int a = 0; a < sp.dim; ++a)
                    g += sp.vol.grad(q, m)[static_cast<std::size_t>(a)] * sp.vol.grad(q, n)[static_cast<std::size_t>(a)];
                blk[static_cast<std::size_t>(m) * nm + n] += w * g;
            }
    }
    for (int e = 0; e < mesh.n_elements(); ++e) A.add_block(e, e, blk.data());

    // interior faces: -({∇ξ·n},[χ]) - ({∇χ·n},[ξ]) + (σ/h)([ξ],[χ])
    detail::BlockScratch fb(nm);
    const double sig_h = sigma / sp.h();
    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        fb.clear();
        const int elem[2] = {f.minus, f.plus};  // t/u index 0 = minus (side 1), 1 = plus (side 0)
        const int side[2] = {1, 0};
        const double js[2] = {+1.0, -1.0};
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            for (int t = 0; t < 2; ++t)
                for (int u = 0; u < 2; ++u) {
                    double* B = fb(t, u);
                    for (int m = 0; m < nm; ++m) {
                        const double phit = fc.phi(side[t], q, m);
                        const double dnt = fc.dn(side[t], q, m);
                        for (int n = 0; n < nm; ++n) {
                            const double phiu = fc.phi(side[u], q, n);
                            const double dnu = fc.dn(side[u], q, n);
                            B[static_cast<std::size_t>(m) * nm + n] +=
                                w * (-0.5 * dnu * js[t] * phit - 0.5 * dnt * js[u] * phiu +
                                     sig_h * js[t] * phit * js[u] * phiu);
                        }
                    }
                }
        }
        for (int t = 0; t < 2; ++t)
            for (int u = 0; u < 2; ++u) A.add_block(elem[t], elem[u], fb(t, u));
    }

    // boundary Dirichlet terms for the requested variant
    if (variant != DiffVariant::Interior) {
        const FaceTag want = variant == DiffVariant::PlusInflow ? FaceTag::Inflow : FaceTag::Outflow;
        const double sigb_h = sigma_boundary / sp.h();
        for (const auto& f : mesh.boundary_faces) {
            if (f.tag != want) continue;
            detail::FaceCtx fc(sp, f.axis);
            const int s = f.orientation > 0 ? 1 : 0;
            const double o = static_cast<double>(f.orientation);
            std::fill(blk.begin(), blk.end(), 0.0);
            for (std::size_t q = 0; q < fc.n_q(); ++q) {
                const double w = fc.qw(q);
                for (int m = 0; m < nm; ++m) {
                    const double phim = fc.phi(s, q, m);
                    const double dnm = o * fc.dn(s, q, m);
                    for (int n = 0; n < nm; ++n) {
                        const double phin = fc.phi(s, q, n);
                        const double dnn = o * fc.dn(s, q, n);
                        blk[static_cast<std::size_t>(m) * nm + n] +=
                            w * (-dnn * phim - dnm * phin + sigb_h * phin * phim);
                    }
                }
            }
            A.add_block(f.element, f.element, blk.data());
        }
    }
    return A;
}

// ---------------------------------------------------------------------------
// a_adv: upwind advection -(ξ, v·∇χ) + (ξ↑{v·n},[χ])_Γ, plus the one-sided
// upwind outflow term; the inflow advective flux lives in the Step-1 RHS.
// ---------------------------------------------------------------------------
inline void assemble_a_adv_into(SparseOperator& A, const DGSpace& sp, const DGField& u) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    A.zero();
    std::vector<double> blk(static_cast<std::size_t>(nm) * nm);
    const double vol = sp.cell_volume();
    const double inv_h = 1.0 / sp.h();

    for (int e = 0; e < mesh.n_elements(); ++e) {
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double w = sp.vol.weights[q] * vol;
            std::array<double, 3> v = {0.0, 0.0, 0.0};
            for (int a = 0; a < sp.dim; ++a) v[static_cast<std::size_t>(a)] = eval_at(u, e, a, sp.vol, q);
            for (int m = 0; m < nm; ++m) {
                double vdg = 0.0;
                for (int a = 0; a < sp.dim; ++a)
                    vdg += v[static_cast<std::size_t>(a)] * sp.vol.grad(q, m)[static_cast<std::size_t>(a)] * inv_h;
                for (int n = 0; n < nm; ++n)
                    blk[static_cast<std::size_t>(m) * nm + n] -= w * sp.vol.value(q, n) * vdg;
            }
        }
        A.add_block(e, e, blk.data());
    }

    detail::BlockScratch fb(nm);
    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        fb.clear();
        const int elem[2] = {f.minus, f.plus};
        const int side[2] = {1, 0};
        const double js[2] = {+1.0, -1.0};
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double vn = 0.5 * (eval_at(u, f.minus, f.axis, *fc.tab[1], q) +
                                     eval_at(u, f.plus, f.axis, *fc.tab[0], q));
            const int up = vn >= 0.0 ? 0 : 1;  // upwind side: minus on ties
            for (int t = 0; t < 2; ++t) {
                double* B = fb(t, up);
                for (int m = 0; m < nm; ++m) {
                    const double c = w * vn * js[t] * fc.phi(side[t], q, m);
                    for (int n = 0; n < nm; ++n)
                        B[static_cast<std::size_t>(m) * nm + n] += c * fc.phi(side[up], q, n);
                }
            }
        }
        for (int t = 0; t < 2; ++t)
            for (int u2 = 0; u2 < 2; ++u2) A.add_block(elem[t], elem[u2], fb(t, u2));
    }

    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != FaceTag::Outflow) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double vn = o * eval_at(u, f.element, f.axis, *fc.tab[s], q);
            for (int m = 0; m < nm; ++m) {
                const double c = w * vn * fc.phi(s, q, m);
                for (int n = 0; n < nm; ++n)
                    blk[static_cast<std::size_t>(m) * nm + n] += c * fc.phi(s, q, n);
            }
        }
        A.add_block(f.element, f.element, blk.data());
    }
}

inline SparseOperator assemble_a_adv(const DGSpace& sp, const DGField& u) {
    SparseOperator A = SparseOperator::from_pattern(BlockPattern::dg_scalar(*sp.mesh, sp.n_modes));
    assemble_a_adv_into(A, sp, u);
    return A;
}

// ---------------------------------------------------------------------------
// a_ellip: non-symmetric (NIPG-sign) discretization of -Δ acting on each
// velocity component, with penalties on interior and inflow faces. With
// wall_dirichlet (the default used by the stepper) the same Dirichlet terms
// also act on wall faces, realizing the no-slip wall condition; without it,
// wall velocity is unconstrained and enclosed flows can feed energy through
// the walls. Returned as the scalar-component operator.
// ---------------------------------------------------------------------------
inline SparseOperator assemble_a_ellip(const DGSpace& sp, double sigma, double sigma_in,
                                       bool wall_dirichlet = true) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    SparseOperator A = SparseOperator::from_pattern(BlockPattern::dg_scalar(mesh, nm));
    std::vector<double> blk(static_cast<std::size_t>(nm) * nm);
    const double grad_scale = sp.cell_volume() / (sp.h() * sp.h());

    std::fill(blk.begin(), blk.end(), 0.0);
    for (std::size_t q = 0; q < sp.vol.size(); ++q) {
        const double w = sp.vol.weights[q] * grad_scale;
        for (int m = 0; m < nm; ++m)
            for (int n = 0; n < nm; ++n) {
                double g = 0.0;
                for (int a = 0; a < sp.dim; ++a)
                    g += sp.vol.grad(q, m)[static_cast<std::size_t>(a)] * sp.vol.grad(q, n)[static_cast<std::size_t>(a)];
                blk[static_cast<std::size_t>(m) * nm + n] += w * g;
            }
    }
    for (int e = 0; e < mesh.n_elements(); ++e) A.add_block(e, e, blk.data());

    detail::BlockScratch fb(nm);
    const double sig_h = sigma / sp.h();
    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        fb.clear();
        const int elem[2] = {f.minus, f.plus};
        const int side[2] = {1, 0};
        const double js[2] = {+1.0, -1.0};
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            for (int t = 0; t < 2; ++t)
                for (int u = 0; u < 2; ++u) {
                    double* B = fb(t, u);
                    for (int m = 0; m < nm; ++m) {
                        const double phit = fc.phi(side[t], q, m);
                        const double dnt = fc.dn(side[t], q, m);
                        for (int n = 0; n < nm; ++n) {
                            const double phiu = fc.phi(side[u], q, n);
                            const double dnu = fc.dn(side[u], q, n);
                            B[static_cast<std::size_t>(m) * nm + n] +=
                                w * (-0.5 * dnu * js[t] * phit + 0.5 * dnt * js[u] * phiu +
                                     sig_h * js[t] * phit * js[u] * phiu);
                        }
                    }
                }
        }
        for (int t = 0; t < 2; ++t)
            for (int u = 0; u < 2; ++u) A.add_block(elem[t], elem[u], fb(t, u));
    }

    const double sigin_h = sigma_in / sp.h();
    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != FaceTag::Inflow && !(wall_dirichlet && f.tag == FaceTag::Wall)) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            for (int m = 0; m < nm; ++m) {
                const double phim = fc.phi(s, q, m);
                const double dnm = o * fc.dn(s, q, m);
                for (int n = 0; n < nm; ++n) {
                    const double phin = fc.phi(s, q, n);
                    const double dnn = o * fc.dn(s, q, n);
                    blk[static_cast<std::size_t>(m) * nm + n] +=
                        w * (-dnn * phim + dnm * phin + sigin_h * phin * phim);
                }
            }
        }
        A.add_block(f.element, f.element, blk.data());
    }
    return A;
}

// ---------------------------------------------------------------------------
// a_reac: stabilized discretization of the nonlinear reaction term
//   (v·∇(ρz), θ) + ½(∇·v, ρz·θ) - ½([v·n],{ρz·θ})_{Γ∪∂Ω_in}
//   + Σ_E (|{v}·n_E|, ((ρz)^int - (ρz)^ext)·θ)_{∂E_-}.
// Component-diagonal; returned as the scalar-component operator acting on z.
// With wall_stabilization (the stepper default) the -½([v·n],{ρz·θ}) boundary
// term also covers wall faces, cancelling the wall part of the integration-by-
// parts boundary flux; otherwise discrete wall leakage of the advecting field
// can pump kinetic energy. Outflow faces stay uncompensated (do-nothing).
// ---------------------------------------------------------------------------
inline void assemble_a_reac_into(SparseOperator& A, const DGSpace& sp, const DGField& rho,
                                 const DGField& v, bool wall_stabilization = true) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    A.zero();
    std::vector<double> blk(static_cast<std::size_t>(nm) * nm);
    const double vol = sp.cell_volume();
    const double inv_h = 1.0 / sp.h();

    for (int e = 0; e < mesh.n_elements(); ++e) {
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double w = sp.vol.weights[q] * vol;
            std::array<double, 3> vv = {0.0, 0.0, 0.0};
            double div_v = 0.0;
            for (int a = 0; a < sp.dim; ++a) {
                vv[static_cast<std::size_t>(a)] = eval_at(v, e, a, sp.vol, q);
                div_v += eval_grad_at(sp, v, e, a, sp.vol, q)[static_cast<std::size_t>(a)];
            }
            const double rr = eval_at(rho, e, 0, sp.vol, q);
            const auto gr = eval_grad_at(sp, rho, e, 0, sp.vol, q);
            double v_dot_grho = 0.0;
            for (int a = 0; a < sp.dim; ++a)
                v_dot_grho += vv[static_cast<std::size_t>(a)] * gr[static_cast<std::size_t>(a)];
            for (int m = 0; m < nm; ++m) {
                const double phim = sp.vol.value(q, m);
                for (int n = 0; n < nm; ++n) {
                    const double phin = sp.vol.value(q, n);
                    double v_dot_gphin = 0.0;
                    for (int a = 0; a < sp.dim; ++a)
                        v_dot_gphin += vv[static_cast<std::size_t>(a)] *
                                       sp.vol.grad(q, n)[static_cast<std::size_t>(a)] * inv_h;
                    // v·∇(ρ z) = (v·∇ρ) z + ρ (v·∇z), plus ½(∇·v) ρ z
                    blk[static_cast<std::size_t>(m) * nm + n] +=
                        w * phim * (v_dot_grho * phin + rr * v_dot_gphin + 0.5 * div_v * rr * phin);
                }
            }
        }
        A.add_block(e, e, blk.data());
    }

    detail::BlockScratch fb(nm);
    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        fb.clear();
        const int elem[2] = {f.minus, f.plus};
        const int side[2] = {1, 0};
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double vnM = eval_at(v, f.minus, f.axis, *fc.tab[1], q);
            const double vnP = eval_at(v, f.plus, f.axis, *fc.tab[0], q);
            const double jump_vn = vnM - vnP;       // [v·n_e]
            const double avg_vn = 0.5 * (vnM + vnP); // {v}·n_e
            const double rrM = eval_at(rho, f.minus, 0, *fc.tab[1], q);
            const double rrP = eval_at(rho, f.plus, 0, *fc.tab[0], q);
            // -½([v·n],{ρzθ}): averages couple each side with itself
            for (int t = 0; t < 2; ++t) {
                const double rr = t == 0 ? rrM : rrP;
                double* B = fb(t, t);
                for (int m = 0; m < nm; ++m) {
                    const double c = -0.25 * w * jump_vn * rr * fc.phi(side[t], q, m);
                    for (int n = 0; n < nm; ++n)
                        B[static_cast<std::size_t>(m) * nm + n] += c * fc.phi(side[t], q, n);
                }
            }
            // upwind penalty on the receiving element
            if (avg_vn < 0.0) {
                // flow enters the minus element: E = minus, ext = plus
                const double c0 = w * (-avg_vn);
                for (int m = 0; m < nm; ++m) {
                    const double phim = fc.phi(1, q, m);
                    for (int n = 0; n < nm; ++n) {
                        fb(0, 0)[static_cast<std::size_t>(m) * nm + n] += c0 * rrM * fc.phi(1, q, n) * phim;
                        fb(0, 1)[static_cast<std::size_t>(m) * nm + n] -= c0 * rrP * fc.phi(0, q, n) * phim;
                    }
                }
            } else if (avg_vn > 0.0) {
                // flow enters the plus element
                const double c0 = w * avg_vn;
                for (int m = 0; m < nm; ++m) {
                    const double phim = fc.phi(0, q, m);
                    for (int n = 0; n < nm; ++n) {
                        fb(1, 1)[static_cast<std::size_t>(m) * nm + n] += c0 * rrP * fc.phi(0, q, n) * phim;
                        fb(1, 0)[static_cast<std::size_t>(m) * nm + n] -= c0 * rrM * fc.phi(1, q, n) * phim;
                    }
                }
            }
        }
        for (int t = 0; t < 2; ++t)
            for (int u = 0; u < 2; ++u) A.add_block(elem[t], elem[u], fb(t, u));
    }

    // -½([v·n],{ρzθ}) degenerates to the one-sided trace on boundary faces;
    // the upwind penalty vanishes there (exterior trace taken equal to interior).
    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != FaceTag::Inflow && !(wall_stabilization && f.tag == FaceTag::Wall)) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double vn = o * eval_at(v, f.element, f.axis, *fc.tab[s], q);
            const double rr = eval_at(rho, f.element, 0, *fc.tab[s], q);
            for (int m = 0; m < nm; ++m) {
                const double c = -0.5 * w * vn * rr * fc.phi(s, q, m);
                for (int n = 0; n < nm; ++n)
                    blk[static_cast<std::size_t>(m) * nm + n] += c * fc.phi(s, q, n);
            }
        }
        A.add_block(f.element, f.element, blk.data());
    }
}

inline SparseOperator assemble_a_reac(const DGSpace& sp, const DGField& rho, const DGField& v,
                                      bool wall_stabilization = true) {
    SparseOperator A = SparseOperator::from_pattern(BlockPattern::dg_scalar(*sp.mesh, sp.n_modes));
    assemble_a_reac_into(A, sp, rho, v, wall_stabilization);
    return A;
}

// ---------------------------------------------------------------------------
// Mass operators
// ---------------------------------------------------------------------------

/// Scalar mass matrix, optionally weighted by a positive DG field.
inline void assemble_mass_into(SparseOperator& A, const DGSpace& sp, const DGField* weight) {
    const int nm = sp.n_modes;
    A.zero();
    std::vector<double> blk(static_cast<std::size_t>(nm) * nm);
    const double vol = sp.cell_volume();
    for (int e = 0; e < sp.mesh->n_elements(); ++e) {
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double wq = sp.vol.weights[q] * vol *
                              (weight ? eval_at(*weight, e, 0, sp.vol, q) : 1.0);
            for (int m = 0; m < nm; ++m) {
                const double phim = sp.vol.value(q, m);
                for (int n = 0; n < nm; ++n)
                    blk[static_cast<std::size_t>(m) * nm + n] += wq * phim * sp.vol.value(q, n);
            }
        }
        A.add_block(e, e, blk.data());
    }
}

inline SparseOperator assemble_mass(const DGSpace& sp, const DGField* weight = nullptr) {
    SparseOperator A = SparseOperator::from_pattern(BlockPattern::dg_scalar(*sp.mesh, sp.n_modes));
    assemble_mass_into(A, sp, weight);
    return A;
}

/// Vector-valued (u,θ) + (∇·u, ∇·θ) operator on stacked component dofs
/// (element block size dim*n_modes); element-block-diagonal.
inline SparseOperator assemble_mass_graddiv(const DGSpace& sp) {
    const int nm = sp.n_modes;
    const int nb = sp.dim * nm;
    SparseOperator A = SparseOperator::from_pattern(BlockPattern::dg_scalar(*sp.mesh, nb));
    std::vector<double> blk(static_cast<std::size_t>(nb) * nb, 0.0);
    const double vol = sp.cell_volume();
    const double gscale = vol / (sp.h() * sp.h());
    for (std::size_t q = 0; q < sp.vol.size(); ++q) {
        const double w = sp.vol.weights[q];
        for (int i = 0; i < sp.dim; ++i)
            for (int m = 0; m < nm; ++m) {
                const std::size_t row = static_cast<std::size_t>(i * nm + m);
                const double dim_ = sp.vol.grad(q, m)[static_cast<std::size_t>(i)];
                for (int j = 0; j < sp.dim; ++j)
                    for (int n = 0; n < nm; ++n) {
                        const std::size_t col = static_cast<std::size_t>(j * nm + n);
                        double val = w * gscale * dim_ * sp.vol.grad(q, n)[static_cast<std::size_t>(j)];
                        if (i == j) val += w * vol * sp.vol.value(q, m) * sp.vol.value(q, n);
                        blk[row * static_cast<std::size_t>(nb) + col] += val;
                    }
            }
    }
    for (int e = 0; e < sp.mesh->n_elements(); ++e) A.add_block(e, e, blk.data());
    return A;
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

/// b_diff: inflow Dirichlet data plus the nonlinear wettability wall term
///   -(c_D, ∇χ·n)_in + (σ_in/h)(c_D, χ)_in - (√2 δ cosθ / 2Cn)(ξ²-1, χ)_{wall∪out}.
inline std::vector<double> assemble_b_diff(const DGSpace& sp, const DGField& c_prev,
                                           const ModelParams& mp, double sigma_in) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    std::vector<double> rhs(sp.n_scalar_dofs(), 0.0);
    const double sig_h = sigma_in / sp.h();
    const double wall_coef_base = std::sqrt(2.0) * mp.cos_theta() / (2.0 * mp.Cn);
    for (std::size_t bi = 0; bi < mesh.boundary_faces.size(); ++bi) {
        const auto& f = mesh.boundary_faces[bi];
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        double* out = rhs.data() + static_cast<std::size_t>(f.element) * nm;
        if (f.tag == FaceTag::Inflow) {
            for (std::size_t q = 0; q < fc.n_q(); ++q) {
                const double w = fc.qw(q);
                for (int m = 0; m < nm; ++m)
                    out[m] += w * mp.c_inflow * (-o * fc.dn(s, q, m) + sig_h * fc.phi(s, q, m));
            }
        } else {
            const double delta = mp.delta_per_face.empty() ? mp.delta : mp.delta_per_face[bi];
            const double coef = delta * wall_coef_base;
            if (coef == 0.0) continue;
            for (std::size_t q = 0; q < fc.n_q(); ++q) {
                const double xi = eval_at(c_prev, f.element, 0, *fc.tab[s], q);
                const double w = fc.qw(q) * (-coef) * (xi * xi - 1.0);
                for (int m = 0; m < nm; ++m) out[m] += w * fc.phi(s, q, m);
            }
        }
    }
    return rhs;
}

/// b_pres: -(p, ∇·θ) + ({p},[θ·n])_{Γ∪∂Ω} + (∇φ, θ); one vector per component.
inline std::vector<std::vector<double>> assemble_b_pres(const DGSpace& sp, const DGField& p,
                                                        const DGField& phi) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    const std::size_t N = sp.n_scalar_dofs();
    std::vector<std::vector<double>> rhs(static_cast<std::size_t>(sp.dim),
                                         std::vector<double>(N, 0.0));
    const double vol = sp.cell_volume();
    const double inv_h = 1.0 / sp.h();

    for (int e = 0; e < mesh.n_elements(); ++e)
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double w = sp.vol.weights[q] * vol;
            const double pv = eval_at(p, e, 0, sp.vol, q);
            const auto gphi = eval_grad_at(sp, phi, e, 0, sp.vol, q);
            for (int a = 0; a < sp.dim; ++a) {
                double* out = rhs[static_cast<std::size_t>(a)].data() + static_cast<std::size_t>(e) * nm;
                for (int m = 0; m < nm; ++m)
                    out[m] += w * (-pv * sp.vol.grad(q, m)[static_cast<std::size_t>(a)] * inv_h +
                                   gphi[static_cast<std::size_t>(a)] * sp.vol.value(q, m));
            }
        }

    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        double* outM = rhs[static_cast<std::size_t>(f.axis)].data() + static_cast<std::size_t>(f.minus) * nm;
        double* outP = rhs[static_cast<std::size_t>(f.axis)].data() + static_cast<std::size_t>(f.plus) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double pavg = 0.5 * (eval_at(p, f.minus, 0, *fc.tab[1], q) +
                                       eval_at(p, f.plus, 0, *fc.tab[0], q));
            const double w = fc.qw(q) * pavg;
            for (int m = 0; m < nm; ++m) {
                outM[m] += w * fc.phi(1, q, m);
                outP[m] -= w * fc.phi(0, q, m);
            }
        }
    }
    for (const auto& f : mesh.boundary_faces) {
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        double* out = rhs[static_cast<std::size_t>(f.axis)].data() + static_cast<std::size_t>(f.element) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q) * o * eval_at(p, f.element, 0, *fc.tab[s], q);
            for (int m = 0; m < nm; ++m) out[m] += w * fc.phi(s, q, m);
        }
    }
    return rhs;
}

/// b_vel: inflow-boundary velocity data terms (1/Re scaling internal, as the
/// momentum equation adds this with weight τ, not τ/Re).
inline std::vector<std::vector<double>> assemble_b_vel(const DGSpace& sp, const ModelParams& mp,
                                                       double sigma_bvel) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    const std::size_t N = sp.n_scalar_dofs();
    std::vector<std::vector<double>> rhs(static_cast<std::size_t>(sp.dim),
                                         std::vector<double>(N, 0.0));
    if (!mp.inflow_velocity) return rhs;
    const double sig = sigma_bvel / (sp.h() * mp.Re);
    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != FaceTag::Inflow) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const auto x = sp.mesh->map_point(f.element, fc.tab[s]->points[q]);
            const auto vD = mp.inflow_velocity(x);
            const double vDn = o * vD[static_cast<std::size_t>(f.axis)];
            const double w = fc.qw(q);
            for (int i = 0; i < sp.dim; ++i) {
                double* out = rhs[static_cast<std::size_t>(i)].data() + static_cast<std::size_t>(f.element) * nm;
                const double vDi = vD[static_cast<std::size_t>(i)];
                for (int m = 0; m < nm; ++m)
                    out[m] += w * (-vDn * vDi * fc.phi(s, q, m) -
                                   (1.0 / mp.Re) * o * fc.dn(s, q, m) * vDi +
                                   sig * vDi * fc.phi(s, q, m));
            }
        }
    }
    return rhs;
}

/// b_dens: density-gradient correction of the constant-coefficient pressure step
///   ((1-ρ_ref/ρ)∇φ_prev, ∇χ) - ([ (1-ρ_ref/ρ)(∇φ_prev·n) χ ], 1)_{Γ∪∂Ω_out}.
/// Throws DensityError if ρ is nonpositive at any quadrature point touched.
inline std::vector<double> assemble_b_dens(const DGSpace& sp, const DGField& rho,
                                           const DGField& phi_prev, double rho_ref) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    std::vector<double> rhs(sp.n_scalar_dofs(), 0.0);
    const double vol = sp.cell_volume();
    const double inv_h = 1.0 / sp.h();
    auto coef = [rho_ref](double r) {
        if (r <= 0.0) throw DensityError("b_dens: nonpositive density at quadrature point");
        return 1.0 - rho_ref / r;
    };

    for (int e = 0; e < mesh.n_elements(); ++e) {
        double* out = rhs.data() + static_cast<std::size_t>(e) * nm;
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double w = sp.vol.weights[q] * vol * coef(eval_at(rho, e, 0, sp.vol, q));
            const auto g = eval_grad_at(sp, phi_prev, e, 0, sp.vol, q);
            for (int m = 0; m < nm; ++m) {
                double dot_g = 0.0;
                for (int a = 0; a < sp.dim; ++a)
                    dot_g += g[static_cast<std::size_t>(a)] * sp.vol.grad(q, m)[static_cast<std::size_t>(a)] * inv_h;
                out[m] += w * dot_g;
            }
        }
    }

    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        double* outM = rhs.data() + static_cast<std::size_t>(f.minus) * nm;
        double* outP = rhs.data() + static_cast<std::size_t>(f.plus) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double cM = coef(eval_at(rho, f.minus, 0, *fc.tab[1], q));
            const double cP = coef(eval_at(rho, f.plus, 0, *fc.tab[0], q));
            const double gM = eval_grad_at(sp, phi_prev, f.minus, 0, *fc.tab[1], q)[static_cast<std::size_t>(f.axis)];
            const double gP = eval_grad_at(sp, phi_prev, f.plus, 0, *fc.tab[0], q)[static_cast<std::size_t>(f.axis)];
            for (int m = 0; m < nm; ++m) {
                outM[m] -= w * cM * gM * fc.phi(1, q, m);
                outP[m] += w * cP * gP * fc.phi(0, q, m);
            }
        }
    }
    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != FaceTag::Outflow) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        double* out = rhs.data() + static_cast<std::size_t>(f.element) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double cE = coef(eval_at(rho, f.element, 0, *fc.tab[s], q));
            const double gE = o * eval_grad_at(sp, phi_prev, f.element, 0, *fc.tab[s], q)[static_cast<std::size_t>(f.axis)];
            for (int m = 0; m < nm; ++m) out[m] -= w * cE * gE * fc.phi(s, q, m);
        }
    }
    return rhs;
}

/// Lifted DG divergence functional, the negative adjoint of the b_pres
/// pressure gradient: B(v, χ) = (∇_h·v, χ) - ([v·n_e], {χ})_{Γ∪∂Ω}.
/// The pressure-correction step must sense divergence through this form so
/// that the accumulated-pressure feedback in the momentum equation stays
/// dissipative; the bare broken divergence is blind to normal jumps of v and
/// lets the pressure work pump kinetic energy.
inline std::vector<double> assemble_lifted_divergence_rhs(const DGSpace& sp, const DGField& v) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    std::vector<double> rhs(sp.n_scalar_dofs(), 0.0);
    const double vol = sp.cell_volume();
    for (int e = 0; e < mesh.n_elements(); ++e) {
        double* out = rhs.data() + static_cast<std::size_t>(e) * nm;
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            double div_v = 0.0;
            for (int a = 0; a < sp.dim; ++a)
                div_v += eval_grad_at(sp, v, e, a, sp.vol, q)[static_cast<std::size_t>(a)];
            const double w = sp.vol.weights[q] * vol * div_v;
            for (int m = 0; m < nm; ++m) out[m] += w * sp.vol.value(q, m);
        }
    }
    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        double* outM = rhs.data() + static_cast<std::size_t>(f.minus) * nm;
        double* outP = rhs.data() + static_cast<std::size_t>(f.plus) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double jump_vn = eval_at(v, f.minus, f.axis, *fc.tab[1], q) -
                                   eval_at(v, f.plus, f.axis, *fc.tab[0], q);
            const double w = fc.qw(q) * jump_vn * 0.5;
            for (int m = 0; m < nm; ++m) {
                outM[m] -= w * fc.phi(1, q, m);
                outP[m] -= w * fc.phi(0, q, m);
            }
        }
    }
    for (const auto& f : mesh.boundary_faces) {
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        double* out = rhs.data() + static_cast<std::size_t>(f.element) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q) * o * eval_at(v, f.element, f.axis, *fc.tab[s], q);
            for (int m = 0; m < nm; ++m) out[m] -= w * fc.phi(s, q, m);
        }
    }
    return rhs;
}

/// Weak Dirichlet data for the SIPG operator: -(g, ∇χ·n)_tag + (σ/h)(g, χ)_tag.
inline std::vector<double> dirichlet_rhs(const DGSpace& sp,
                                         const std::function<double(const std::array<double, 3>&)>& g,
                                         FaceTag tag, double sigma) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    std::vector<double> rhs(sp.n_scalar_dofs(), 0.0);
    const double sig_h = sigma / sp.h();
    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != tag) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        double* out = rhs.data() + static_cast<std::size_t>(f.element) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double gv = g(sp.mesh->map_point(f.element, fc.tab[s]->points[q]));
            const double w = fc.qw(q) * gv;
            for (int m = 0; m < nm; ++m)
                out[m] += w * (-o * fc.dn(s, q, m) + sig_h * fc.phi(s, q, m));
        }
    }
    return rhs;
}

/// (f, χ) for a pointwise function, via the boosted rule.
inline std::vector<double> assemble_load(const DGSpace& sp,
                                         const std::function<double(const std::array<double, 3>&)>& f) {
    const int nm = sp.n_modes;
    std::vector<double> rhs(sp.n_scalar_dofs(), 0.0);
    const double vol = sp.cell_volume();
    for (int e = 0; e < sp.mesh->n_elements(); ++e) {
        double* out = rhs.data() + static_cast<std::size_t>(e) * nm;
        for (std::size_t q = 0; q < sp.vol_boost.size(); ++q) {
            const double w = sp.vol_boost.weights[q] * vol *
                             f(sp.mesh->map_point(e, sp.vol_boost.points[q]));
            for (int m = 0; m < nm; ++m) out[m] += w * sp.vol_boost.value(q, m);
        }
    }
    return rhs;
}

/// (g(c), χ) for a scalar nonlinearity of a DG field, boosted rule (the cubic
/// Φ'_+ of a degree-r field needs the extra quadrature order).
inline std::vector<double> assemble_nonlinear_load(const DGSpace& sp, const DGField& c,
                                                   const std::function<double(double)>& g) {
    const int nm = sp.n_modes;
    std::vector<double> rhs(sp.n_scalar_dofs(), 0.0);
    const double vol = sp.cell_volume();
    for (int e = 0; e < c.n_elements; ++e) {
        double* out = rhs.data() + static_cast<std::size_t>(e) * nm;
        for (std::size_t q = 0; q < sp.vol_boost.size(); ++q) {
            const double w = sp.vol_boost.weights[q] * vol * g(eval_at(c, e, 0, sp.vol_boost, q));
            for (int m = 0; m < nm; ++m) out[m] += w * sp.vol_boost.value(q, m);
        }
    }
    return rhs;
}

/// Mass matrix weighted by g(c) at boosted quadrature points. This is the exact
/// derivative of assemble_nonlinear_load with the matching integrand (used for
/// the Newton Jacobian of the Φ'_+ term with g = 3c²).
inline void assemble_nonlinear_jacobian_into(SparseOperator& A, const DGSpace& sp,
                                             const DGField& c,
                                             const std::function<double(double)>& dg) {
    const int nm = sp.n_modes;
    A.zero();
    std::vector<double> blk(static_cast<std::size_t>(nm) * nm);
    const double vol = sp.cell_volume();
    for (int e = 0; e < c.n_elements; ++e) {
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < sp.vol_boost.size(); ++q) {
            const double wq = sp.vol_boost.weights[q] * vol * dg(eval_at(c, e, 0, sp.vol_boost, q));
            for (int m = 0; m < nm; ++m) {
                const double phim = sp.vol_boost.value(q, m);
                for (int n = 0; n < nm; ++n)
                    blk[static_cast<std::size_t>(m) * nm + n] += wq * phim * sp.vol_boost.value(q, n);
            }
        }
        A.add_block(e, e, blk.data());
    }
}

/// Inflow advective data term of the order-parameter equation: (c_D u·n, χ)_in.
inline std::vector<double> assemble_inflow_advective_rhs(const DGSpace& sp, const DGField& u,
                                                         double c_inflow) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    std::vector<double> rhs(sp.n_scalar_dofs(), 0.0);
    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != FaceTag::Inflow) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        double* out = rhs.data() + static_cast<std::size_t>(f.element) * nm;
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double un = o * eval_at(u, f.element, f.axis, *fc.tab[s], q);
            const double w = fc.qw(q) * c_inflow * un;
            for (int m = 0; m < nm; ++m) out[m] += w * fc.phi(s, q, m);
        }
    }
    return rhs;
}

/// Weighted mass applied to a field: out_i = (w v_i, θ) per component.
inline std::vector<std::vector<double>> assemble_weighted_field_rhs(const DGSpace& sp,
                                                                    const DGField& w,
                                                                    const DGField& v) {
    const int nm = sp.n_modes;
    const std::size_t N = sp.n_scalar_dofs();
    std::vector<std::vector<double>> rhs(static_cast<std::size_t>(v.components),
                                         std::vector<double>(N, 0.0));
    const double vol = sp.cell_volume();
    for (int e = 0; e < v.n_elements; ++e)
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double wq = sp.vol.weights[q] * vol * eval_at(w, e, 0, sp.vol, q);
            for (int c = 0; c < v.components; ++c) {
                const double vv = eval_at(v, e, c, sp.vol, q);
                double* out = rhs[static_cast<std::size_t>(c)].data() + static_cast<std::size_t>(e) * nm;
                for (int m = 0; m < nm; ++m) out[m] += wq * vv * sp.vol.value(q, m);
            }
        }
    return rhs;
}

/// Capillary forcing (μ ∇c, θ) per component.
inline std::vector<std::vector<double>> assemble_mu_gradc_rhs(const DGSpace& sp, const DGField& mu,
                                                              const DGField& c) {
    const int nm = sp.n_modes;
    const std::size_t N = sp.n_scalar_dofs();
    std::vector<std::vector<double>> rhs(static_cast<std::size_t>(sp.dim),
                                         std::vector<double>(N, 0.0));
    const double vol = sp.cell_volume();
    for (int e = 0; e < c.n_elements; ++e)
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double w = sp.vol.weights[q] * vol * eval_at(mu, e, 0, sp.vol, q);
            const auto g = eval_grad_at(sp, c, e, 0, sp.vol, q);
            for (int a = 0; a < sp.dim; ++a) {
                double* out = rhs[static_cast<std::size_t>(a)].data() + static_cast<std::size_t>(e) * nm;
                const double s = w * g[static_cast<std::size_t>(a)];
                for (int m = 0; m < nm; ++m) out[m] += s * sp.vol.value(q, m);
            }
        }
    return rhs;
}

// ---------------------------------------------------------------------------
// Variable-coefficient SWIP operator for the standard projection baseline:
// (κ∇φ,∇χ) - ({κ∇φ·n},[χ]) - ({κ∇χ·n},[φ]) + (σ{κ}/h)([φ],[χ]) with κ = 1/ρ,
// plus one-sided Dirichlet terms on the outflow boundary. For constant ρ this
// equals (1/ρ) * a_diff,out exactly. Throws CoercivityError if ρ <= 0 anywhere.
// ---------------------------------------------------------------------------
inline SparseOperator assemble_a_vardiff_out(const DGSpace& sp, const DGField& rho, double sigma,
                                             double sigma_out) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nm = sp.n_modes;
    SparseOperator A = SparseOperator::from_pattern(BlockPattern::dg_scalar(mesh, nm));
    std::vector<double> blk(static_cast<std::size_t>(nm) * nm);
    const double gscale = sp.cell_volume() / (sp.h() * sp.h());
    auto kappa = [](double r) {
        if (r <= 0.0)
            throw CoercivityError("a_vardiff: nonpositive density, variable-coefficient "
                                  "pressure operator lost coercivity");
        return 1.0 / r;
    };

    for (int e = 0; e < mesh.n_elements(); ++e) {
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double w = sp.vol.weights[q] * gscale * kappa(eval_at(rho, e, 0, sp.vol, q));
            for (int m = 0; m < nm; ++m)
                for (int n = 0; n < nm; ++n) {
                    double g = 0.0;
                    for (int a = 0; a < sp.dim; ++a)
                        g += sp.vol.grad(q, m)[static_cast<std::size_t>(a)] * sp.vol.grad(q, n)[static_cast<std::size_t>(a)];
                    blk[static_cast<std::size_t>(m) * nm + n] += w * g;
                }
        }
        A.add_block(e, e, blk.data());
    }

    detail::BlockScratch fb(nm);
    for (const auto& f : mesh.interior_faces) {
        detail::FaceCtx fc(sp, f.axis);
        fb.clear();
        const int elem[2] = {f.minus, f.plus};
        const int side[2] = {1, 0};
        const double js[2] = {+1.0, -1.0};
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double k[2] = {kappa(eval_at(rho, f.minus, 0, *fc.tab[1], q)),
                                 kappa(eval_at(rho, f.plus, 0, *fc.tab[0], q))};
            const double kavg = 0.5 * (k[0] + k[1]);
            const double sig_h = sigma * kavg / sp.h();
            for (int t = 0; t < 2; ++t)
                for (int u = 0; u < 2; ++u) {
                    double* B = fb(t, u);
                    for (int m = 0; m < nm; ++m) {
                        const double phit = fc.phi(side[t], q, m);
                        const double dnt = k[t] * fc.dn(side[t], q, m);
                        for (int n = 0; n < nm; ++n) {
                            const double phiu = fc.phi(side[u], q, n);
                            const double dnu = k[u] * fc.dn(side[u], q, n);
                            B[static_cast<std::size_t>(m) * nm + n] +=
                                w * (-0.5 * dnu * js[t] * phit - 0.5 * dnt * js[u] * phiu +
                                     sig_h * js[t] * phit * js[u] * phiu);
                        }
                    }
                }
        }
        for (int t = 0; t < 2; ++t)
            for (int u = 0; u < 2; ++u) A.add_block(elem[t], elem[u], fb(t, u));
    }

    for (const auto& f : mesh.boundary_faces) {
        if (f.tag != FaceTag::Outflow) continue;
        detail::FaceCtx fc(sp, f.axis);
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        std::fill(blk.begin(), blk.end(), 0.0);
        for (std::size_t q = 0; q < fc.n_q(); ++q) {
            const double w = fc.qw(q);
            const double kE = kappa(eval_at(rho, f.element, 0, *fc.tab[s], q));
            const double sig_h = sigma_out * kE / sp.h();
            for (int m = 0; m < nm; ++m) {
                const double phim = fc.phi(s, q, m);
                const double dnm = o * kE * fc.dn(s, q, m);
                for (int n = 0; n < nm; ++n) {
                    const double phin = fc.phi(s, q, n);
                    const double dnn = o * kE * fc.dn(s, q, n);
                    blk[static_cast<std::size_t>(m) * nm + n] +=
                        w * (-dnn * phim - dnm * phin + sig_h * phin * phim);
                }
            }
        }
        A.add_block(f.element, f.element, blk.data());
    }
    return A;
}

} // namespace chns
