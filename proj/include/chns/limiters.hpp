#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "chns/errors.hpp"
#include "chns/field.hpp"
#include "chns/forms.hpp"

namespace chns {

/// Net mass fluxes across element faces. Interior faces store the value seen
/// from the minus element; the plus element's flux is its negation, so the
/// antisymmetry H_E(e) = -H_E'(e) holds exactly by construction. Wall faces
/// carry zero flux.
struct FaceFluxSet {
    std::vector<double> interior;  // indexed like mesh.interior_faces
    std::vector<double> boundary;  // indexed like mesh.boundary_faces

    double max_abs() const {
        double m = 0.0;
        for (double v : interior) m = std::max(m, std::abs(v));
        for (double v : boundary) m = std::max(m, std::abs(v));
        return m;
    }
};

struct LimiterReport {
    int flux_iterations = 0;
    double max_residual_flux = 0.0;
    int troubled_cells = 0;
    double pre_min = 0.0, pre_max = 0.0;
    double post_min = 0.0, post_max = 0.0;
};

/// Face mass fluxes of the discrete order-parameter update:
///   interior: -(1/Pe)∫{∇μ}·n_E + ∫(c^n)↑ {u}·n_E + (σ/(Pe h))∫(μ|E - μ|E'),
///   inflow:    ∫ c_D u·n_E,   wall: 0,   outflow: ∫ c|E u·n_E  (one-sided).
inline FaceFluxSet compute_fluxes(const DGSpace& sp, const DGField& c_new, const DGField& mu_new,
                                  const DGField& u_prev, const ModelParams& mp,
                                  double sigma_diff) {
    const VoxelMesh& mesh = *sp.mesh;
    FaceFluxSet fx;
    fx.interior.assign(mesh.interior_faces.size(), 0.0);
    fx.boundary.assign(mesh.boundary_faces.size(), 0.0);
    const double area = sp.face_area();
    const double inv_h = 1.0 / sp.h();
    const double pen = sigma_diff / (mp.Pe * sp.h());

    for (std::size_t i = 0; i < mesh.interior_faces.size(); ++i) {
        const auto& f = mesh.interior_faces[i];
        const auto& tabM = sp.face[static_cast<std::size_t>(f.axis)][1];
        const auto& tabP = sp.face[static_cast<std::size_t>(f.axis)][0];
        double H = 0.0;
        for (std::size_t q = 0; q < tabM.size(); ++q) {
            const double w = tabM.weights[q] * area;
            const double dmuM = eval_grad_at(sp, mu_new, f.minus, 0, tabM, q)[static_cast<std::size_t>(f.axis)];
            const double dmuP = eval_grad_at(sp, mu_new, f.plus, 0, tabP, q)[static_cast<std::size_t>(f.axis)];
            const double un = 0.5 * (eval_at(u_prev, f.minus, f.axis, tabM, q) +
                                     eval_at(u_prev, f.plus, f.axis, tabP, q));
            const double c_up = un >= 0.0 ? eval_at(c_new, f.minus, 0, tabM, q)
                                          : eval_at(c_new, f.plus, 0, tabP, q);
            const double muM = eval_at(mu_new, f.minus, 0, tabM, q);
            const double muP = eval_at(mu_new, f.plus, 0, tabP, q);
            H += w * (-(0.5 * (dmuM + dmuP)) / mp.Pe + c_up * un + pen * (muM - muP));
        }
        fx.interior[i] = H;
        (void)inv_h;
    }

    for (std::size_t i = 0; i < mesh.boundary_faces.size(); ++i) {
        const auto& f = mesh.boundary_faces[i];
        if (f.tag == FaceTag::Wall) continue;
        const int s = f.orientation > 0 ? 1 : 0;
        const double o = static_cast<double>(f.orientation);
        const auto& tab = sp.face[static_cast<std::size_t>(f.axis)][static_cast<std::size_t>(s)];
        double H = 0.0;
        for (std::size_t q = 0; q < tab.size(); ++q) {
            const double w = tab.weights[q] * area;
            const double un = o * eval_at(u_prev, f.element, f.axis, tab, q);
            const double cval = f.tag == FaceTag::Inflow ? mp.c_inflow
                                                         : eval_at(c_new, f.element, 0, tab, q);
            H += w * cval * un;
        }
        fx.boundary[i] = H;
    }
    return fx;
}

namespace detail {

inline double ratio_or_one(double q, double p) {
    if (p == 0.0) return 1.0;  // no flux threatens the bound
    return std::clamp(q / p, 0.0, 1.0);
}

} // namespace detail

/// Iterative flux limiting of cell averages (the global sweep of algorithm La).
/// averages_prev must lie in [-1,1]; the returned averages do too, and total
/// mass Σ|E| c̄ is conserved exactly up to round-off because limited interior
/// fluxes cancel pairwise on every sweep. Stops when max|H| < eps1 or
/// max|H - H_prev| < eps2; throws LimiterError past the iteration cap.
inline std::vector<double> limit_element_averages(const VoxelMesh& mesh,
                                                  const std::vector<double>& averages_prev,
                                                  const FaceFluxSet& fluxes, double tau,
                                                  double eps1, double eps2,
                                                  int* iterations_out = nullptr,
                                                  double* residual_out = nullptr,
                                                  int max_iterations = 200,
                                                  std::vector<double>* flux_history = nullptr) {
    const int nE = mesh.n_elements();
    for (double v : averages_prev)
        if (v < -1.0 || v > 1.0)
            throw PreconditionError("limit_element_averages: previous averages out of [-1,1]");

    const double cell_vol = mesh.cell_volume();
    std::vector<double> cbar = averages_prev;
    std::vector<double> Hi = fluxes.interior, Hb = fluxes.boundary;
    std::vector<double> alpha_i(Hi.size(), 1.0), alpha_b(Hb.size(), 1.0);
    std::vector<double> Pp(static_cast<std::size_t>(nE)), Pm(static_cast<std::size_t>(nE));
    std::vector<double> Qp(static_cast<std::size_t>(nE)), Qm(static_cast<std::size_t>(nE));
    std::vector<double> delta(static_cast<std::size_t>(nE));

    int m = 0;
    double max_H = 0.0;
    for (m = 1; m <= max_iterations; ++m) {
        // P, Q from the previous iterate (full Jacobi sweep)
        std::fill(Pp.begin(), Pp.end(), 0.0);
        std::fill(Pm.begin(), Pm.end(), 0.0);
        for (std::size_t i = 0; i < Hi.size(); ++i) {
            const auto& f = mesh.interior_faces[i];
            const double h = Hi[i];
            Pp[static_cast<std::size_t>(f.minus)] += tau * std::max(0.0, -h);
            Pm[static_cast<std::size_t>(f.minus)] += tau * std::min(0.0, -h);
            Pp[static_cast<std::size_t>(f.plus)] += tau * std::max(0.0, h);
            Pm[static_cast<std::size_t>(f.plus)] += tau * std::min(0.0, h);
        }
        for (std::size_t i = 0; i < Hb.size(); ++i) {
            const int e = mesh.boundary_faces[i].element;
            Pp[static_cast<std::size_t>(e)] += tau * std::max(0.0, -Hb[i]);
            Pm[static_cast<std::size_t>(e)] += tau * std::min(0.0, -Hb[i]);
        }
        for (int e = 0; e < nE; ++e) {
            Qp[static_cast<std::size_t>(e)] = cell_vol * (ModelParams::c_upper - cbar[static_cast<std::size_t>(e)]);
            Qm[static_cast<std::size_t>(e)] = cell_vol * (ModelParams::c_lower - cbar[static_cast<std::size_t>(e)]);
        }

        // limiting factors; interior factors are symmetric in the two elements
        for (std::size_t i = 0; i < Hi.size(); ++i) {
            const auto& f = mesh.interior_faces[i];
            const double h = Hi[i];
            if (h == 0.0) continue;
            const std::size_t em = static_cast<std::size_t>(f.minus), ep = static_cast<std::size_t>(f.plus);
            if (h < 0.0)
                alpha_i[i] = std::min(detail::ratio_or_one(Qp[em], Pp[em]),
                                      detail::ratio_or_one(Qm[ep], Pm[ep]));
            else
                alpha_i[i] = std::min(detail::ratio_or_one(Qm[em], Pm[em]),
                                      detail::ratio_or_one(Qp[ep], Pp[ep]));
        }
        for (std::size_t i = 0; i < Hb.size(); ++i) {
            const double h = Hb[i];
            if (h == 0.0) continue;
            const std::size_t e = static_cast<std::size_t>(mesh.boundary_faces[i].element);
            alpha_b[i] = h < 0.0 ? detail::ratio_or_one(Qp[e], Pp[e])
                                 : detail::ratio_or_one(Qm[e], Pm[e]);
        }

        // average update with the old fluxes, then flux decay
        std::fill(delta.begin(), delta.end(), 0.0);
        for (std::size_t i = 0; i < Hi.size(); ++i) {
            const auto& f = mesh.interior_faces[i];
            const double ah = alpha_i[i] * Hi[i];
            delta[static_cast<std::size_t>(f.minus)] += ah;
            delta[static_cast<std::size_t>(f.plus)] -= ah;
        }
        for (std::size_t i = 0; i < Hb.size(); ++i)
            delta[static_cast<std::size_t>(mesh.boundary_faces[i].element)] += alpha_b[i] * Hb[i];
        const double scale = tau / cell_vol;
        for (int e = 0; e < nE; ++e) cbar[static_cast<std::size_t>(e)] -= scale * delta[static_cast<std::size_t>(e)];

        max_H = 0.0;
        double max_diff = 0.0;
        for (std::size_t i = 0; i < Hi.size(); ++i) {
            const double hnew = (1.0 - alpha_i[i]) * Hi[i];
            max_diff = std::max(max_diff, std::abs(hnew - Hi[i]));
            Hi[i] = hnew;
            max_H = std::max(max_H, std::abs(hnew));
        }
        for (std::size_t i = 0; i < Hb.size(); ++i) {
            const double hnew = (1.0 - alpha_b[i]) * Hb[i];
            max_diff = std::max(max_diff, std::abs(hnew - Hb[i]));
            Hb[i] = hnew;
            max_H = std::max(max_H, std::abs(hnew));
        }
        if (flux_history) flux_history->push_back(max_H);
        if (max_H < eps1 || max_diff < eps2) break;
        if (m == max_iterations)
            throw LimiterError("limit_element_averages: no convergence within iteration cap");
    }

    // round-off guard around the exact-arithmetic bound lemma
    for (double& v : cbar) {
        if (v > 1.0) {
            if (v > 1.0 + 1e-12) throw LimiterError("limit_element_averages: average escaped bounds");
            v = 1.0;
        } else if (v < -1.0) {
            if (v < -1.0 - 1e-12) throw LimiterError("limit_element_averages: average escaped bounds");
            v = -1.0;
        }
    }
    if (iterations_out) *iterations_out = m;
    if (residual_out) *residual_out = max_H;
    return cbar;
}

/// Algorithm L: compute fluxes, limit the averages, then shift each element's
/// polynomial by a constant so its average equals the limited average. Higher
/// modes are untouched.
inline LimiterReport apply_flux_limiter(const DGSpace& sp, const DGField& c_prev, DGField& c_new,
                                        const DGField& mu_new, const DGField& u_prev,
                                        const ModelParams& mp, double sigma_diff, double tau,
                                        double eps1, double eps2, int max_iterations = 200) {
    const VoxelMesh& mesh = *sp.mesh;
    const int nE = mesh.n_elements();
    LimiterReport rep;

    const FaceFluxSet fx = compute_fluxes(sp, c_new, mu_new, u_prev, mp, sigma_diff);
    std::vector<double> prev_avg(static_cast<std::size_t>(nE));
    for (int e = 0; e < nE; ++e) prev_avg[static_cast<std::size_t>(e)] = cell_average(c_prev, e);
    const std::vector<double> post = limit_element_averages(mesh, prev_avg, fx, tau, eps1, eps2,
                                                            &rep.flux_iterations,
                                                            &rep.max_residual_flux, max_iterations);
    for (int e = 0; e < nE; ++e)
        c_new.coeff(e, 0, 0) += post[static_cast<std::size_t>(e)] - cell_average(c_new, e);
    return rep;
}

/// Troubled-cell detection: an element is troubled if the field leaves [-1,1]
/// at any point of the sample set (vertices for r=1, where multilinear extrema
/// live; vertices + quadrature points + face midpoints for r=2).
inline std::vector<std::uint8_t> detect_troubled(const DGSpace& sp, const DGField& c) {
    std::vector<std::uint8_t> flags(static_cast<std::size_t>(c.n_elements), 0);
    for (int e = 0; e < c.n_elements; ++e)
        for (std::size_t p = 0; p < sp.samples.size(); ++p) {
            const double v = eval_at(c, e, 0, sp.samples, p);
            if (v < -1.0 || v > 1.0) {
                flags[static_cast<std::size_t>(e)] = 1;
                break;
            }
        }
    return flags;
}

/// Algorithm S: on troubled cells, reduce to the linear part (element-local L2
/// projection, i.e. zero every non-P1 mode) and scale it by the largest beta in
/// [0,1] keeping all vertex values inside [-1,1]. Cell averages are preserved
/// exactly. Returns the number of troubled cells.
inline int slope_limit(const DGSpace& sp, DGField& c) {
    const auto flags = detect_troubled(sp, c);
    const int p = sp.degree + 1;
    // mode indices of the pure per-axis linear modes
    std::array<int, 3> lin = {1, p, p * p};
    int n_troubled = 0;

    for (int e = 0; e < c.n_elements; ++e) {
        if (!flags[static_cast<std::size_t>(e)]) continue;
        ++n_troubled;
        double* cf = c.element_coeffs(e, 0);
        double cbar = cf[0];
        if (cbar > 1.0 || cbar < -1.0) {
            if (cbar > 1.0 + 1e-12 || cbar < -1.0 - 1e-12)
                throw PreconditionError("slope_limit: cell average out of [-1,1]");
            cbar = std::clamp(cbar, -1.0, 1.0);
            cf[0] = cbar;
        }
        std::array<double, 3> l0 = {0.0, 0.0, 0.0};
        for (int a = 0; a < sp.dim; ++a) l0[static_cast<std::size_t>(a)] = cf[lin[static_cast<std::size_t>(a)]];
        for (int m = 1; m < sp.n_modes; ++m) cf[m] = 0.0;

        // largest admissible scaling of the linear part, vertex by vertex
        double beta = 1.0;
        for (int v = 0; v < (1 << sp.dim); ++v) {
            double val = cbar;
            for (int a = 0; a < sp.dim; ++a) {
                const double L1 = ((v >> a) & 1) ? 1.7320508075688772935 : -1.7320508075688772935;
                val += l0[static_cast<std::size_t>(a)] * L1;
            }
            if (val > 1.0) beta = std::min(beta, (1.0 - cbar) / (val - cbar));
            else if (val < -1.0) beta = std::min(beta, (-1.0 - cbar) / (val - cbar));
        }
        beta = std::clamp(beta, 0.0, 1.0);

        // apply, then guard the exact bound against round-off by halving beta
        for (int attempt = 0; attempt < 200; ++attempt) {
            for (int a = 0; a < sp.dim; ++a)
                cf[lin[static_cast<std::size_t>(a)]] = beta * l0[static_cast<std::size_t>(a)];
            bool ok = true;
            for (std::size_t pt = 0; pt < sp.samples.size() && ok; ++pt) {
                const double val = eval_at(c, e, 0, sp.samples, pt);
                if (val > 1.0 || val < -1.0) ok = false;
            }
            if (ok) break;
            beta *= 0.5;
            if (beta < 1e-300) beta = 0.0;
        }
    }
    return n_troubled;
}

} // namespace chns
