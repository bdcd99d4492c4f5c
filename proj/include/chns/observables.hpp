#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "chns/field.hpp"
#include "chns/stepper.hpp"

namespace chns {

/// Per-step scalar diagnostics logged to the observables CSV.
struct ObservableRecord {
    int n = 0;
    double t = 0.0;
    double mean_c = 0.0;
    double mean_rho = 0.0;
    double min_c = 0.0;
    double max_c = 0.0;
    double kinetic_energy = 0.0;
    double div_norm = 0.0;
    int limiter_iterations = 0;
    int troubled_cells = 0;
};

namespace detail {

// compensated summation; the mass-drift acceptance bound sits near round-off
inline double kahan_mean(const std::vector<double>& v) {
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum / static_cast<double>(v.size());
}

} // namespace detail

inline ObservableRecord measure(const DGSpace& sp, const FlowState& s,
                                const StepDiagnostics* diag = nullptr) {
    ObservableRecord r;
    r.n = s.n;
    r.t = s.t;
    const int nE = sp.mesh->n_elements();
    std::vector<double> cbar(static_cast<std::size_t>(nE)), rbar(static_cast<std::size_t>(nE));
    for (int e = 0; e < nE; ++e) {
        cbar[static_cast<std::size_t>(e)] = cell_average(s.c, e);
        rbar[static_cast<std::size_t>(e)] = cell_average(s.rho, e);
    }
    r.mean_c = detail::kahan_mean(cbar);
    r.mean_rho = detail::kahan_mean(rbar);
    const auto mm = field_minmax(sp, s.c);
    r.min_c = mm.first;
    r.max_c = mm.second;

    double ke = 0.0;
    const double vol = sp.cell_volume();
    for (int e = 0; e < nE; ++e)
        for (std::size_t q = 0; q < sp.vol.size(); ++q) {
            const double rho = eval_at(s.rho, e, 0, sp.vol, q);
            double u2 = 0.0;
            for (int a = 0; a < sp.dim; ++a) {
                const double ua = eval_at(s.u, e, a, sp.vol, q);
                u2 += ua * ua;
            }
            ke += 0.5 * sp.vol.weights[q] * vol * rho * u2;
        }
    r.kinetic_energy = ke;

    const DGField div_u = divergence(sp, s.u);
    double dn = 0.0;
    for (double v : div_u.coeffs) dn += v * v;  // orthonormal modes: exact L2 norm
    r.div_norm = std::sqrt(vol * dn);

    if (diag) {
        r.limiter_iterations = diag->limiter.flux_iterations;
        r.troubled_cells = diag->limiter.troubled_cells;
    }
    return r;
}

inline void write_observable_header(std::ostream& out) {
    out << "n,t,mean_c,mean_rho,min_c,max_c,kinetic_energy,div_norm,"
           "limiter_iterations,troubled_cells\n";
}

inline void write_observable(std::ostream& out, const ObservableRecord& r) {
    char buf[360];
    std::snprintf(buf, sizeof buf,
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", r.n, r.t, r.mean_c,
                  r.mean_rho, r.min_c, r.max_c, r.kinetic_energy, r.div_norm,
                  r.limiter_iterations, r.troubled_cells);
    out << buf;
}

// ---------------------------------------------------------------------------
// Region analysis of the cell-average field (droplet-merging diagnostics)
// ---------------------------------------------------------------------------

/// Number of face-connected components among active cells with c̄ > threshold.
inline int connected_components(const VoxelMesh& mesh, const DGField& c, double threshold = 0.0) {
    const int nE = mesh.n_elements();
    std::vector<std::uint8_t> in(static_cast<std::size_t>(nE), 0), seen(static_cast<std::size_t>(nE), 0);
    for (int e = 0; e < nE; ++e) in[static_cast<std::size_t>(e)] = cell_average(c, e) > threshold;
    int count = 0;
    std::queue<int> q;
    for (int e0 = 0; e0 < nE; ++e0) {
        if (!in[static_cast<std::size_t>(e0)] || seen[static_cast<std::size_t>(e0)]) continue;
        ++count;
        seen[static_cast<std::size_t>(e0)] = 1;
        q.push(e0);
        while (!q.empty()) {
            const int e = q.front();
            q.pop();
            for (int sdx = 0; sdx < 2 * mesh.dim; ++sdx) {
                const int nb = mesh.neighbors[static_cast<std::size_t>(e)][static_cast<std::size_t>(sdx)];
                if (nb >= 0 && in[static_cast<std::size_t>(nb)] && !seen[static_cast<std::size_t>(nb)]) {
                    seen[static_cast<std::size_t>(nb)] = 1;
                    q.push(nb);
                }
            }
        }
    }
    return count;
}

/// Isoperimetric ratio 4πA/P² of the {c̄ > 0} region on a 2D full-box mesh.
/// The perimeter is the marching-squares length of the zero contour of the
/// bilinearly interpolated cell-center values; the area counts cells. Equals 1
/// for a disk; returns 0 if the region is empty or the contour degenerates.
inline double isoperimetric_ratio_2d(const VoxelMesh& mesh, const DGField& c) {
    if (mesh.dim != 2) throw Error("isoperimetric_ratio_2d: 2D meshes only");
    const int nx = mesh.cells[0], ny = mesh.cells[1];
    auto value = [&](int i, int j) {
        const int e = mesh.element_of[static_cast<std::size_t>(j * nx + i)];
        return e >= 0 ? cell_average(c, e) : -1.0;
    };
    double area = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e)
        if (cell_average(c, e) > 0.0) area += mesh.cell_volume();
    if (area == 0.0) return 0.0;

    // zero crossings on the edges of each cell-center square
    const double h = mesh.h;
    double perim = 0.0;
    auto cross = [](double a, double b) { return a / (a - b); };  // along edge, a and b straddle 0
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            const double v00 = value(i, j), v10 = value(i + 1, j);
            const double v01 = value(i, j + 1), v11 = value(i + 1, j + 1);
            std::vector<std::array<double, 2>> pts;
            if ((v00 > 0) != (v10 > 0)) pts.push_back({cross(v00, v10), 0.0});
            if ((v01 > 0) != (v11 > 0)) pts.push_back({cross(v01, v11), 1.0});
            if ((v00 > 0) != (v01 > 0)) pts.push_back({0.0, cross(v00, v01)});
            if ((v10 > 0) != (v11 > 0)) pts.push_back({1.0, cross(v10, v11)});
            if (pts.size() == 2) {
                const double dx = (pts[1][0] - pts[0][0]) * h;
                const double dy = (pts[1][1] - pts[0][1]) * h;
                perim += std::sqrt(dx * dx + dy * dy);
            } else if (pts.size() == 4) {
                // ambiguous saddle: pair edges by shortest total length
                auto len = [&](int a, int b) {
                    const double dx = (pts[static_cast<std::size_t>(b)][0] - pts[static_cast<std::size_t>(a)][0]) * h;
                    const double dy = (pts[static_cast<std::size_t>(b)][1] - pts[static_cast<std::size_t>(a)][1]) * h;
                    return std::sqrt(dx * dx + dy * dy);
                };
                perim += std::min(len(0, 2) + len(1, 3), len(0, 3) + len(1, 2));
            }
        }
    if (perim == 0.0) return 0.0;
    return 4.0 * M_PI * area / (perim * perim);
}

} // namespace chns
