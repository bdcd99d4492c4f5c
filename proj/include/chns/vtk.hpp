#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "chns/errors.hpp"
#include "chns/field.hpp"
#include "chns/stepper.hpp"

namespace chns {

/// Legacy ASCII VTK (unstructured grid of pixels/voxels over active cells).
/// Cell data: c_avg, rho_avg, p_avg. Point data: vertex-averaged c and u.
inline void write_vtk(const DGSpace& sp, const FlowState& s, const std::string& path) {
    const VoxelMesh& mesh = *sp.mesh;
    std::ofstream out(path);
    if (!out) throw IOError("write_vtk: cannot open " + path);
    const int nx = mesh.cells[0], ny = mesh.cells[1];
    const int vx = nx + 1, vy = ny + 1;

    // compact vertex numbering over the corners of active cells
    const std::size_t vlattice = static_cast<std::size_t>(vx) * static_cast<std::size_t>(vy) *
                                 static_cast<std::size_t>(mesh.cells[2] + (mesh.dim == 3 ? 1 : 0) + (mesh.dim == 2 ? 0 : 0));
    std::vector<int> vmap(static_cast<std::size_t>(vx) * static_cast<std::size_t>(vy) *
                              static_cast<std::size_t>(mesh.dim == 3 ? mesh.cells[2] + 1 : 1),
                          -1);
    (void)vlattice;
    auto vidx = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(k) * static_cast<std::size_t>(vy) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(vx) +
               static_cast<std::size_t>(i);
    };
    int n_points = 0;
    const int corners = 1 << mesh.dim;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto c = mesh.cell_coords(e);
        for (int v = 0; v < corners; ++v) {
            const int i = c[0] + (v & 1), j = c[1] + ((v >> 1) & 1), k = c[2] + ((v >> 2) & 1);
            if (vmap[vidx(i, j, k)] < 0) vmap[vidx(i, j, k)] = n_points++;
        }
    }

    out << "# vtk DataFile Version 3.0\n";
    out << "chns fields step " << s.n << "\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << n_points << " double\n";
    {
        std::vector<std::array<double, 3>> pts(static_cast<std::size_t>(n_points));
        const int kmax = mesh.dim == 3 ? mesh.cells[2] + 1 : 1;
        for (int k = 0; k < kmax; ++k)
            for (int j = 0; j < vy; ++j)
                for (int i = 0; i < vx; ++i) {
                    const int id = vmap[vidx(i, j, k)];
                    if (id >= 0)
                        pts[static_cast<std::size_t>(id)] = {i * mesh.h, j * mesh.h, k * mesh.h};
                }
        char buf[128];
        for (const auto& p : pts) {
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
            out << buf;
        }
    }

    const int nE = mesh.n_elements();
    out << "CELLS " << nE << " " << nE * (corners + 1) << "\n";
    for (int e = 0; e < nE; ++e) {
        const auto c = mesh.cell_coords(e);
        out << corners;
        for (int v = 0; v < corners; ++v) {
            const int i = c[0] + (v & 1), j = c[1] + ((v >> 1) & 1), k = c[2] + ((v >> 2) & 1);
            out << ' ' << vmap[vidx(i, j, k)];
        }
        out << '\n';
    }
    out << "CELL_TYPES " << nE << "\n";
    const int ctype = mesh.dim == 2 ? 8 : 11;  // VTK_PIXEL / VTK_VOXEL
    for (int e = 0; e < nE; ++e) out << ctype << '\n';

    char buf[128];
    out << "CELL_DATA " << nE << "\n";
    auto cell_scalars = [&](const char* name, const DGField& f) {
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (int e = 0; e < nE; ++e) {
            std::snprintf(buf, sizeof buf, "%.17g\n", cell_average(f, e));
            out << buf;
        }
    };
    cell_scalars("c_avg", s.c);
    cell_scalars("rho_avg", s.rho);
    cell_scalars("p_avg", s.p);

    // vertex-averaged point samples (adjacent-cell mean of the DG traces)
    std::vector<double> cpt(static_cast<std::size_t>(n_points), 0.0);
    std::vector<std::array<double, 3>> upt(static_cast<std::size_t>(n_points), {0.0, 0.0, 0.0});
    std::vector<int> cnt(static_cast<std::size_t>(n_points), 0);
    for (int e = 0; e < nE; ++e) {
        const auto cc = mesh.cell_coords(e);
        for (int v = 0; v < corners; ++v) {
            const int i = cc[0] + (v & 1), j = cc[1] + ((v >> 1) & 1), k = cc[2] + ((v >> 2) & 1);
            const int id = vmap[vidx(i, j, k)];
            cpt[static_cast<std::size_t>(id)] += eval_at(s.c, e, 0, sp.vertices, static_cast<std::size_t>(v));
            for (int a = 0; a < mesh.dim; ++a)
                upt[static_cast<std::size_t>(id)][static_cast<std::size_t>(a)] +=
                    eval_at(s.u, e, a, sp.vertices, static_cast<std::size_t>(v));
            ++cnt[static_cast<std::size_t>(id)];
        }
    }
    out << "POINT_DATA " << n_points << "\n";
    out << "SCALARS c double 1\nLOOKUP_TABLE default\n";
    for (int p = 0; p < n_points; ++p) {
        std::snprintf(buf, sizeof buf, "%.17g\n", cpt[static_cast<std::size_t>(p)] / cnt[static_cast<std::size_t>(p)]);
        out << buf;
    }
    out << "VECTORS u double\n";
    for (int p = 0; p < n_points; ++p) {
        const auto& u = upt[static_cast<std::size_t>(p)];
        const double inv = 1.0 / cnt[static_cast<std::size_t>(p)];
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", u[0] * inv, u[1] * inv, u[2] * inv);
        out << buf;
    }
    if (!out) throw IOError("write_vtk: write failed for " + path);
}

} // namespace chns
