#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "chns/config.hpp"
#include "chns/errors.hpp"
#include "chns/mesh.hpp"

namespace chns {

/// Mesh, initial data and completed model parameters for one experiment.
struct Scenario {
    VoxelMesh mesh;
    std::function<double(const std::array<double, 3>&)> c0;
    std::function<std::array<double, 3>(const std::array<double, 3>&)> v0;
    ModelParams model;
};

namespace detail {

inline std::vector<PlaneSelector> parse_planes(const std::string& spec, const SimulationConfig& c) {
    std::vector<PlaneSelector> out;
    if (spec == "none" || spec.empty()) return out;
    std::istringstream in(spec);
    std::string tok;
    const std::array<int, 3> n = {c.nx, c.ny, c.dim == 3 ? c.nz : 1};
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.size() != 2) throw ConfigError("config: bad plane selector '" + tok + "'");
        const int axis = tok[0] == 'x' ? 0 : tok[0] == 'y' ? 1 : tok[0] == 'z' ? 2 : -1;
        if (axis < 0 || axis >= c.dim || (tok[1] != '0' && tok[1] != '1'))
            throw ConfigError("config: bad plane selector '" + tok + "'");
        const double coord = tok[1] == '0' ? 0.0 : n[static_cast<std::size_t>(axis)] * c.h;
        out.push_back({axis, coord});
    }
    return out;
}

} // namespace detail

inline VoxelMesh build_mesh_from_config(const SimulationConfig& c) {
    VoxelMesh mesh;
    if (c.mesh_source == "box") {
        const std::array<int, 3> counts = {c.nx, c.ny, c.dim == 3 ? c.nz : 1};
        mesh = build_voxel_mesh(mask_box(counts), c.dim, counts, c.h);
    } else if (c.mesh_source == "torus") {
        const std::array<int, 3> counts = {c.nx, c.nx, c.nx};
        mesh = build_voxel_mesh(mask_torus(c.nx), 3, counts, 1.0 / c.nx);
    } else if (c.mesh_source == "micro") {
        const std::array<int, 3> counts = {c.nx, c.ny, c.dim == 3 ? c.nz : 1};
        mesh = build_voxel_mesh(mask_micro(counts, c.dim, c.micro_buffer, c.micro_period,
                                           c.micro_pillar),
                                c.dim, counts, c.h);
    } else if (c.mesh_source == "file") {
        const MaskData md = read_mask(c.mesh_file);
        mesh = build_voxel_mesh(md.mask, md.dim, md.counts, md.h);
    } else {
        throw ConfigError("config: unknown mesh.source '" + c.mesh_source + "'");
    }
    BoundarySpec spec;
    spec.inflow = detail::parse_planes(c.bc_inflow, c);
    spec.outflow = detail::parse_planes(c.bc_outflow, c);
    classify_boundary(mesh, spec);
    return mesh;
}

/// Inflow velocity profile: the 3D channel profile
///   v_D = peak * 400 y(y-1)(z-2/5)(z-3/5) e_x
/// and its 2D restatement v_D = peak * (-4) y(y-1) e_x (unit peak at y=1/2).
inline std::function<std::array<double, 3>(const std::array<double, 3>&)>
channel_inflow_profile(int dim, double peak) {
    if (dim == 3)
        return [peak](const std::array<double, 3>& x) -> std::array<double, 3> {
            const double v = peak * 400.0 * x[1] * (x[1] - 1.0) * (x[2] - 0.4) * (x[2] - 0.6);
            return {v, 0.0, 0.0};
        };
    return [peak](const std::array<double, 3>& x) -> std::array<double, 3> {
        const double v = peak * -4.0 * x[1] * (x[1] - 1.0);
        return {v, 0.0, 0.0};
    };
}

inline Scenario build_scenario(const SimulationConfig& c) {
    Scenario s;
    s.mesh = build_mesh_from_config(c);
    s.model = c.model;
    if (!c.delta_file.empty()) {
        std::ifstream in(c.delta_file);
        if (!in) throw IOError("cannot open delta file " + c.delta_file);
        s.model.delta_per_face.assign(s.mesh.boundary_faces.size(), s.model.delta);
        for (auto& v : s.model.delta_per_face)
            if (!(in >> v)) throw IOError("delta file too short: " + c.delta_file);
    }

    auto zero_velocity = [](const std::array<double, 3>&) -> std::array<double, 3> {
        return {0.0, 0.0, 0.0};
    };
    s.v0 = zero_velocity;
    s.model.inflow_velocity = channel_inflow_profile(s.mesh.dim, c.inflow_peak);

    if (c.scenario == "spinodal") {
        // one ±1 draw per active cell, in element order, from the seeded generator
        std::mt19937_64 rng(c.seed);
        std::uniform_int_distribution<int> bit(0, 1);
        auto values = std::make_shared<std::vector<double>>();
        values->reserve(static_cast<std::size_t>(s.mesh.n_elements()));
        for (int e = 0; e < s.mesh.n_elements(); ++e)
            values->push_back(bit(rng) ? 1.0 : -1.0);
        const VoxelMesh* mesh = &s.mesh;
        s.c0 = [values, mesh](const std::array<double, 3>& x) {
            std::array<int, 3> idx = {0, 0, 0};
            for (int a = 0; a < mesh->dim; ++a) {
                int i = static_cast<int>(std::floor(x[static_cast<std::size_t>(a)] / mesh->h));
                i = std::clamp(i, 0, mesh->cells[static_cast<std::size_t>(a)] - 1);
                idx[static_cast<std::size_t>(a)] = i;
            }
            const int lidx = (idx[2] * mesh->cells[1] + idx[1]) * mesh->cells[0] + idx[0];
            const int e = mesh->element_of[static_cast<std::size_t>(lidx)];
            return e >= 0 ? (*values)[static_cast<std::size_t>(e)] : -1.0;
        };
    } else if (c.scenario == "droplets") {
        const double r = c.droplet_radius;
        const double w = std::sqrt(2.0) * c.model.Cn;
        const auto c1 = c.droplet_center1, c2 = c.droplet_center2;
        const int dim = c.dim;
        s.c0 = [r, w, c1, c2, dim](const std::array<double, 3>& x) {
            double d1 = 0.0, d2 = 0.0;
            for (int a = 0; a < dim; ++a) {
                d1 += (x[static_cast<std::size_t>(a)] - c1[static_cast<std::size_t>(a)]) *
                      (x[static_cast<std::size_t>(a)] - c1[static_cast<std::size_t>(a)]);
                d2 += (x[static_cast<std::size_t>(a)] - c2[static_cast<std::size_t>(a)]) *
                      (x[static_cast<std::size_t>(a)] - c2[static_cast<std::size_t>(a)]);
            }
            const double t1 = std::tanh((r - std::sqrt(d1)) / w);
            const double t2 = std::tanh((r - std::sqrt(d2)) / w);
            return std::max({-1.0, t1, t2});
        };
    } else if (c.scenario == "channel" || c.scenario == "uniform") {
        const double v = c.uniform_c0;
        s.c0 = [v](const std::array<double, 3>&) { return v; };
    } else {
        throw ConfigError("unknown scenario '" + c.scenario + "'");
    }
    return s;
}

} // namespace chns
