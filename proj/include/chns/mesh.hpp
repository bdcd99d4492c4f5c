#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chns/errors.hpp"

namespace chns {

enum class FaceTag : std::uint8_t { Wall = 0, Inflow = 1, Outflow = 2 };

inline const char* to_string(FaceTag t) {
    switch (t) {
        case FaceTag::Wall: return "wall";
        case FaceTag::Inflow: return "inflow";
        case FaceTag::Outflow: return "outflow";
    }
    return "?";
}

/// Interior face shared by two active cells. The unit normal is +e_axis and
/// points from `minus` into `plus`; element ordering guarantees minus < plus.
struct InteriorFace {
    int minus = -1;
    int plus = -1;
    int axis = 0;
};

/// Boundary face of an active cell. orientation +1 means the face sits on the
/// high-coordinate side of the cell (outward normal +e_axis), -1 the low side.
struct BoundaryFace {
    int element = -1;
    int axis = 0;
    int orientation = +1;
    FaceTag tag = FaceTag::Wall;
};

/// Uniform axis-aligned voxel mesh over the active cells of a lattice mask.
/// Lattice storage is row-major with x fastest: idx = (k*ny + j)*nx + i.
struct VoxelMesh {
    int dim = 2;
    std::array<int, 3> cells = {1, 1, 1};
    double h = 1.0;
    std::vector<std::uint8_t> active;
    std::vector<int> elements;        // element -> lattice index
    std::vector<int> element_of;      // lattice index -> element, -1 if solid
    std::vector<InteriorFace> interior_faces;
    std::vector<BoundaryFace> boundary_faces;
    // element -> [axis*2 + side] -> neighbor element (-1 at boundary faces);
    // side 0 is the low-coordinate face, side 1 the high one.
    std::vector<std::array<int, 6>> neighbors;

    int n_elements() const { return static_cast<int>(elements.size()); }

    double cell_volume() const { return dim == 2 ? h * h : h * h * h; }

    double face_area() const { return dim == 2 ? h : h * h; }

    std::size_t lattice_size() const {
        return static_cast<std::size_t>(cells[0]) * static_cast<std::size_t>(cells[1]) *
               static_cast<std::size_t>(cells[2]);
    }

    std::array<int, 3> cell_coords(int element) const {
        const int idx = elements[static_cast<std::size_t>(element)];
        const int i = idx % cells[0];
        const int j = (idx / cells[0]) % cells[1];
        const int k = idx / (cells[0] * cells[1]);
        return {i, j, k};
    }

    /// Low corner of the element's cube in physical coordinates.
    std::array<double, 3> cell_origin(int element) const {
        const auto c = cell_coords(element);
        return {c[0] * h, c[1] * h, c[2] * h};
    }

    std::array<double, 3> cell_center(int element) const {
        auto o = cell_origin(element);
        for (int a = 0; a < dim; ++a) o[static_cast<std::size_t>(a)] += 0.5 * h;
        return o;
    }

    int neighbor(int element, int axis, int side) const {
        return neighbors[static_cast<std::size_t>(element)][static_cast<std::size_t>(axis * 2 + side)];
    }

    /// Physical coordinates of a point given by reference coordinates in an element.
    std::array<double, 3> map_point(int element, const std::array<double, 3>& ref) const {
        auto o = cell_origin(element);
        for (int a = 0; a < dim; ++a) o[static_cast<std::size_t>(a)] += h * ref[static_cast<std::size_t>(a)];
        return o;
    }
};

/// Selects one bounding-box plane of the lattice, e.g. {axis=0, coordinate=0.0}
/// for the x=0 plane. Only planes coinciding with the box extremes are valid.
struct PlaneSelector {
    int axis = 0;
    double coordinate = 0.0;
};

/// Static inflow/outflow plane selection; all remaining boundary faces are walls.
struct BoundarySpec {
    std::vector<PlaneSelector> inflow;
    std::vector<PlaneSelector> outflow;
};

inline VoxelMesh build_voxel_mesh(const std::vector<std::uint8_t>& mask, int dim,
                                  std::array<int, 3> counts, double h) {
    if (dim != 2 && dim != 3) throw GeometryError("build_voxel_mesh: dim must be 2 or 3");
    if (dim == 2) counts[2] = 1;
    if (counts[0] < 1 || counts[1] < 1 || counts[2] < 1)
        throw GeometryError("build_voxel_mesh: cell counts must be positive");
    if (h <= 0.0) throw GeometryError("build_voxel_mesh: h must be positive");
    const std::size_t total = static_cast<std::size_t>(counts[0]) *
                              static_cast<std::size_t>(counts[1]) *
                              static_cast<std::size_t>(counts[2]);
    if (mask.size() != total) throw GeometryError("build_voxel_mesh: mask size mismatch");

    VoxelMesh m;
    m.dim = dim;
    m.cells = counts;
    m.h = h;
    m.active = mask;
    m.element_of.assign(total, -1);
    for (std::size_t idx = 0; idx < total; ++idx) {
        if (mask[idx]) {
            m.element_of[idx] = static_cast<int>(m.elements.size());
            m.elements.push_back(static_cast<int>(idx));
        }
    }
    if (m.elements.empty()) throw GeometryError("build_voxel_mesh: mask has no active cells");

    const int nx = counts[0], ny = counts[1], nz = counts[2];
    m.neighbors.assign(m.elements.size(), {-1, -1, -1, -1, -1, -1});
    for (int e = 0; e < m.n_elements(); ++e) {
        const auto c = m.cell_coords(e);
        const std::array<int, 3> n = {nx, ny, nz};
        for (int axis = 0; axis < dim; ++axis) {
            for (int side = 0; side < 2; ++side) {
                auto cc = c;
                cc[static_cast<std::size_t>(axis)] += (side == 0 ? -1 : +1);
                int nb = -1;
                if (cc[static_cast<std::size_t>(axis)] >= 0 &&
                    cc[static_cast<std::size_t>(axis)] < n[static_cast<std::size_t>(axis)]) {
                    const int lidx = (cc[2] * ny + cc[1]) * nx + cc[0];
                    nb = m.element_of[static_cast<std::size_t>(lidx)];
                }
                m.neighbors[static_cast<std::size_t>(e)][static_cast<std::size_t>(axis * 2 + side)] = nb;
                if (nb < 0) {
                    m.boundary_faces.push_back({e, axis, side == 0 ? -1 : +1, FaceTag::Wall});
                } else if (side == 1) {
                    // emit each interior face once, from its low-side cell;
                    // x-fastest ordering makes that cell the smaller element index
                    m.interior_faces.push_back({e, nb, axis});
                }
            }
        }
    }
    return m;
}

/// Applies inflow/outflow plane selectors; every other boundary face stays Wall.
inline void classify_boundary(VoxelMesh& mesh, const BoundarySpec& spec) {
    for (auto& f : mesh.boundary_faces) f.tag = FaceTag::Wall;

    auto apply = [&mesh](const PlaneSelector& sel, FaceTag tag) {
        if (sel.axis < 0 || sel.axis >= mesh.dim)
            throw SpecError("classify_boundary: selector axis out of range");
        const int n = mesh.cells[static_cast<std::size_t>(sel.axis)];
        const double t = sel.coordinate / mesh.h;
        const int plane = static_cast<int>(std::lround(t));
        if (std::abs(t - plane) > 1e-9)
            throw SpecError("classify_boundary: plane does not lie on the lattice");
        if (plane != 0 && plane != n)
            throw SpecError("classify_boundary: plane selects non-boundary faces");
        const int orientation = (plane == 0) ? -1 : +1;
        const int cell_pos = (plane == 0) ? 0 : n - 1;
        std::size_t hits = 0;
        for (auto& f : mesh.boundary_faces) {
            if (f.axis != sel.axis || f.orientation != orientation) continue;
            const auto c = mesh.cell_coords(f.element);
            if (c[static_cast<std::size_t>(sel.axis)] != cell_pos) continue;
            if (f.tag != FaceTag::Wall)
                throw SpecError("classify_boundary: selectors overlap on a face");
            f.tag = tag;
            ++hits;
        }
        if (hits == 0) throw SpecError("classify_boundary: plane selects no boundary faces");
    };

    for (const auto& sel : spec.inflow) apply(sel, FaceTag::Inflow);
    for (const auto& sel : spec.outflow) apply(sel, FaceTag::Outflow);
}

inline double face_measure(const VoxelMesh& mesh) { return mesh.face_area(); }

// ---------------------------------------------------------------------------
// Analytic mask generators
// ---------------------------------------------------------------------------

/// Fully active box.
inline std::vector<std::uint8_t> mask_box(std::array<int, 3> counts) {
    return std::vector<std::uint8_t>(static_cast<std::size_t>(counts[0]) *
                                         static_cast<std::size_t>(counts[1]) *
                                         static_cast<std::size_t>(counts[2]),
                                     1);
}

/// Toroidal pipe in the unit cube: active cells are those whose centers satisfy
/// (sqrt((x-1/2)^2 + (y-1/2)^2) - R)^2 + (z-1/2)^2 < a^2.
inline std::vector<std::uint8_t> mask_torus(int n, double R = 0.35, double a = 0.15) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n * n, 0);
    const double h = 1.0 / n;
    std::size_t idx = 0;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i, ++idx) {
                const double x = (i + 0.5) * h, y = (j + 0.5) * h, z = (k + 0.5) * h;
                const double r = std::sqrt((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)) - R;
                mask[idx] = (r * r + (z - 0.5) * (z - 0.5) < a * a) ? 1 : 0;
            }
    return mask;
}

/// Micro-structure pattern: a fully open buffer of `buffer` columns at low x,
/// then a periodic array of solid pillars (period `period`, size `size` cells).
inline std::vector<std::uint8_t> mask_micro(std::array<int, 3> counts, int dim, int buffer,
                                            int period, int size) {
    if (period < 2 || size < 1 || size >= period)
        throw GeometryError("mask_micro: need 1 <= size < period");
    if (dim == 2) counts[2] = 1;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(counts[0]) *
                                       static_cast<std::size_t>(counts[1]) *
                                       static_cast<std::size_t>(counts[2]),
                                   1);
    std::size_t idx = 0;
    for (int k = 0; k < counts[2]; ++k)
        for (int j = 0; j < counts[1]; ++j)
            for (int i = 0; i < counts[0]; ++i, ++idx) {
                if (i < buffer) continue;
                const bool px = ((i - buffer) % period) < size;
                const bool py = (j % period) < size;
                const bool pz = dim == 3 ? (k % period) < size : true;
                if (px && py && pz) mask[idx] = 0;
            }
    return mask;
}

// ---------------------------------------------------------------------------
// Mask file format: ASCII header "chnsmask dim nx ny [nz] h" on the first line,
// then exactly nx*ny*nz bytes of '0'/'1' in row-major order (x fastest).
// ---------------------------------------------------------------------------

struct MaskData {
    int dim = 2;
    std::array<int, 3> counts = {1, 1, 1};
    double h = 1.0;
    std::vector<std::uint8_t> mask;
};

inline void write_mask(const std::string& path, const MaskData& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOError("write_mask: cannot open " + path);
    out << "chnsmask " << data.dim << ' ' << data.counts[0] << ' ' << data.counts[1];
    if (data.dim == 3) out << ' ' << data.counts[2];
    char buf[64];
    std::snprintf(buf, sizeof buf, " %.17g\n", data.h);
    out << buf;
    for (auto v : data.mask) out.put(v ? '1' : '0');
    out.put('\n');
    if (!out) throw IOError("write_mask: write failed for " + path);
}

inline MaskData read_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("read_mask: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw IOError("read_mask: missing header");
    std::istringstream hs(header);
    std::string magic;
    MaskData d;
    hs >> magic >> d.dim;
    if (magic != "chnsmask" || (d.dim != 2 && d.dim != 3))
        throw IOError("read_mask: bad header in " + path);
    hs >> d.counts[0] >> d.counts[1];
    if (d.dim == 3) hs >> d.counts[2];
    else d.counts[2] = 1;
    hs >> d.h;
    if (!hs || d.counts[0] < 1 || d.counts[1] < 1 || d.counts[2] < 1 || d.h <= 0.0)
        throw IOError("read_mask: bad header in " + path);
    const std::size_t total = static_cast<std::size_t>(d.counts[0]) *
                              static_cast<std::size_t>(d.counts[1]) *
                              static_cast<std::size_t>(d.counts[2]);
    d.mask.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        const int c = in.get();
        if (c == '0') d.mask[i] = 0;
        else if (c == '1') d.mask[i] = 1;
        else throw IOError("read_mask: truncated or invalid mask body");
    }
    return d;
}

} // namespace chns
