#include <catch2/catch.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "chns/mesh.hpp"

using namespace chns;

TEST_CASE("single active cell has no interior faces", "[mesh]") {
    VoxelMesh m = build_voxel_mesh({1}, 2, {1, 1, 1}, 1.0);
    REQUIRE(m.n_elements() == 1);
    REQUIRE(m.interior_faces.empty());
    REQUIRE(m.boundary_faces.size() == 4);
    REQUIRE(m.cell_volume() == 1.0);
}

TEST_CASE("two-cell strip connectivity", "[mesh]") {
    VoxelMesh m = build_voxel_mesh({1, 1}, 2, {2, 1, 1}, 0.5);
    REQUIRE(m.n_elements() == 2);
    REQUIRE(m.interior_faces.size() == 1);
    const auto& f = m.interior_faces[0];
    // normal +e_x from the left cell into the right cell
    CHECK(f.minus == 0);
    CHECK(f.plus == 1);
    CHECK(f.axis == 0);
    CHECK(m.boundary_faces.size() == 6);
    CHECK(m.face_area() == 0.5);
    CHECK(m.cell_volume() == 0.25);
}

TEST_CASE("empty mask rejected", "[mesh]") {
    CHECK_THROWS_AS(build_voxel_mesh({0, 0}, 2, {2, 1, 1}, 1.0), GeometryError);
    CHECK_THROWS_AS(build_voxel_mesh({1, 1, 1}, 2, {2, 1, 1}, 1.0), GeometryError);  // size mismatch
}

TEST_CASE("torus mask matches brute-force point test", "[mesh]") {
    const int n = 32;
    const auto mask = mask_torus(n);
    VoxelMesh m = build_voxel_mesh(mask, 3, {n, n, n}, 1.0 / n);
    // independent re-count straight from the inequality
    int count = 0;
    const double h = 1.0 / n;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double x = (i + 0.5) * h, y = (j + 0.5) * h, z = (k + 0.5) * h;
                const double rad = std::sqrt((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)) - 0.35;
                if (rad * rad + (z - 0.5) * (z - 0.5) < 0.15 * 0.15) ++count;
            }
    REQUIRE(count > 0);
    CHECK(m.n_elements() == count);
}

TEST_CASE("neighbor lookup is symmetric and faces partition", "[mesh]") {
    const auto mask = mask_torus(12);
    VoxelMesh m = build_voxel_mesh(mask, 3, {12, 12, 12}, 1.0 / 12);
    for (const auto& f : m.interior_faces) {
        CHECK(m.neighbor(f.minus, f.axis, 1) == f.plus);
        CHECK(m.neighbor(f.plus, f.axis, 0) == f.minus);
        CHECK(f.minus < f.plus);
    }
    // each (element, axis, side) slot appears exactly once across both face lists
    std::set<std::array<int, 3>> seen;
    for (const auto& f : m.interior_faces) {
        CHECK(seen.insert({f.minus, f.axis, 1}).second);
        CHECK(seen.insert({f.plus, f.axis, 0}).second);
    }
    for (const auto& f : m.boundary_faces)
        CHECK(seen.insert({f.element, f.axis, f.orientation > 0 ? 1 : 0}).second);
    CHECK(seen.size() == static_cast<std::size_t>(2 * m.dim * m.n_elements()));
    // total active volume equals h^dim times the cell count
    CHECK(m.cell_volume() * m.n_elements() ==
          Approx(m.n_elements() / (12.0 * 12.0 * 12.0)).epsilon(1e-14));
}

TEST_CASE("closed system tags everything wall", "[mesh]") {
    VoxelMesh m = build_voxel_mesh(mask_box({4, 4, 1}), 2, {4, 4, 1}, 0.25);
    classify_boundary(m, {});
    for (const auto& f : m.boundary_faces) CHECK(f.tag == FaceTag::Wall);
}

TEST_CASE("channel classification left inflow right outflow", "[mesh]") {
    VoxelMesh m = build_voxel_mesh(mask_box({4, 3, 1}), 2, {4, 3, 1}, 0.25);
    BoundarySpec spec;
    spec.inflow = {{0, 0.0}};
    spec.outflow = {{0, 1.0}};
    classify_boundary(m, spec);
    int n_in = 0, n_out = 0, n_wall = 0;
    for (const auto& f : m.boundary_faces) {
        if (f.tag == FaceTag::Inflow) {
            ++n_in;
            CHECK(f.axis == 0);
            CHECK(f.orientation == -1);
        } else if (f.tag == FaceTag::Outflow) {
            ++n_out;
            CHECK(f.axis == 0);
            CHECK(f.orientation == +1);
        } else {
            ++n_wall;
        }
    }
    CHECK(n_in == 3);
    CHECK(n_out == 3);
    CHECK(n_wall == 8);
}

TEST_CASE("plane through the interior is rejected", "[mesh]") {
    VoxelMesh m = build_voxel_mesh(mask_box({4, 4, 1}), 2, {4, 4, 1}, 0.25);
    BoundarySpec spec;
    spec.inflow = {{0, 0.5}};  // lattice plane 2 of 4: interior
    CHECK_THROWS_AS(classify_boundary(m, spec), SpecError);
    spec.inflow = {{0, 0.1}};  // off-lattice
    CHECK_THROWS_AS(classify_boundary(m, spec), SpecError);
}

TEST_CASE("micro mask: inflow face count equals active cells on the x=0 plane", "[mesh]") {
    const std::array<int, 3> counts = {24, 16, 1};
    const auto mask = mask_micro(counts, 2, 4, 8, 4);
    VoxelMesh m = build_voxel_mesh(mask, 2, counts, 1.0 / 24);
    BoundarySpec spec;
    spec.inflow = {{0, 0.0}};
    spec.outflow = {{0, 1.0}};
    classify_boundary(m, spec);
    int col0 = 0;
    for (int j = 0; j < counts[1]; ++j) col0 += mask[static_cast<std::size_t>(j) * 24] ? 1 : 0;
    int n_in = 0;
    for (const auto& f : m.boundary_faces) n_in += f.tag == FaceTag::Inflow;
    CHECK(n_in == col0);
    CHECK(col0 == 16);  // buffer keeps the whole inlet column open
}

TEST_CASE("face measure is h^(dim-1)", "[mesh]") {
    VoxelMesh m2 = build_voxel_mesh(mask_box({2, 2, 1}), 2, {2, 2, 1}, 0.25);
    CHECK(face_measure(m2) == 0.25);
    VoxelMesh m3a = build_voxel_mesh(mask_box({2, 2, 2}), 3, {2, 2, 2}, 0.1);
    CHECK(face_measure(m3a) == Approx(0.01).epsilon(1e-14));
    VoxelMesh m3b = build_voxel_mesh(mask_box({2, 2, 2}), 3, {2, 2, 2}, 1.0 / 64);
    CHECK(face_measure(m3b) == Approx(1.0 / 4096).epsilon(1e-14));
}

TEST_CASE("isolated active cell is allowed", "[mesh]") {
    // two active cells separated by a solid one: no interior faces
    VoxelMesh m = build_voxel_mesh({1, 0, 1}, 2, {3, 1, 1}, 1.0);
    CHECK(m.n_elements() == 2);
    CHECK(m.interior_faces.empty());
    CHECK(m.boundary_faces.size() == 8);
}

TEST_CASE("mask file round trip", "[mesh]") {
    MaskData d;
    d.dim = 2;
    d.counts = {3, 2, 1};
    d.h = 0.125;
    d.mask = {1, 0, 1, 1, 1, 0};
    const std::string path = "test_mask_roundtrip.mask";
    write_mask(path, d);
    const MaskData r = read_mask(path);
    CHECK(r.dim == d.dim);
    CHECK(r.counts == d.counts);
    CHECK(r.h == d.h);
    CHECK(r.mask == d.mask);
    std::remove(path.c_str());
}
