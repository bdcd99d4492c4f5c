#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "chns/field.hpp"
#include "support/oracle.hpp"

using namespace chns;

namespace {

VoxelMesh unit_box_2d(int n, double h = 0.0) {
    return build_voxel_mesh(mask_box({n, n, 1}), 2, {n, n, 1}, h > 0 ? h : 1.0 / n);
}

DGField random_field(const DGSpace& sp, int nc, unsigned seed, double scale = 1.0) {
    DGField f(sp, nc);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& v : f.coeffs) v = dist(rng);
    return f;
}

} // namespace

TEST_CASE("projection of a constant gives unit averages and zero higher modes", "[dg]") {
    VoxelMesh mesh = unit_box_2d(4);
    DGSpace sp(mesh, 1);
    DGField f = project_l2(sp, [](const std::array<double, 3>&) { return 1.0; });
    for (int e = 0; e < f.n_elements; ++e) {
        CHECK(cell_average(f, e) == Approx(1.0).margin(1e-14));
        for (int m = 1; m < sp.n_modes; ++m) CHECK(f.coeff(e, 0, m) == Approx(0.0).margin(1e-14));
    }
}

TEST_CASE("projection reproduces polynomials of the space", "[dg]") {
    VoxelMesh mesh = build_voxel_mesh({1}, 2, {1, 1, 1}, 1.0);
    SECTION("linear, r=1") {
        DGSpace sp(mesh, 1);
        DGField f = project_l2(sp, [](const std::array<double, 3>& x) { return x[0]; });
        CHECK(eval(sp, f, 0, {0.25, 0.5, 0.0}) == Approx(0.25).margin(1e-13));
    }
    SECTION("quadratic, r=2") {
        DGSpace sp(mesh, 2);
        DGField f = project_l2(sp, [](const std::array<double, 3>& x) { return x[0] * x[0]; });
        CHECK(eval(sp, f, 0, {0.5, 0.5, 0.0}) == Approx(0.25).margin(1e-13));
    }
}

TEST_CASE("eval on hand-set modes", "[dg]") {
    VoxelMesh mesh = build_voxel_mesh({1}, 2, {1, 1, 1}, 1.0);
    DGSpace sp(mesh, 1);
    SECTION("constant field") {
        DGField f(sp, 1);
        f.coeff(0, 0, 0) = 0.3;
        CHECK(eval(sp, f, 0, {0.77, 0.13, 0.0}) == Approx(0.3).margin(1e-15));
    }
    SECTION("linear field, average 0.8, corner spread 0.4") {
        // 0.8 + a*P1(x) with a*sqrt(3) = 0.4
        DGField f(sp, 1);
        f.coeff(0, 0, 0) = 0.8;
        f.coeff(0, 0, 1) = 0.4 / std::sqrt(3.0);
        CHECK(eval(sp, f, 0, {1.0, 0.5, 0.0}) == Approx(1.2).margin(1e-13));
        CHECK(eval(sp, f, 0, {0.0, 0.5, 0.0}) == Approx(0.4).margin(1e-13));
    }
    SECTION("element out of range") {
        DGField f(sp, 1);
        CHECK_THROWS_AS(eval(sp, f, 3, {0.5, 0.5, 0.0}), std::out_of_range);
    }
}

TEST_CASE("cell averages", "[dg]") {
    VoxelMesh mesh = unit_box_2d(2);
    DGSpace sp(mesh, 1);
    SECTION("constant") {
        DGField f = project_l2(sp, [](const std::array<double, 3>&) { return 0.7; });
        CHECK(cell_average(f, 2) == Approx(0.7).margin(1e-14));
    }
    SECTION("pure linear mode leaves the average untouched") {
        DGField f(sp, 1);
        f.coeff(1, 0, 1) = 0.9;
        CHECK(cell_average(f, 1) == 0.0);
    }
    SECTION("random field matches brute-force quadrature") {
        DGField f = random_field(sp, 1, 7);
        const oracle::Basis B(2, 1);
        for (int e = 0; e < f.n_elements; ++e) {
            double avg = 0.0;
            for (const auto& q : oracle::cell_points(2, 4))
                avg += q.w * oracle::field_value(f, B, e, 0, q.ref);
            CHECK(cell_average(f, e) == Approx(avg).margin(1e-13));
        }
    }
}

TEST_CASE("face traces, averages and jumps", "[dg]") {
    VoxelMesh mesh = build_voxel_mesh({1, 1}, 2, {2, 1, 1}, 0.5);
    DGSpace sp(mesh, 1);
    const InteriorFace& face = mesh.interior_faces[0];

    SECTION("continuous field has zero jump") {
        // f(x) = x globally: cell 0 is x in [0,0.5], cell 1 is [0.5,1]
        DGField f = project_l2(sp, [](const std::array<double, 3>& x) { return x[0]; });
        for (std::size_t q = 0; q < sp.face[0][0].size(); ++q) {
            const auto [avg, jump] = avg_jump(sp, f, face, q);
            CHECK(jump == Approx(0.0).margin(1e-13));
            CHECK(avg == Approx(0.5).margin(1e-13));
        }
    }
    SECTION("piecewise constants 1 / -1") {
        DGField f(sp, 1);
        f.coeff(0, 0, 0) = 1.0;
        f.coeff(1, 0, 0) = -1.0;
        const auto [avg, jump] = avg_jump(sp, f, face, 0);
        CHECK(avg == Approx(0.0).margin(1e-15));
        CHECK(jump == Approx(2.0).margin(1e-15));
    }
    SECTION("hand-set linear modes match hand evaluation") {
        DGField f(sp, 1);
        f.coeff(0, 0, 0) = 0.25;
        f.coeff(0, 0, 1) = 0.5;  // trace at local x=1: 0.25 + 0.5*sqrt(3)
        f.coeff(1, 0, 0) = -0.75;
        f.coeff(1, 0, 1) = 0.125;  // trace at local x=0: -0.75 - 0.125*sqrt(3)
        const double tm = 0.25 + 0.5 * std::sqrt(3.0);
        const double tp = -0.75 - 0.125 * std::sqrt(3.0);
        const auto [avg, jump] = avg_jump(sp, f, face, 1);
        CHECK(avg == Approx(0.5 * (tm + tp)).margin(1e-13));
        CHECK(jump == Approx(tm - tp).margin(1e-13));
    }
    SECTION("boundary avg_jump degenerates to the trace") {
        DGField f = project_l2(sp, [](const std::array<double, 3>& x) { return x[0] + 1.0; });
        const BoundaryFace* left = nullptr;
        for (const auto& b : mesh.boundary_faces)
            if (b.axis == 0 && b.orientation == -1) left = &b;
        REQUIRE(left != nullptr);
        const auto [avg, jump] = avg_jump(sp, f, *left, 0);
        CHECK(avg == Approx(1.0).margin(1e-13));
        CHECK(jump == Approx(1.0).margin(1e-13));
    }
}

TEST_CASE("broken gradient", "[dg]") {
    VoxelMesh mesh = unit_box_2d(2);
    DGSpace sp(mesh, 1);
    SECTION("constant field has zero gradient") {
        DGField f = project_l2(sp, [](const std::array<double, 3>&) { return 4.0; });
        DGField g = broken_gradient(sp, f);
        for (double v : g.coeffs) CHECK(v == Approx(0.0).margin(1e-14));
    }
    SECTION("x + 2y has gradient (1,2)") {
        DGField f = project_l2(sp, [](const std::array<double, 3>& x) { return x[0] + 2.0 * x[1]; });
        DGField g = broken_gradient(sp, f);
        for (int e = 0; e < g.n_elements; ++e) {
            CHECK(eval(sp, g, e, {0.3, 0.6, 0.0}, 0) == Approx(1.0).margin(1e-12));
            CHECK(eval(sp, g, e, {0.3, 0.6, 0.0}, 1) == Approx(2.0).margin(1e-12));
        }
    }
    SECTION("d/dx of x^2 is 2x at quadrature points, r=2") {
        VoxelMesh single = build_voxel_mesh({1}, 2, {1, 1, 1}, 1.0);
        DGSpace sp2(single, 2);
        DGField f = project_l2(sp2, [](const std::array<double, 3>& x) { return x[0] * x[0]; });
        DGField g = broken_gradient(sp2, f);
        for (std::size_t q = 0; q < sp2.vol.size(); ++q) {
            const double x = sp2.vol.points[q][0];
            CHECK(eval_at(g, 0, 0, sp2.vol, q) == Approx(2.0 * x).margin(1e-12));
        }
    }
}

TEST_CASE("divergence of a linear vector field", "[dg]") {
    VoxelMesh mesh = unit_box_2d(2);
    DGSpace sp(mesh, 1);
    DGField v = project_l2_vector(sp, [](const std::array<double, 3>& x) {
        return std::array<double, 3>{3.0 * x[0], -1.0 * x[1], 0.0};
    });
    DGField d = divergence(sp, v);
    for (int e = 0; e < d.n_elements; ++e)
        CHECK(eval(sp, d, e, {0.2, 0.8, 0.0}) == Approx(2.0).margin(1e-12));
}

TEST_CASE("quadrature exactness to degree 2r+1", "[dg]") {
    VoxelMesh mesh = build_voxel_mesh({1}, 2, {1, 1, 1}, 1.0);
    for (int r : {1, 2}) {
        DGSpace sp(mesh, r);
        for (int px = 0; px <= 2 * r + 1; ++px) {
            double integral = 0.0;
            for (std::size_t q = 0; q < sp.vol.size(); ++q)
                integral += sp.vol.weights[q] * std::pow(sp.vol.points[q][0], px) *
                            std::pow(sp.vol.points[q][1], 2 * r + 1 - px);
            const double exact = 1.0 / (px + 1) / (2 * r + 1 - px + 1);
            CHECK(integral == Approx(exact).epsilon(1e-13));
        }
    }
}

TEST_CASE("projection idempotence on random fields", "[dg]") {
    VoxelMesh mesh = unit_box_2d(3);
    for (int r : {1, 2}) {
        DGSpace sp(mesh, r);
        DGField f = random_field(sp, 1, 10 + static_cast<unsigned>(r));
        DGField g = project_l2(sp, [&](const std::array<double, 3>& x) {
            // locate the element containing x and evaluate f there
            int i = std::min(2, static_cast<int>(x[0] * 3.0));
            int j = std::min(2, static_cast<int>(x[1] * 3.0));
            const int e = mesh.element_of[static_cast<std::size_t>(j * 3 + i)];
            const std::array<double, 3> ref = {x[0] * 3.0 - i, x[1] * 3.0 - j, 0.0};
            return eval(sp, f, e, ref);
        });
        for (std::size_t i = 0; i < f.coeffs.size(); ++i)
            CHECK(g.coeffs[i] == Approx(f.coeffs[i]).margin(1e-12));
    }
}

TEST_CASE("trace consistency with interior evaluation", "[dg]") {
    VoxelMesh mesh = unit_box_2d(3);
    DGSpace sp(mesh, 2);
    DGField f = random_field(sp, 1, 21);
    for (const auto& face : mesh.interior_faces) {
        for (std::size_t q = 0; q < sp.face[0][0].size(); ++q) {
            const auto& tab = sp.face[static_cast<std::size_t>(face.axis)][1];
            const double tr = face_trace(sp, f, face.minus, face.axis, 1, q);
            CHECK(tr == Approx(eval(sp, f, face.minus, tab.points[q])).margin(1e-13));
        }
    }
}

TEST_CASE("droplet profile projection matches refined quadrature averages", "[dg]") {
    // resolved interface: Cn a few cells wide on a 16^3 mesh
    const int n = 16;
    VoxelMesh mesh = build_voxel_mesh(mask_box({n, n, n}), 3, {n, n, n}, 1.0 / n);
    DGSpace sp(mesh, 1);
    const double cn = 0.15;
    auto f = [cn](const std::array<double, 3>& x) {
        const double d = std::sqrt((x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5) +
                                   (x[2] - 0.5) * (x[2] - 0.5));
        return std::tanh((0.25 - d) / (std::sqrt(2.0) * cn));
    };
    DGField proj = project_l2(sp, f);
    // oracle: 5-point Gauss per axis on each cell
    double worst = 0.0;
    for (int e = 0; e < proj.n_elements; ++e) {
        double avg = 0.0;
        for (const auto& q : oracle::cell_points(3, 5)) avg += q.w * f(mesh.map_point(e, q.ref));
        worst = std::max(worst, std::abs(avg - cell_average(proj, e)));
    }
    CHECK(worst < 1e-5);  // quadrature-order agreement on the resolved profile
}
