#include <catch2/catch.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chns/config.hpp"
#include "chns/scenario.hpp"
#include "chns/simulation.hpp"
#include "chns/vtk.hpp"

using namespace chns;

namespace {

std::string minimal_closed_config() {
    return "mesh.source = box\n"
           "mesh.dim = 2\n"
           "mesh.nx = 8\n"
           "time.tau = 1e-3\n"
           "time.steps = 2\n"
           "scenario.name = spinodal\n"
           "scenario.seed = 7\n"
           "output.dir = test_out\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TmpDir {
    std::filesystem::path path;
    explicit TmpDir(const std::string& name) : path(name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TmpDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_CASE("config: minimal closed box fills defaults", "[app]") {
    const SimulationConfig c = parse_config(minimal_closed_config());
    CHECK(c.nx == 8);
    CHECK(c.ny == 8);             // defaults to nx
    CHECK(c.h == Approx(0.125));  // 1/nx
    CHECK(c.model.Cn == Approx(0.125));  // defaults to h
    CHECK(c.model.rho_ref == Approx(800.0));  // min(rho_a, rho_b)
    CHECK(c.eps1 == 1e-7);
    CHECK(c.eps2 == 1e-7);
    CHECK(c.flux_limiter);
    CHECK(c.slope_limiter);
    CHECK(c.scheme == PressureScheme::ConstantCoefficient);
}

TEST_CASE("config: round trip through serialization is the identity", "[app]") {
    const std::string text =
        "mesh.source = box\nmesh.dim = 2\nmesh.nx = 64\n"
        "time.tau = 0x1.0624dd2f1a9fcp-10\n"  // 1e-3 in hex-float
        "time.steps = 500\n"
        "model.rho_a = 1200\nmodel.rho_b = 800\nmodel.re = 1\nmodel.ca = 0.1\nmodel.pe = 1\n"
        "penalty.diff = 2\npenalty.ellip = 8\n"
        "scenario.name = spinodal\nscenario.seed = 42\n";
    const SimulationConfig c1 = parse_config(text);
    CHECK(c1.tau == 1e-3);  // hex float parsed exactly
    const std::string canon = serialize_config(c1);
    const SimulationConfig c2 = parse_config(canon);
    CHECK(serialize_config(c2) == canon);
}

TEST_CASE("config: errors", "[app]") {
    CHECK_THROWS_AS(parse_config("time.tau = 0\nscenario.name = spinodal\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("time.tau = 1e-3\nbogus.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("time.tau = 1e-3\nscenario.name = vortex\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("time.tau = 1e-3\ntime.tau = 2e-3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("this line has no equals\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("space.degree = 3\ntime.tau = 1e-3\n"), ConfigError);
}

TEST_CASE("scenario: spinodal is seeded and deterministic", "[app]") {
    SimulationConfig c = parse_config(minimal_closed_config());
    Scenario s1 = build_scenario(c);
    Scenario s2 = build_scenario(c);
    for (int e = 0; e < s1.mesh.n_elements(); ++e) {
        const auto x = s1.mesh.cell_center(e);
        const double v1 = s1.c0(x), v2 = s2.c0(x);
        CHECK(v1 == v2);
        CHECK((v1 == 1.0 || v1 == -1.0));
    }
    c.seed = 8;
    Scenario s3 = build_scenario(c);
    int diffs = 0;
    for (int e = 0; e < s1.mesh.n_elements(); ++e) {
        const auto x = s1.mesh.cell_center(e);
        diffs += s1.c0(x) != s3.c0(x);
    }
    CHECK(diffs > 0);  // different seed, different draw
}

TEST_CASE("scenario: 3D droplet value at the domain center", "[app]") {
    SimulationConfig c;
    c.mesh_source = "box";
    c.dim = 3;
    c.nx = c.ny = c.nz = 8;
    c.h = 1.0 / 8;
    c.scenario = "droplets";
    c.model.Cn = 1.0 / 64.0;
    // paper centers for the 3D variant
    c.droplet_center1 = {0.35, 0.35, 0.35};
    c.droplet_center2 = {0.65, 0.65, 0.65};
    Scenario s = build_scenario(c);
    // both tanh arguments are negative at the center; the nearer droplet wins
    const double d = std::sqrt(3.0) * 0.15;
    const double expected = std::tanh((0.25 - d) / (std::sqrt(2.0) / 64.0));
    CHECK(s.c0({0.5, 0.5, 0.5}) == Approx(expected).margin(1e-12));
    CHECK(expected < 0.0);
    // deep inside a droplet the phase saturates
    CHECK(s.c0({0.35, 0.35, 0.35}) == Approx(1.0).margin(1e-6));
}

TEST_CASE("scenario: channel inflow profile", "[app]") {
    SECTION("3D formula at the midline") {
        auto prof = channel_inflow_profile(3, 1.0);
        const auto v = prof({0.0, 0.5, 0.5});
        CHECK(v[0] == Approx(400.0 * 0.5 * (-0.5) * 0.1 * (-0.1)).margin(1e-12));
        CHECK(v[0] == Approx(1.0).margin(1e-12));
        CHECK(v[1] == 0.0);
    }
    SECTION("2D restatement: unit peak, zero at walls") {
        auto prof = channel_inflow_profile(2, 1.0);
        CHECK(prof({0.0, 0.5, 0.0})[0] == Approx(1.0).margin(1e-12));
        CHECK(prof({0.0, 0.0, 0.0})[0] == Approx(0.0).margin(1e-12));
        CHECK(prof({0.0, 1.0, 0.0})[0] == Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("run: zero steps writes only the initial record", "[app]") {
    TmpDir dir("test_out_zero");
    SimulationConfig c = parse_config(minimal_closed_config());
    c.steps = 0;
    c.output_dir = dir.path.string();
    const RunResult res = run_simulation(c);
    CHECK_FALSE(res.failed);
    CHECK(res.records.size() == 1);
    CHECK(res.records[0].n == 0);
    const std::string csv = read_file(res.observables_path);
    // header + one record line
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("run: CSV line count is steps + 1 plus header", "[app]") {
    TmpDir dir("test_out_lines");
    SimulationConfig c = parse_config(minimal_closed_config());
    c.steps = 3;
    c.output_dir = dir.path.string();
    const RunResult res = run_simulation(c);
    CHECK_FALSE(res.failed);
    CHECK(res.records.size() == 4);
    const std::string csv = read_file(res.observables_path);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("run: checkpoint resume continues bit-exactly", "[app]") {
    TmpDir dir_a("test_out_ckpt_a");
    TmpDir dir_b("test_out_ckpt_b");
    SimulationConfig c = parse_config(minimal_closed_config());
    c.steps = 4;
    c.checkpoint_every = 2;
    c.output_dir = dir_a.path.string();
    const RunResult full = run_simulation(c);
    REQUIRE_FALSE(full.failed);

    const RunResult resumed =
        resume_simulation((dir_a.path / "checkpoint_000002.ckpt").string(), dir_b.path.string());
    REQUIRE_FALSE(resumed.failed);

    // the resumed records for steps 2..4 must equal the original run's
    REQUIRE(resumed.records.size() == 3);
    for (int n = 2; n <= 4; ++n) {
        const auto& a = full.records[static_cast<std::size_t>(n)];
        const auto& b = resumed.records[static_cast<std::size_t>(n - 2)];
        CHECK(a.mean_c == b.mean_c);  // bitwise
        CHECK(a.min_c == b.min_c);
        CHECK(a.max_c == b.max_c);
        CHECK(a.kinetic_energy == b.kinetic_energy);
        CHECK(a.div_norm == b.div_norm);
    }
    // final states are bit-identical
    CHECK(full.final_state.c.coeffs == resumed.final_state.c.coeffs);
    CHECK(full.final_state.u.coeffs == resumed.final_state.u.coeffs);
    CHECK(full.final_state.p.coeffs == resumed.final_state.p.coeffs);

    // and the state blocks of the final checkpoints match byte for byte
    const LoadedCheckpoint ka = load_checkpoint((dir_a.path / "checkpoint_final.ckpt").string());
    const LoadedCheckpoint kb = load_checkpoint((dir_b.path / "checkpoint_final.ckpt").string());
    CHECK(ka.state_blob == kb.state_blob);
}

TEST_CASE("vtk: single cell file parses and round-trips cell averages", "[app]") {
    TmpDir dir("test_out_vtk");
    VoxelMesh mesh = build_voxel_mesh({1}, 2, {1, 1, 1}, 1.0);
    classify_boundary(mesh, {});
    DGSpace sp(mesh, 1);
    StepperConfig scfg;
    Stepper stepper(sp, scfg);
    FlowState s = stepper.initialize(
        [](const std::array<double, 3>&) { return 0.25; },
        [](const std::array<double, 3>&) -> std::array<double, 3> { return {0.5, 0.25, 0}; });
    const std::string path = (dir.path / "single.vtk").string();
    write_vtk(sp, s, path);

    // minimal legacy-VTK structural parse
    std::ifstream in(path);
    REQUIRE(in);
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("# vtk DataFile", 0) == 0);
    std::getline(in, line);  // title
    std::getline(in, line);
    CHECK(line == "ASCII");
    std::getline(in, line);
    CHECK(line == "DATASET UNSTRUCTURED_GRID");
    std::string tok;
    int npoints = 0;
    in >> tok >> npoints;
    REQUIRE(tok == "POINTS");
    CHECK(npoints == 4);
    in >> tok;  // "double"
    for (int p = 0; p < npoints; ++p) {
        double x, y, z;
        in >> x >> y >> z;
        REQUIRE(in);
    }
    int ncells = 0, csize = 0;
    in >> tok >> ncells >> csize;
    REQUIRE(tok == "CELLS");
    CHECK(ncells == 1);
    CHECK(csize == 5);
    for (int i = 0; i < csize; ++i) {
        int v;
        in >> v;
    }
    in >> tok >> ncells;
    REQUIRE(tok == "CELL_TYPES");
    int ctype;
    in >> ctype;
    CHECK(ctype == 8);  // VTK_PIXEL
    in >> tok >> ncells;
    REQUIRE(tok == "CELL_DATA");
    in >> tok >> tok >> tok >> tok;  // SCALARS c_avg double 1
    in >> tok >> tok;                // LOOKUP_TABLE default
    double cavg;
    in >> cavg;
    CHECK(cavg == Approx(cell_average(s.c, 0)).margin(1e-12));
}

TEST_CASE("checkpoint format rejects corrupt files", "[app]") {
    TmpDir dir("test_out_badckpt");
    const std::string path = (dir.path / "bad.ckpt").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT garbage";
    }
    CHECK_THROWS_AS(load_checkpoint(path), IOError);
}

TEST_CASE("mesh from config: torus source forces 3D", "[app]") {
    SimulationConfig c;
    c.mesh_source = "torus";
    c.nx = 12;
    c.scenario = "spinodal";
    c.tau = 1e-3;
    VoxelMesh m = build_mesh_from_config(c);
    CHECK(m.dim == 3);
    CHECK(m.n_elements() > 0);
    for (const auto& f : m.boundary_faces) CHECK(f.tag == FaceTag::Wall);
}
