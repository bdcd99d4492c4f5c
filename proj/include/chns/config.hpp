#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chns/errors.hpp"
#include "chns/forms.hpp"
#include "chns/solvers.hpp"
#include "chns/stepper.hpp"

namespace chns {

/// Full simulation configuration, parsed from flat dotted-key text
/// ("model.pe = 1", one key per line, '#' comments). Unknown keys are
/// rejected; floats parse in decimal or hex-float form.
struct SimulationConfig {
    // mesh
    std::string mesh_source = "box";  // box | torus | micro | file
    std::string mesh_file;
    int dim = 2;
    int nx = 64, ny = 64, nz = 64;
    double h = 0.0;          // 0 -> 1/nx
    int micro_buffer = 8;
    int micro_period = 8;
    int micro_pillar = 4;
    std::string bc_inflow = "none";   // none or comma list of x0,x1,y0,y1,z0,z1
    std::string bc_outflow = "none";

    // space/time
    int degree = 1;
    double tau = 1e-3;
    int steps = 100;

    // model + penalties
    ModelParams model;
    bool rho_ref_set = false;
    bool cn_set = false;
    std::string delta_file;
    PenaltySet penalties;

    // solvers
    SolverConfig ch_solver{KrylovMethod::GMRES, 1e-10, 1e-14, 20000, 50, true};
    SolverConfig momentum_solver{KrylovMethod::BiCGStab, 1e-10, 1e-14, 20000, 30, true};
    SolverConfig pressure_solver{KrylovMethod::CG, 1e-10, 1e-14, 40000, 30, true};
    NewtonConfig newton;

    // limiters
    bool flux_limiter = true;
    bool slope_limiter = true;
    double eps1 = 1e-7;
    double eps2 = 1e-7;
    int limiter_cap = 200;

    // scheme
    PressureScheme scheme = PressureScheme::ConstantCoefficient;

    // scenario
    std::string scenario = "spinodal";  // spinodal | droplets | channel | uniform
    std::uint64_t seed = 42;
    double uniform_c0 = -1.0;
    double droplet_radius = 0.25;
    std::array<double, 3> droplet_center1 = {-1.0, -1.0, -1.0};  // -1 -> dim default
    std::array<double, 3> droplet_center2 = {-1.0, -1.0, -1.0};
    double inflow_peak = 1.0;

    // output
    std::string output_dir = "out";
    std::string observables_file = "observables.csv";
    int vtk_every = 0;
    int checkpoint_every = 0;
    bool limiter_log = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

struct KeyValues {
    std::map<std::string, std::string> kv;
    std::set<std::string> consumed;

    bool has(const std::string& k) const { return kv.count(k) != 0; }

    double get_real(const std::string& k, double dflt) {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        consumed.insert(k);
        const char* s = it->second.c_str();
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        if (end == s || !trim(end).empty())
            throw ConfigError("config: bad real value for key '" + k + "'");
        return v;
    }
    long get_int(const std::string& k, long dflt) {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        consumed.insert(k);
        const char* s = it->second.c_str();
        char* end = nullptr;
        const long v = std::strtol(s, &end, 10);
        if (end == s || !trim(end).empty())
            throw ConfigError("config: bad integer value for key '" + k + "'");
        return v;
    }
    std::string get_str(const std::string& k, const std::string& dflt) {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        consumed.insert(k);
        return it->second;
    }
    bool get_onoff(const std::string& k, bool dflt) {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        consumed.insert(k);
        if (it->second == "on" || it->second == "true" || it->second == "1") return true;
        if (it->second == "off" || it->second == "false" || it->second == "0") return false;
        throw ConfigError("config: expected on/off for key '" + k + "'");
    }
};

inline KeyValues tokenize_config(const std::string& text) {
    KeyValues out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        if (out.kv.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        out.kv[key] = val;
    }
    return out;
}

inline void read_solver(KeyValues& kv, const std::string& prefix, SolverConfig& sc) {
    sc.rtol = kv.get_real(prefix + ".rtol", sc.rtol);
    sc.atol = kv.get_real(prefix + ".atol", sc.atol);
    sc.max_iterations = static_cast<int>(kv.get_int(prefix + ".maxit", sc.max_iterations));
    sc.restart = static_cast<int>(kv.get_int(prefix + ".restart", sc.restart));
    const std::string m = kv.get_str(prefix + ".method", "");
    if (!m.empty()) {
        if (m == "cg") sc.method = KrylovMethod::CG;
        else if (m == "bicgstab") sc.method = KrylovMethod::BiCGStab;
        else if (m == "gmres") sc.method = KrylovMethod::GMRES;
        else throw ConfigError("config: unknown solver method '" + m + "'");
    }
    if (sc.rtol <= 0.0 || sc.atol <= 0.0)
        throw ConfigError("config: solver tolerances for " + prefix + " must be positive");
}

} // namespace detail

inline SimulationConfig parse_config(const std::string& text) {
    auto kv = detail::tokenize_config(text);
    SimulationConfig c;

    c.mesh_source = kv.get_str("mesh.source", c.mesh_source);
    c.mesh_file = kv.get_str("mesh.file", c.mesh_file);
    c.dim = static_cast<int>(kv.get_int("mesh.dim", c.dim));
    c.nx = static_cast<int>(kv.get_int("mesh.nx", c.nx));
    c.ny = static_cast<int>(kv.get_int("mesh.ny", c.nx));
    c.nz = static_cast<int>(kv.get_int("mesh.nz", c.nx));
    c.h = kv.get_real("mesh.h", 0.0);
    c.micro_buffer = static_cast<int>(kv.get_int("mesh.buffer", c.micro_buffer));
    c.micro_period = static_cast<int>(kv.get_int("mesh.period", c.micro_period));
    c.micro_pillar = static_cast<int>(kv.get_int("mesh.pillar", c.micro_pillar));
    c.bc_inflow = kv.get_str("bc.inflow", c.bc_inflow);
    c.bc_outflow = kv.get_str("bc.outflow", c.bc_outflow);

    c.degree = static_cast<int>(kv.get_int("space.degree", c.degree));
    c.tau = kv.get_real("time.tau", c.tau);
    c.steps = static_cast<int>(kv.get_int("time.steps", c.steps));

    if (c.mesh_source == "torus") c.dim = 3;
    if (c.mesh_source == "file") {
        if (c.mesh_file.empty()) throw ConfigError("config: mesh.file required for mesh.source=file");
    } else if (c.mesh_source != "box" && c.mesh_source != "torus" && c.mesh_source != "micro") {
        throw ConfigError("config: unknown mesh.source '" + c.mesh_source + "'");
    }
    if (c.dim != 2 && c.dim != 3) throw ConfigError("config: mesh.dim must be 2 or 3");
    if (c.nx < 1 || c.ny < 1 || (c.dim == 3 && c.nz < 1))
        throw ConfigError("config: mesh cell counts must be positive");
    if (c.h == 0.0) c.h = 1.0 / c.nx;
    if (c.h <= 0.0) throw ConfigError("config: mesh.h must be positive");
    if (c.degree != 1 && c.degree != 2) throw ConfigError("config: space.degree must be 1 or 2");
    if (c.tau <= 0.0) throw ConfigError("config: time.tau must be positive");
    if (c.steps < 0) throw ConfigError("config: time.steps must be >= 0");

    c.model.Pe = kv.get_real("model.pe", c.model.Pe);
    c.cn_set = kv.has("model.cn");
    c.model.Cn = kv.get_real("model.cn", c.h);
    c.model.Re = kv.get_real("model.re", c.model.Re);
    c.model.Ca = kv.get_real("model.ca", c.model.Ca);
    c.model.rho_a = kv.get_real("model.rho_a", c.model.rho_a);
    c.model.rho_b = kv.get_real("model.rho_b", c.model.rho_b);
    c.rho_ref_set = kv.has("model.rho_ref");
    c.model.rho_ref = kv.get_real("model.rho_ref", std::min(c.model.rho_a, c.model.rho_b));
    c.model.theta_deg = kv.get_real("model.theta", c.model.theta_deg);
    c.model.delta = kv.get_real("model.delta", c.model.delta);
    c.model.c_inflow = kv.get_real("model.c_inflow", c.model.c_inflow);
    c.delta_file = kv.get_str("model.delta_file", c.delta_file);
    if (c.model.Pe <= 0 || c.model.Cn <= 0 || c.model.Re <= 0 || c.model.Ca <= 0)
        throw ConfigError("config: dimensionless groups must be positive");
    if (c.model.rho_a <= 0 || c.model.rho_b <= 0 || c.model.rho_ref <= 0)
        throw ConfigError("config: densities must be positive");
    if (c.model.c_inflow < -1.0 || c.model.c_inflow > 1.0)
        throw ConfigError("config: model.c_inflow must lie in [-1,1]");

    c.penalties.diff = kv.get_real("penalty.diff", c.penalties.diff);
    c.penalties.diff_in = kv.get_real("penalty.diff_in", c.penalties.diff_in);
    c.penalties.diff_out = kv.get_real("penalty.diff_out", c.penalties.diff_out);
    c.penalties.ellip = kv.get_real("penalty.ellip", c.penalties.ellip);
    c.penalties.ellip_in = kv.get_real("penalty.ellip_in", c.penalties.ellip_in);
    c.penalties.bvel = kv.get_real("penalty.bvel", c.penalties.bvel);
    for (double s : {c.penalties.diff, c.penalties.diff_in, c.penalties.diff_out,
                     c.penalties.ellip, c.penalties.ellip_in, c.penalties.bvel})
        if (s <= 0.0) throw ConfigError("config: penalty values must be positive");

    detail::read_solver(kv, "solver.ch", c.ch_solver);
    detail::read_solver(kv, "solver.momentum", c.momentum_solver);
    detail::read_solver(kv, "solver.pressure", c.pressure_solver);
    c.newton.tol = kv.get_real("solver.newton.tol", c.newton.tol);
    c.newton.max_iterations = static_cast<int>(kv.get_int("solver.newton.maxit", c.newton.max_iterations));
    c.newton.forcing = kv.get_real("solver.newton.forcing", c.newton.forcing);
    c.newton.adaptive_forcing = kv.get_onoff("solver.newton.adaptive", c.newton.adaptive_forcing);
    if (c.newton.tol <= 0.0) throw ConfigError("config: solver.newton.tol must be positive");

    c.flux_limiter = kv.get_onoff("limiter.flux", c.flux_limiter);
    c.slope_limiter = kv.get_onoff("limiter.slope", c.slope_limiter);
    c.eps1 = kv.get_real("limiter.eps1", c.eps1);
    c.eps2 = kv.get_real("limiter.eps2", c.eps2);
    c.limiter_cap = static_cast<int>(kv.get_int("limiter.cap", c.limiter_cap));
    if (c.eps1 <= 0.0 || c.eps2 <= 0.0) throw ConfigError("config: limiter tolerances must be positive");
    if (c.limiter_cap < 1) throw ConfigError("config: limiter.cap must be >= 1");

    const std::string scheme = kv.get_str("scheme.pressure", "constant");
    if (scheme == "constant") c.scheme = PressureScheme::ConstantCoefficient;
    else if (scheme == "standard") c.scheme = PressureScheme::StandardVariableCoefficient;
    else throw ConfigError("config: scheme.pressure must be constant or standard");

    c.scenario = kv.get_str("scenario.name", c.scenario);
    if (c.scenario != "spinodal" && c.scenario != "droplets" && c.scenario != "channel" &&
        c.scenario != "uniform")
        throw ConfigError("config: unknown scenario '" + c.scenario + "'");
    c.seed = static_cast<std::uint64_t>(kv.get_int("scenario.seed", static_cast<long>(c.seed)));
    c.uniform_c0 = kv.get_real("scenario.c0", c.uniform_c0);
    if (c.uniform_c0 < -1.0 || c.uniform_c0 > 1.0)
        throw ConfigError("config: scenario.c0 must lie in [-1,1]");
    c.droplet_radius = kv.get_real("scenario.radius", c.droplet_radius);
    const std::array<double, 3> d1 = c.dim == 3 ? std::array<double, 3>{0.35, 0.35, 0.35}
                                                : std::array<double, 3>{0.30, 0.30, 0.0};
    const std::array<double, 3> d2 = c.dim == 3 ? std::array<double, 3>{0.65, 0.65, 0.65}
                                                : std::array<double, 3>{0.70, 0.70, 0.0};
    c.droplet_center1 = {kv.get_real("scenario.x1", d1[0]), kv.get_real("scenario.y1", d1[1]),
                         kv.get_real("scenario.z1", d1[2])};
    c.droplet_center2 = {kv.get_real("scenario.x2", d2[0]), kv.get_real("scenario.y2", d2[1]),
                         kv.get_real("scenario.z2", d2[2])};
    c.inflow_peak = kv.get_real("scenario.inflow_peak", c.inflow_peak);

    c.output_dir = kv.get_str("output.dir", c.output_dir);
    c.observables_file = kv.get_str("output.observables", c.observables_file);
    c.vtk_every = static_cast<int>(kv.get_int("output.vtk_every", c.vtk_every));
    c.checkpoint_every = static_cast<int>(kv.get_int("output.checkpoint_every", c.checkpoint_every));
    c.limiter_log = kv.get_onoff("output.limiter_log", c.limiter_log);

    for (const auto& [key, val] : kv.kv)
        if (!kv.consumed.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    return c;
}

namespace detail {

inline std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// Canonical text form; parse(serialize(parse(text))) == parse(text).
inline std::string serialize_config(const SimulationConfig& c) {
    std::ostringstream o;
    auto real = detail::fmt_real;
    o << "mesh.source = " << c.mesh_source << '\n';
    if (!c.mesh_file.empty()) o << "mesh.file = " << c.mesh_file << '\n';
    o << "mesh.dim = " << c.dim << '\n';
    o << "mesh.nx = " << c.nx << '\n' << "mesh.ny = " << c.ny << '\n' << "mesh.nz = " << c.nz << '\n';
    o << "mesh.h = " << real(c.h) << '\n';
    o << "mesh.buffer = " << c.micro_buffer << '\n';
    o << "mesh.period = " << c.micro_period << '\n';
    o << "mesh.pillar = " << c.micro_pillar << '\n';
    o << "bc.inflow = " << c.bc_inflow << '\n';
    o << "bc.outflow = " << c.bc_outflow << '\n';
    o << "space.degree = " << c.degree << '\n';
    o << "time.tau = " << real(c.tau) << '\n';
    o << "time.steps = " << c.steps << '\n';
    o << "model.pe = " << real(c.model.Pe) << '\n';
    o << "model.cn = " << real(c.model.Cn) << '\n';
    o << "model.re = " << real(c.model.Re) << '\n';
    o << "model.ca = " << real(c.model.Ca) << '\n';
    o << "model.rho_a = " << real(c.model.rho_a) << '\n';
    o << "model.rho_b = " << real(c.model.rho_b) << '\n';
    o << "model.rho_ref = " << real(c.model.rho_ref) << '\n';
    o << "model.theta = " << real(c.model.theta_deg) << '\n';
    o << "model.delta = " << real(c.model.delta) << '\n';
    o << "model.c_inflow = " << real(c.model.c_inflow) << '\n';
    if (!c.delta_file.empty()) o << "model.delta_file = " << c.delta_file << '\n';
    o << "penalty.diff = " << real(c.penalties.diff) << '\n';
    o << "penalty.diff_in = " << real(c.penalties.diff_in) << '\n';
    o << "penalty.diff_out = " << real(c.penalties.diff_out) << '\n';
    o << "penalty.ellip = " << real(c.penalties.ellip) << '\n';
    o << "penalty.ellip_in = " << real(c.penalties.ellip_in) << '\n';
    o << "penalty.bvel = " << real(c.penalties.bvel) << '\n';
    auto solver = [&](const std::string& p, const SolverConfig& sc) {
        const char* m = sc.method == KrylovMethod::CG ? "cg"
                        : sc.method == KrylovMethod::BiCGStab ? "bicgstab" : "gmres";
        o << p << ".method = " << m << '\n';
        o << p << ".rtol = " << real(sc.rtol) << '\n';
        o << p << ".atol = " << real(sc.atol) << '\n';
        o << p << ".maxit = " << sc.max_iterations << '\n';
        o << p << ".restart = " << sc.restart << '\n';
    };
    solver("solver.ch", c.ch_solver);
    solver("solver.momentum", c.momentum_solver);
    solver("solver.pressure", c.pressure_solver);
    o << "solver.newton.tol = " << real(c.newton.tol) << '\n';
    o << "solver.newton.maxit = " << c.newton.max_iterations << '\n';
    o << "solver.newton.forcing = " << real(c.newton.forcing) << '\n';
    o << "solver.newton.adaptive = " << (c.newton.adaptive_forcing ? "on" : "off") << '\n';
    o << "limiter.flux = " << (c.flux_limiter ? "on" : "off") << '\n';
    o << "limiter.slope = " << (c.slope_limiter ? "on" : "off") << '\n';
    o << "limiter.eps1 = " << real(c.eps1) << '\n';
    o << "limiter.eps2 = " << real(c.eps2) << '\n';
    o << "limiter.cap = " << c.limiter_cap << '\n';
    o << "scheme.pressure = "
      << (c.scheme == PressureScheme::ConstantCoefficient ? "constant" : "standard") << '\n';
    o << "scenario.name = " << c.scenario << '\n';
    o << "scenario.seed = " << c.seed << '\n';
    o << "scenario.c0 = " << real(c.uniform_c0) << '\n';
    o << "scenario.radius = " << real(c.droplet_radius) << '\n';
    o << "scenario.x1 = " << real(c.droplet_center1[0]) << '\n';
    o << "scenario.y1 = " << real(c.droplet_center1[1]) << '\n';
    o << "scenario.z1 = " << real(c.droplet_center1[2]) << '\n';
    o << "scenario.x2 = " << real(c.droplet_center2[0]) << '\n';
    o << "scenario.y2 = " << real(c.droplet_center2[1]) << '\n';
    o << "scenario.z2 = " << real(c.droplet_center2[2]) << '\n';
    o << "scenario.inflow_peak = " << real(c.inflow_peak) << '\n';
    o << "output.dir = " << c.output_dir << '\n';
    o << "output.observables = " << c.observables_file << '\n';
    o << "output.vtk_every = " << c.vtk_every << '\n';
    o << "output.checkpoint_every = " << c.checkpoint_every << '\n';
    o << "output.limiter_log = " << (c.limiter_log ? "on" : "off") << '\n';
    return o.str();
}

/// StepperConfig view of the parsed configuration.
inline StepperConfig stepper_config(const SimulationConfig& c) {
    StepperConfig sc;
    sc.tau = c.tau;
    sc.model = c.model;
    sc.penalties = c.penalties;
    sc.ch_solver = c.ch_solver;
    sc.momentum_solver = c.momentum_solver;
    sc.pressure_solver = c.pressure_solver;
    sc.newton = c.newton;
    sc.flux_limiter = c.flux_limiter;
    sc.slope_limiter = c.slope_limiter;
    sc.eps1 = c.eps1;
    sc.eps2 = c.eps2;
    sc.limiter_cap = c.limiter_cap;
    sc.scheme = c.scheme;
    return sc;
}

} // namespace chns
