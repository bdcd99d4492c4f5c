#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chns/config.hpp"
#include "chns/observables.hpp"
#include "chns/scenario.hpp"
#include "chns/stepper.hpp"
#include "chns/vtk.hpp"

namespace chns {

struct RunResult {
    std::vector<ObservableRecord> records;
    int steps_completed = 0;
    int step6_assemblies = 0;
    std::string observables_path;
    bool failed = false;
    std::string error;
    FlowState final_state;
};

// ---------------------------------------------------------------------------
// Checkpoint format: "CHNSCKPT", u32 version, u64 config length, config text
// (canonical serialization), then the raw flow state. Restart is bit-exact.
// ---------------------------------------------------------------------------

inline void write_checkpoint(const std::string& path, const SimulationConfig& cfg,
                             const FlowState& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOError("write_checkpoint: cannot open " + path);
    out.write("CHNSCKPT", 8);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::string text = serialize_config(cfg);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(len));
    write_flow_state(out, s);
    if (!out) throw IOError("write_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    SimulationConfig cfg;
    std::string state_blob;

    FlowState state(const DGSpace& sp) const {
        std::istringstream in(state_blob, std::ios::binary);
        FlowState s;
        read_flow_state(in, sp, s);
        return s;
    }
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "CHNSCKPT")
        throw IOError("load_checkpoint: bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != 1) throw IOError("load_checkpoint: unsupported version");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IOError("load_checkpoint: truncated config block");
    LoadedCheckpoint ck;
    ck.cfg = parse_config(text);
    std::ostringstream rest;
    rest << in.rdbuf();
    ck.state_blob = rest.str();
    return ck;
}

namespace detail {

struct OutputSinks {
    std::ofstream observables;
    std::ofstream limiter_log;
    std::filesystem::path dir;
};

inline OutputSinks open_outputs(const SimulationConfig& cfg, bool fresh) {
    OutputSinks s;
    s.dir = cfg.output_dir;
    std::filesystem::create_directories(s.dir);
    const auto obs_path = s.dir / cfg.observables_file;
    s.observables.open(obs_path, fresh ? std::ios::trunc : std::ios::app);
    if (!s.observables) throw IOError("cannot open " + obs_path.string());
    if (fresh) write_observable_header(s.observables);
    if (cfg.limiter_log) {
        s.limiter_log.open(s.dir / "limiter.csv", fresh ? std::ios::trunc : std::ios::app);
        if (fresh)
            s.limiter_log << "n,flux_iterations,max_residual_flux,troubled_cells,"
                             "pre_min,pre_max,post_min,post_max\n";
    }
    return s;
}

inline void log_limiter(std::ofstream& out, int n, const StepDiagnostics& d) {
    if (!out.is_open()) return;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", n,
                  d.limiter.flux_iterations, d.limiter.max_residual_flux,
                  d.limiter.troubled_cells, d.limiter.pre_min, d.limiter.pre_max,
                  d.limiter.post_min, d.limiter.post_max);
    out << buf;
}

inline std::string step_filename(const char* stem, int n, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%06d.%s", stem, n, ext);
    return buf;
}

/// Shared stepping loop for fresh runs and resumes.
inline RunResult run_loop(const SimulationConfig& cfg, const VoxelMesh& mesh,
                          const ModelParams& model, FlowState state, bool fresh) {
    DGSpace space(mesh, cfg.degree);
    StepperConfig scfg = stepper_config(cfg);
    scfg.model = model;  // scenario-completed model: inflow profile, per-face delta
    Stepper stepper(space, scfg);
    auto sinks = open_outputs(cfg, fresh);

    RunResult res;
    res.observables_path = (sinks.dir / cfg.observables_file).string();
    auto emit = [&](const ObservableRecord& r) {
        res.records.push_back(r);
        write_observable(sinks.observables, r);
        sinks.observables.flush();
    };

    emit(measure(space, state));
    if (fresh && cfg.vtk_every > 0)
        write_vtk(space, state, (sinks.dir / step_filename("fields", state.n, "vtk")).string());

    for (int n = state.n + 1; n <= cfg.steps; ++n) {
        StepDiagnostics diag;
        try {
            state = stepper.advance(state, &diag);
        } catch (const Error& e) {
            res.failed = true;
            res.error = "step " + std::to_string(n) + ": " + e.what();
            break;
        }
        emit(measure(space, state, &diag));
        log_limiter(sinks.limiter_log, n, diag);
        if (cfg.vtk_every > 0 && n % cfg.vtk_every == 0)
            write_vtk(space, state, (sinks.dir / step_filename("fields", n, "vtk")).string());
        if (cfg.checkpoint_every > 0 && n % cfg.checkpoint_every == 0)
            write_checkpoint((sinks.dir / step_filename("checkpoint", n, "ckpt")).string(), cfg,
                             state);
        res.steps_completed = n;
    }
    if (!res.failed)
        write_checkpoint((sinks.dir / "checkpoint_final.ckpt").string(), cfg, state);
    res.step6_assemblies = stepper.step6_assembly_count();
    res.final_state = std::move(state);
    return res;
}

} // namespace detail

/// Executes a configured run from the scenario initial state.
inline RunResult run_simulation(const SimulationConfig& cfg) {
    Scenario sc = build_scenario(cfg);
    DGSpace space(sc.mesh, cfg.degree);
    StepperConfig scfg = stepper_config(cfg);
    scfg.model = sc.model;
    Stepper stepper(space, scfg);
    FlowState init = stepper.initialize(sc.c0, sc.v0);
    return detail::run_loop(cfg, sc.mesh, sc.model, std::move(init), /*fresh=*/true);
}

/// Continues a checkpointed run to its configured step count. The observables
/// file in the (possibly overridden) output directory is rewritten from the
/// checkpointed step onward.
inline RunResult resume_simulation(const std::string& checkpoint_path,
                                   const std::optional<std::string>& output_dir_override = {}) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
    SimulationConfig cfg = ck.cfg;
    if (output_dir_override) cfg.output_dir = *output_dir_override;
    Scenario sc = build_scenario(cfg);
    DGSpace space(sc.mesh, cfg.degree);
    FlowState state = ck.state(space);
    return detail::run_loop(cfg, sc.mesh, sc.model, std::move(state), /*fresh=*/true);
}

} // namespace chns
