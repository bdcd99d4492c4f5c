// chns: CLI simulator for two-phase Cahn-Hilliard-Navier-Stokes flow on voxel
// geometries. Subcommands: run, validate, mask-info, resume.
// Exit codes: 0 ok, 1 config error, 2 runtime error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "chns/chns.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw chns::ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_summary(const chns::RunResult& res) {
    if (res.records.empty()) return;
    const auto& last = res.records.back();
    std::cout << "steps completed: " << res.steps_completed << "\n"
              << "final t: " << last.t << "\n"
              << "mean c: " << last.mean_c << "  mean rho: " << last.mean_rho << "\n"
              << "c range: [" << last.min_c << ", " << last.max_c << "]\n"
              << "pressure-operator assemblies: " << res.step6_assemblies << "\n"
              << "observables: " << res.observables_path << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"chns - bound-preserving DG solver for two-phase CHNS flow"};
    app.require_subcommand(1);

    std::string config_path, mask_path, checkpoint_path;
    std::string output_dir;

    auto* cmd_run = app.add_subcommand("run", "run a simulation from a config file");
    cmd_run->add_option("config", config_path, "config file")->required();
    cmd_run->add_option("--output", output_dir, "override output.dir");

    auto* cmd_validate = app.add_subcommand("validate", "parse and echo a config file");
    cmd_validate->add_option("config", config_path, "config file")->required();

    auto* cmd_mask = app.add_subcommand("mask-info", "describe a voxel mask file");
    cmd_mask->add_option("mask", mask_path, "mask file")->required();

    auto* cmd_resume = app.add_subcommand("resume", "continue a checkpointed run");
    cmd_resume->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    cmd_resume->add_option("--output", output_dir, "override output.dir");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            chns::SimulationConfig cfg = chns::parse_config(read_file(config_path));
            if (!output_dir.empty()) cfg.output_dir = output_dir;
            const auto res = chns::run_simulation(cfg);
            print_summary(res);
            if (res.failed) {
                std::cerr << "error: " << res.error << "\n";
                return 2;
            }
        } else if (cmd_validate->parsed()) {
            chns::SimulationConfig cfg = chns::parse_config(read_file(config_path));
            std::cout << chns::serialize_config(cfg);
        } else if (cmd_mask->parsed()) {
            const chns::MaskData md = chns::read_mask(mask_path);
            const auto mesh = chns::build_voxel_mesh(md.mask, md.dim, md.counts, md.h);
            std::cout << "dim: " << md.dim << "\n"
                      << "cells: " << md.counts[0] << " x " << md.counts[1];
            if (md.dim == 3) std::cout << " x " << md.counts[2];
            std::cout << "\nh: " << md.h << "\n"
                      << "active cells: " << mesh.n_elements() << "\n"
                      << "interior faces: " << mesh.interior_faces.size() << "\n"
                      << "boundary faces: " << mesh.boundary_faces.size() << "\n";
        } else if (cmd_resume->parsed()) {
            std::optional<std::string> override_dir;
            if (!output_dir.empty()) override_dir = output_dir;
            const auto res = chns::resume_simulation(checkpoint_path, override_dir);
            print_summary(res);
            if (res.failed) {
                std::cerr << "error: " << res.error << "\n";
                return 2;
            }
        }
    } catch (const chns::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
