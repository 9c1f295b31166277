// Command-line driver: register / fidelity / generate / sweep subcommands on
// top of the core library. All numeric output goes through format_double so
// identical runs produce identical files.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "otreg/config.hpp"
#include "otreg/deformation.hpp"
#include "otreg/errors.hpp"
#include "otreg/measures.hpp"
#include "otreg/registration.hpp"
#include "otreg/shape_io.hpp"
#include "otreg/synthetic.hpp"

namespace fs = std::filesystem;
using namespace otreg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

std::string format_time_tag(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", t);
    return buf;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

void write_snapshots(const LoadedRun& run, const RegistrationResult& result,
                     const fs::path& out_dir) {
    const DeformationState flow_state =
        shoot(run.problem.flow, run.problem.source_shape.vertices, result.theta,
              run.problem.num_steps);
    const std::string ext =
        run.config.kind == ShapeKind::Surface3D ? ".obj" : ".curves";
    for (const double t : run.config.snapshot_times) {
        // Snapshots land on the nearest checkpoint of the integration grid.
        const int idx = static_cast<int>(std::lround(t * run.problem.num_steps));
        const auto& vertices =
            flow_state.trajectory[static_cast<size_t>(idx)].first;
        ShapeComplex snap = run.problem.source_shape;
        snap.vertices = vertices;
        write_shape((out_dir / ("shape_t" + format_time_tag(t) + ext)).string(), snap);
    }
    write_plan_dense((out_dir / "momenta.txt").string(), result.theta);

    // Vertex correspondence is the identity through the flow; emitted so
    // external plotting can color-code trajectories.
    std::vector<std::pair<std::string, std::string>> map_rows;
    map_rows.reserve(static_cast<size_t>(run.problem.source_shape.vertices.rows()));
    std::ofstream map_out(out_dir / "vertex_map.txt");
    for (Eigen::Index i = 0; i < run.problem.source_shape.vertices.rows(); ++i) {
        map_out << i << ' ' << i << '\n';
    }
}

int run_register(const std::string& config_path, const std::string& out_override) {
    const auto start = std::chrono::steady_clock::now();
    LoadedRun run = load_run(config_path, out_override.empty());
    if (!out_override.empty()) run.config.out_dir = out_override;

    const fs::path out_dir(run.config.out_dir);
    fs::create_directories(out_dir);

    RegistrationResult result;
    if (run.config.twostep_enabled) {
        result = register_two_step(run.problem, run.config.twostep_coarse,
                                   run.config.twostep_fine);
    } else {
        result = register_shapes(run.problem);
    }

    write_history((out_dir / "history.tsv").string(), result.history);
    write_snapshots(run, result, out_dir);

    // Final deformed measure; also the transport plan for OT runs.
    const DeformationState flow_state =
        shoot(run.problem.flow, run.problem.source_shape.vertices, result.theta,
              run.problem.num_steps);
    const DiscreteMeasure moved =
        rebuild_measure(run.problem.source_shape, flow_state.endpoint());
    write_measure((out_dir / "measure_final.txt").string(), moved);

    const FidelitySpec& final_fidelity = run.config.twostep_enabled
                                             ? run.config.twostep_fine
                                             : run.config.fidelity;
    if (final_fidelity.kind == FidelityKind::Ot) {
        const Eigen::MatrixXd cost =
            eval_cost_matrix(final_fidelity.cost, moved, run.problem.target_measure);
        const TransportState transport = sinkhorn(
            cost, moved.masses, run.problem.target_measure.masses, final_fidelity.ot);
        write_plan_triplets((out_dir / "plan.triplets").string(), transport.plan,
                            run.config.plan_threshold);
    }

    const double wall = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    write_key_values(
        (out_dir / "summary.txt").string(),
        {
            {"final_energy", format_double(result.final_energy)},
            {"final_fidelity_regularized",
             format_double(result.final_fidelity.regularized)},
            {"final_fidelity_stripped", format_double(result.final_fidelity.stripped)},
            {"outer_iterations", std::to_string(result.outer_iterations)},
            {"converged", bool_str(result.converged)},
            {"line_search_failure", bool_str(result.line_search_failure)},
            {"total_sinkhorn_iterations",
             std::to_string(result.total_sinkhorn_iterations)},
            {"last_sinkhorn_converged", bool_str(result.last_sinkhorn_converged)},
            {"twostep", bool_str(run.config.twostep_enabled)},
            {"source_diracs", std::to_string(run.problem.source_shape.cells.rows())},
            {"target_diracs", std::to_string(run.problem.target_measure.size())},
            {"wall_clock_s", format_double(wall)},
        });
    return kExitOk;
}

int run_fidelity(const std::string& config_path, const std::string& source_override,
                 const std::string& target_override, const std::string& plan_dense_path,
                 const std::string& plan_triplets_path, const std::string& grid) {
    LoadedRun run = load_run(config_path, false);
    ShapeComplex source = run.source_shape;
    ShapeComplex target = run.target_shape;
    if (!source_override.empty()) source = read_shape(source_override, run.config.kind);
    if (!target_override.empty()) target = read_shape(target_override, run.config.kind);
    const DiscreteMeasure mu = lift_shape(source);
    const DiscreteMeasure nu = lift_shape(target);

    if (run.config.fidelity.kind == FidelityKind::Rkhs) {
        std::cout << "fidelity.kind = rkhs\n"
                  << "rkhs.value = "
                  << format_double(rkhs_value(run.config.fidelity.rkhs, mu, nu)) << '\n';
        return kExitOk;
    }

    const Eigen::MatrixXd cost = eval_cost_matrix(run.config.fidelity.cost, mu, nu);
    const TransportState transport =
        sinkhorn(cost, mu.masses, nu.masses, run.config.fidelity.ot);
    const FidelityValue value =
        ot_value(cost, mu.masses, nu.masses, transport, run.config.fidelity.ot);
    std::cout << "fidelity.kind = ot\n"
              << "ot.regularized = " << format_double(value.regularized) << '\n'
              << "ot.stripped = " << format_double(value.stripped) << '\n'
              << "sinkhorn.iterations = " << transport.iterations << '\n'
              << "sinkhorn.converged = " << bool_str(transport.converged) << '\n';

    if (!plan_dense_path.empty()) write_plan_dense(plan_dense_path, transport.plan);
    if (!plan_triplets_path.empty()) {
        write_plan_triplets(plan_triplets_path, transport.plan,
                            run.config.plan_threshold);
    }

    if (!grid.empty()) {
        // rho/epsilon sweep at the config's epsilon: one row per ratio.
        std::cout << "rho_over_epsilon\titerations\tconverged\n";
        std::istringstream ss(grid);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const double ratio = std::stod(item);
            OtParams params = run.config.fidelity.ot;
            params.rho = ratio * params.epsilon;
            const TransportState st = sinkhorn(cost, mu.masses, nu.masses, params);
            std::cout << format_double(ratio) << '\t' << st.iterations << '\t'
                      << bool_str(st.converged) << '\n';
        }
    }
    return kExitOk;
}

int run_generate(const std::string& kind_str, std::uint64_t seed,
                 const std::string& out) {
    SyntheticKind kind;
    if (kind_str == "curvepair") {
        kind = SyntheticKind::CurvePair;
    } else if (kind_str == "fiberbundles") {
        kind = SyntheticKind::FiberBundles;
    } else if (kind_str == "translatedsquares") {
        kind = SyntheticKind::TranslatedSquares;
    } else {
        throw ConfigError("--kind",
                          "expected curvepair, fiberbundles or translatedsquares");
    }
    const ShapePair pair = generate_synthetic(kind, seed);
    fs::create_directories(out);
    const fs::path dir(out);
    write_shape((dir / "source.curves").string(), pair.source);
    write_shape((dir / "target.curves").string(), pair.target);
    std::cout << (dir / "source.curves").string() << '\n'
              << (dir / "target.curves").string() << '\n';
    return kExitOk;
}

int run_sweep(const std::vector<std::string>& configs, int jobs) {
    std::atomic<size_t> next{0};
    std::vector<int> codes(configs.size(), kExitOk);
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= configs.size()) return;
                try {
                    codes[i] = run_register(configs[i], "");
                } catch (const NonFiniteState& e) {
                    std::cerr << configs[i] << ": " << e.what() << '\n';
                    codes[i] = kExitNumerical;
                } catch (const std::exception& e) {
                    std::cerr << configs[i] << ": " << e.what() << '\n';
                    codes[i] = kExitConfig;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    int worst = kExitOk;
    for (size_t i = 0; i < configs.size(); ++i) {
        std::cout << configs[i] << ": "
                  << (codes[i] == kExitOk ? "ok" : "failed (exit " +
                          std::to_string(codes[i]) + ")")
                  << '\n';
        worst = std::max(worst, codes[i]);
    }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffeomorphic curve/surface registration with transport and "
                 "kernel fidelities"};
    app.require_subcommand(1);

    std::string config_path, out_override;
    auto* reg = app.add_subcommand("register", "Run a registration from a config file");
    reg->add_option("--config", config_path, "Run configuration file")->required();
    reg->add_option("--out", out_override, "Override the output directory");

    std::string fid_config, fid_source, fid_target, plan_dense, plan_triplets, grid;
    auto* fid = app.add_subcommand("fidelity",
                                   "Evaluate the configured fidelity between two shapes");
    fid->add_option("--config", fid_config, "Run configuration file")->required();
    fid->add_option("--source", fid_source, "Override the source shape path");
    fid->add_option("--target", fid_target, "Override the target shape path");
    fid->add_option("--dump-plan", plan_dense, "Write the dense transport plan here");
    fid->add_option("--plan-triplets", plan_triplets, "Write sparse plan triplets here");
    fid->add_option("--iteration-grid", grid,
                    "Comma list of rho/epsilon ratios; prints iterations per cell");

    std::string gen_kind = "curvepair", gen_out = ".";
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("generate", "Emit a synthetic source/target pair");
    gen->add_option("--kind", gen_kind,
                    "curvepair | fiberbundles | translatedsquares");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output directory");

    std::vector<std::string> sweep_configs;
    int sweep_jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "Run several configs concurrently");
    sweep->add_option("configs", sweep_configs, "Config files")->required();
    sweep->add_option("--jobs", sweep_jobs, "Concurrent runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*reg) return run_register(config_path, out_override);
        if (*fid) {
            return run_fidelity(fid_config, fid_source, fid_target, plan_dense,
                                plan_triplets, grid);
        }
        if (*gen) return run_generate(gen_kind, gen_seed, gen_out);
        if (*sweep) return run_sweep(sweep_configs, sweep_jobs);
    } catch (const NonFiniteState& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}
