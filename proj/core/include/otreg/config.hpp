#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otreg/registration.hpp"

namespace otreg {

// Parsed run configuration: flat `key = value` text with '#' comments.
// Unknown keys, malformed values and module-constraint violations all raise
// ConfigError naming the offending key.
struct RunConfig {
    std::string source_path;
    std::string target_path;
    ShapeKind kind = ShapeKind::Curve2D;

    FidelitySpec fidelity;
    FlowKernelSpec flow = FlowKernelSpec::default_two_scale();
    int num_steps = 10;
    double reg_weight = 1.0;
    OptimizerSpec optimizer;

    std::string out_dir;
    std::vector<double> snapshot_times = {0.0, 1.0};
    std::uint64_t seed = 0;
    double plan_threshold = 1e-12;

    bool twostep_enabled = false;
    OtParams twostep_coarse;
    FidelitySpec twostep_fine;
};

RunConfig parse_run_config(const std::string& path);

// Assembles the registration problem from a parsed config (reads and lifts
// the input shapes; `require_out` additionally insists on the out directory).
struct LoadedRun {
    RunConfig config;
    ShapeComplex source_shape;
    ShapeComplex target_shape;
    RegistrationProblem problem;
};
LoadedRun load_run(const std::string& config_path, bool require_out);

}  // namespace otreg
