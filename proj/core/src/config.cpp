#include "otreg/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "otreg/shape_io.hpp"

namespace otreg {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Raw key/value store with consumption tracking, so leftovers can be
// reported as unknown keys.
class KeyValues {
public:
    explicit KeyValues(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError(path, "cannot open configuration file");
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            const std::string s = trim(line);
            if (s.empty()) continue;
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("line " + std::to_string(line_no),
                                  "expected 'key = value'");
            }
            const std::string key = trim(s.substr(0, eq));
            const std::string value = trim(s.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError("line " + std::to_string(line_no), "empty key");
            }
            if (!entries_.emplace(key, value).second) {
                throw ConfigError(key, "duplicate key");
            }
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get_string(const std::string& key) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError(key, "required key is missing");
        consumed_.insert(key);
        return it->second;
    }

    std::string get_string_or(const std::string& key, const std::string& fallback) {
        return has(key) ? get_string(key) : fallback;
    }

    double get_double(const std::string& key) {
        const std::string raw = get_string(key);
        const std::string low = lower(raw);
        if (low == "inf" || low == "+inf" || low == "infinity") {
            return std::numeric_limits<double>::infinity();
        }
        try {
            size_t pos = 0;
            const double v = std::stod(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(key, "not a number: '" + raw + "'");
        }
    }

    double get_double_or(const std::string& key, double fallback) {
        return has(key) ? get_double(key) : fallback;
    }

    long get_int(const std::string& key) {
        const std::string raw = get_string(key);
        try {
            size_t pos = 0;
            const long v = std::stol(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(key, "not an integer: '" + raw + "'");
        }
    }

    long get_int_or(const std::string& key, long fallback) {
        return has(key) ? get_int(key) : fallback;
    }

    bool get_bool_or(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const std::string raw = lower(get_string(key));
        if (raw == "true" || raw == "1" || raw == "yes") return true;
        if (raw == "false" || raw == "0" || raw == "no") return false;
        throw ConfigError(key, "not a boolean: '" + raw + "'");
    }

    void reject_unconsumed() const {
        for (const auto& [key, value] : entries_) {
            if (!consumed_.count(key)) throw ConfigError(key, "unknown key");
        }
    }

private:
    std::map<std::string, std::string> entries_;
    std::set<std::string> consumed_;
};

ShapeKind parse_kind(KeyValues& kv, const std::string& key) {
    const std::string raw = lower(kv.get_string(key));
    if (raw == "curve2d") return ShapeKind::Curve2D;
    if (raw == "curve3d") return ShapeKind::Curve3D;
    if (raw == "surface3d") return ShapeKind::Surface3D;
    throw ConfigError(key, "expected curve2d, curve3d or surface3d");
}

CostSpec parse_cost(KeyValues& kv) {
    CostSpec cost;  // defaults: multiplicative, alpha 1, k 4
    const std::string family = lower(kv.get_string_or("cost.family", "multiplicative"));
    if (family == "additive") {
        cost.family = CostFamily::Additive;
    } else if (family == "multiplicative") {
        cost.family = CostFamily::Multiplicative;
    } else {
        throw ConfigError("cost.family", "expected additive or multiplicative");
    }
    cost.alpha = kv.get_double_or("cost.alpha", cost.alpha);
    cost.k = static_cast<int>(kv.get_int_or("cost.k", cost.k));
    const std::string angular = lower(kv.get_string_or("cost.angular", "geodesic"));
    if (angular == "geodesic") {
        cost.angular = AngularDistance::Geodesic;
    } else if (angular == "currents") {
        cost.angular = AngularDistance::CurrentsLike;
    } else if (angular == "varifold") {
        cost.angular = AngularDistance::VarifoldLike;
    } else {
        throw ConfigError("cost.angular", "expected geodesic, currents or varifold");
    }
    try {
        cost.validate();
    } catch (const Error& e) {
        throw ConfigError("cost", e.what());
    }
    return cost;
}

OtParams parse_ot(KeyValues& kv, const std::string& prefix) {
    OtParams ot;
    ot.epsilon = kv.get_double(prefix + ".epsilon");
    ot.rho = kv.get_double(prefix + ".rho");
    ot.max_iters = static_cast<int>(kv.get_int_or(prefix + ".max_iters", 20000));
    ot.tolerance = kv.get_double_or(prefix + ".tolerance", -1.0);
    try {
        ot.validate();
    } catch (const Error& e) {
        throw ConfigError(prefix, e.what());
    }
    return ot;
}

KernelSpec parse_rkhs(KeyValues& kv, const std::string& prefix) {
    KernelSpec spec;
    spec.sigma = kv.get_double(prefix + ".sigma");
    spec.angular_exponent =
        static_cast<int>(kv.get_int_or(prefix + ".angular_exponent", 0));
    try {
        spec.validate();
    } catch (const Error& e) {
        throw ConfigError(prefix, e.what());
    }
    return spec;
}

FidelitySpec parse_fidelity(KeyValues& kv, const std::string& kind_key,
                            const std::string& ot_prefix, const std::string& rkhs_prefix,
                            bool parse_cost_block) {
    FidelitySpec fidelity;
    const std::string kind = lower(kv.get_string(kind_key));
    if (kind == "ot") {
        fidelity.kind = FidelityKind::Ot;
        fidelity.ot = parse_ot(kv, ot_prefix);
        if (parse_cost_block) fidelity.cost = parse_cost(kv);
    } else if (kind == "rkhs") {
        fidelity.kind = FidelityKind::Rkhs;
        fidelity.rkhs = parse_rkhs(kv, rkhs_prefix);
    } else {
        throw ConfigError(kind_key, "expected ot or rkhs");
    }
    return fidelity;
}

FlowKernelSpec parse_flow_kernel(KeyValues& kv) {
    if (!kv.has("deformation.kernel")) return FlowKernelSpec::default_two_scale();
    const std::string raw = kv.get_string("deformation.kernel");
    FlowKernelSpec spec;
    std::istringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string term = trim(item);
        const auto colon = term.find(':');
        if (colon == std::string::npos) {
            throw ConfigError("deformation.kernel",
                              "expected 'weight:bandwidth' terms, got '" + term + "'");
        }
        try {
            spec.terms.push_back({std::stod(term.substr(0, colon)),
                                  std::stod(term.substr(colon + 1))});
        } catch (const std::exception&) {
            throw ConfigError("deformation.kernel", "malformed term '" + term + "'");
        }
    }
    try {
        spec.validate();
    } catch (const Error& e) {
        throw ConfigError("deformation.kernel", e.what());
    }
    return spec;
}

std::vector<double> parse_snapshots(KeyValues& kv) {
    if (!kv.has("snapshots")) return {0.0, 1.0};
    const std::string raw = kv.get_string("snapshots");
    std::vector<double> times;
    std::istringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            times.push_back(std::stod(trim(item)));
        } catch (const std::exception&) {
            throw ConfigError("snapshots", "malformed time '" + trim(item) + "'");
        }
        if (times.back() < 0.0 || times.back() > 1.0) {
            throw ConfigError("snapshots", "times must lie in [0, 1]");
        }
    }
    if (times.empty()) throw ConfigError("snapshots", "empty list");
    return times;
}

OptimizerSpec parse_optimizer(KeyValues& kv) {
    OptimizerSpec opt;
    const std::string method = lower(kv.get_string_or("optimizer.method", "lbfgs"));
    if (method == "lbfgs") {
        opt.method = OptimizerSpec::Method::Lbfgs;
    } else if (method == "gd") {
        opt.method = OptimizerSpec::Method::GradientDescentArmijo;
    } else {
        throw ConfigError("optimizer.method", "expected lbfgs or gd");
    }
    opt.max_outer_iters =
        static_cast<int>(kv.get_int_or("optimizer.max_outer_iters", opt.max_outer_iters));
    opt.grad_tolerance = kv.get_double_or("optimizer.grad_tolerance", opt.grad_tolerance);
    opt.lbfgs_memory =
        static_cast<int>(kv.get_int_or("optimizer.lbfgs_memory", opt.lbfgs_memory));
    opt.armijo_initial_step =
        kv.get_double_or("optimizer.armijo.initial_step", opt.armijo_initial_step);
    opt.armijo_shrink = kv.get_double_or("optimizer.armijo.shrink", opt.armijo_shrink);
    opt.armijo_c1 = kv.get_double_or("optimizer.armijo.c1", opt.armijo_c1);
    try {
        opt.validate();
    } catch (const Error& e) {
        throw ConfigError("optimizer", e.what());
    }
    return opt;
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
    KeyValues kv(path);
    RunConfig config;

    config.source_path = kv.get_string("source");
    config.target_path = kv.get_string("target");
    for (const auto& [key, p] :
         {std::pair<std::string, std::string>{"source", config.source_path},
          {"target", config.target_path}}) {
        if (!std::filesystem::exists(p)) {
            throw ConfigError(key, "input file '" + p + "' does not exist");
        }
    }
    config.kind = parse_kind(kv, "shape.kind");

    config.fidelity =
        parse_fidelity(kv, "fidelity.kind", "fidelity.ot", "rkhs", true);
    config.flow = parse_flow_kernel(kv);
    config.num_steps = static_cast<int>(kv.get_int_or("deformation.num_steps", 10));
    if (config.num_steps < 1) {
        throw ConfigError("deformation.num_steps", "must be >= 1");
    }
    config.reg_weight = kv.get_double_or("deformation.reg_weight", 1.0);
    if (!(config.reg_weight >= 0.0)) {
        throw ConfigError("deformation.reg_weight", "must be nonnegative");
    }
    config.optimizer = parse_optimizer(kv);

    config.out_dir = kv.get_string_or("out", "");
    config.snapshot_times = parse_snapshots(kv);
    const long seed = kv.get_int_or("seed", 0);
    if (seed < 0) throw ConfigError("seed", "must be nonnegative");
    config.seed = static_cast<std::uint64_t>(seed);
    config.plan_threshold = kv.get_double_or("output.plan_threshold", 1e-12);
    if (!(config.plan_threshold >= 0.0)) {
        throw ConfigError("output.plan_threshold", "must be nonnegative");
    }

    config.twostep_enabled = kv.get_bool_or("twostep.enabled", false);
    if (config.twostep_enabled) {
        if (config.fidelity.kind != FidelityKind::Ot) {
            throw ConfigError("twostep.enabled", "two-step runs need fidelity.kind = ot");
        }
        config.twostep_coarse = parse_ot(kv, "twostep.coarse");
        config.twostep_fine = parse_fidelity(kv, "twostep.fine.kind", "twostep.fine.ot",
                                             "twostep.fine.rkhs", false);
        if (config.twostep_fine.kind == FidelityKind::Ot) {
            config.twostep_fine.cost = config.fidelity.cost;
        }
    }

    kv.reject_unconsumed();
    return config;
}

LoadedRun load_run(const std::string& config_path, bool require_out) {
    LoadedRun run;
    run.config = parse_run_config(config_path);
    if (require_out && run.config.out_dir.empty()) {
        throw ConfigError("out", "required key is missing");
    }
    run.source_shape = read_shape(run.config.source_path, run.config.kind);
    run.target_shape = read_shape(run.config.target_path, run.config.kind);

    run.problem.source_shape = run.source_shape;
    run.problem.target_measure = lift_shape(run.target_shape);
    run.problem.fidelity = run.config.fidelity;
    run.problem.flow = run.config.flow;
    run.problem.num_steps = run.config.num_steps;
    run.problem.reg_weight = run.config.reg_weight;
    run.problem.optimizer = run.config.optimizer;
    run.problem.validate();
    return run;
}

}  // namespace otreg
