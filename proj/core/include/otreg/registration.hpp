#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otreg/cost.hpp"
#include "otreg/deformation.hpp"
#include "otreg/measures.hpp"
#include "otreg/ot.hpp"
#include "otreg/rkhs.hpp"

namespace otreg {

enum class FidelityKind { Ot, Rkhs };

// Fidelity selector: transport fidelity carries both the solver parameters
// and the ground-cost family; the kernel baseline carries its bandwidth.
struct FidelitySpec {
    FidelityKind kind = FidelityKind::Ot;
    OtParams ot;
    CostSpec cost;
    KernelSpec rkhs;

    void validate() const;
};

struct OptimizerSpec {
    enum class Method { GradientDescentArmijo, Lbfgs };
    Method method = Method::Lbfgs;
    int max_outer_iters = 100;
    double grad_tolerance = 1e-6;
    int lbfgs_memory = 10;
    double armijo_initial_step = 1.0;
    double armijo_shrink = 0.5;
    double armijo_c1 = 1e-4;

    void validate() const;
};

// Full problem: deform source_shape's vertices so the rebuilt measure matches
// target_measure, balancing fidelity against reg_weight times the flow's
// kinetic energy.
struct RegistrationProblem {
    ShapeComplex source_shape;
    DiscreteMeasure target_measure;
    FidelitySpec fidelity;
    FlowKernelSpec flow = FlowKernelSpec::default_two_scale();
    int num_steps = 10;
    double reg_weight = 1.0;
    OptimizerSpec optimizer;

    void validate() const;
};

// Dual potentials carried between outer iterations; the cost matrix changes
// slowly, so reusing them cuts Sinkhorn iteration counts.
struct SinkhornWarmStart {
    Eigen::VectorXd u;
    Eigen::VectorXd v;
    bool valid = false;
};

struct EnergyReport {
    double energy = 0.0;
    Eigen::MatrixXd grad_theta;
    FidelityValue fidelity;
    int sinkhorn_iterations = 0;     // 0 for kernel runs
    bool sinkhorn_converged = true;  // always true for kernel runs
};

// E(theta) and its gradient: shoot, rebuild the measure at the endpoint,
// evaluate the fidelity and pull its measure gradients back through the
// rebuild adjoint and the flow adjoint; the regularization term and its
// gradient are added with weight reg_weight.
EnergyReport energy_and_gradient(const RegistrationProblem& problem,
                                 const Eigen::MatrixXd& theta,
                                 SinkhornWarmStart* warm = nullptr);

struct IterationRecord {
    int iteration = 0;
    std::string phase = "single";
    double energy = 0.0;
    double grad_norm = 0.0;
    double fidelity_regularized = 0.0;
    double fidelity_stripped = 0.0;
    int sinkhorn_iterations = 0;
    double step_size = 0.0;
    double wall_clock_s = 0.0;
};

struct RegistrationResult {
    Eigen::MatrixXd theta;
    std::vector<IterationRecord> history;
    bool converged = false;
    bool line_search_failure = false;
    double final_energy = 0.0;
    FidelityValue final_fidelity;
    int outer_iterations = 0;
    long total_sinkhorn_iterations = 0;
    bool last_sinkhorn_converged = true;
};

// Descends energy_and_gradient from theta0 (zero when omitted). Armijo
// backtracking guarantees the accepted energies are nonincreasing; outer
// convergence additionally requires the last Sinkhorn solve to have
// converged. A failed line search returns the best iterate with the flag set.
RegistrationResult register_shapes(const RegistrationProblem& problem,
                                   std::optional<Eigen::MatrixXd> theta0 = std::nullopt,
                                   const std::string& phase_tag = "single");

// Coarse-to-fine schedule: a transport phase with `coarse` parameters finds
// the basin, then the run continues from the same momenta (bitwise) with the
// `fine` fidelity. Histories are concatenated and tagged by phase. The fine
// phase reuses the problem's optimizer unless `fine_optimizer` overrides it
// (e.g. a different iteration budget).
RegistrationResult register_two_step(const RegistrationProblem& problem,
                                     const OtParams& coarse,
                                     const FidelitySpec& fine,
                                     std::optional<OptimizerSpec> fine_optimizer =
                                         std::nullopt);

}  // namespace otreg
