#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "otreg/errors.hpp"

namespace otreg {

// Sum-of-Gaussians reproducing kernel for the velocity field:
//   k(x, y) = sum_l weight_l * exp(-|x-y|^2 / (2 bandwidth_l^2)).
struct FlowKernelSpec {
    struct Term {
        double weight;
        double bandwidth;
    };
    std::vector<Term> terms;

    void validate() const;
    double total_weight() const;

    // Two-scale default tuned for unit-box shapes: a tight 0.025 kernel plus
    // a 0.75-weighted 0.15 kernel for long-range motion.
    static FlowKernelSpec default_two_scale();
};

// Geodesic shooting state: control points, the momenta driving them, and the
// per-step checkpoints (q, p) the reverse pass replays.
struct DeformationState {
    Eigen::MatrixXd control_points;  // q0, n x d
    Eigen::MatrixXd momenta;         // theta, n x d
    std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> trajectory;
    int num_steps = 0;
    double step_size = 0.0;

    const Eigen::MatrixXd& endpoint() const;
};

// Integrates the point-kernel Hamiltonian system
//   dq_i/dt =  sum_j k(q_i, q_j) p_j
//   dp_i/dt = -sum_j grad_1 k(q_i, q_j) <p_i, p_j>
// over t in [0, 1] with uniform RK4 steps, checkpointing every step.
DeformationState shoot(const FlowKernelSpec& spec, const Eigen::MatrixXd& q0,
                       const Eigen::MatrixXd& theta, int num_steps);

// Advects extra points through the stored flow, replaying the same RK4 stage
// structure; feeding the control points back in reproduces the stored
// endpoint bitwise.
Eigen::MatrixXd flow_nonlocal_points(const DeformationState& state,
                                     const FlowKernelSpec& spec,
                                     const Eigen::MatrixXd& extra);

// Kinetic energy <theta, K(q0) theta>; when grad is non-null it receives
// 2 K(q0) theta.
double regularization_energy(const FlowKernelSpec& spec, const Eigen::MatrixXd& q0,
                             const Eigen::MatrixXd& theta,
                             Eigen::MatrixXd* grad = nullptr);

// Exact adjoint of the discrete integrator: pulls a gradient with respect to
// the endpoint positions back to the initial momenta by reversing each RK4
// step over the checkpoints.
Eigen::MatrixXd shoot_adjoint(const DeformationState& state,
                              const FlowKernelSpec& spec,
                              const Eigen::MatrixXd& grad_endpoint);

}  // namespace otreg
