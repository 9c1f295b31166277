#include "otreg/deformation.hpp"

#include <cmath>
#include <string>

#include "otreg/parallel.hpp"

namespace otreg {

namespace {

// Radial profile g(s) with s = |x-y|^2, and its first two derivatives.
double radial(const FlowKernelSpec& spec, double s) {
    double acc = 0.0;
    for (const auto& t : spec.terms) {
        acc += t.weight * std::exp(-s / (2.0 * t.bandwidth * t.bandwidth));
    }
    return acc;
}

double radial_d1(const FlowKernelSpec& spec, double s) {
    double acc = 0.0;
    for (const auto& t : spec.terms) {
        const double b2 = t.bandwidth * t.bandwidth;
        acc += -t.weight / (2.0 * b2) * std::exp(-s / (2.0 * b2));
    }
    return acc;
}

double radial_d2(const FlowKernelSpec& spec, double s) {
    double acc = 0.0;
    for (const auto& t : spec.terms) {
        const double b2 = t.bandwidth * t.bandwidth;
        acc += t.weight / (4.0 * b2 * b2) * std::exp(-s / (2.0 * b2));
    }
    return acc;
}

// Velocity field generated by (q, p) evaluated at the rows of x. shoot() uses
// x = q, flow_nonlocal_points() uses the advected cloud; both go through this
// one loop so the arithmetic matches bitwise.
Eigen::MatrixXd velocity_at(const FlowKernelSpec& spec, const Eigen::MatrixXd& q,
                            const Eigen::MatrixXd& p, const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    const Eigen::Index m = q.rows();
    const Eigen::Index d = x.cols();
    Eigen::MatrixXd out(n, d);
    parallel_for(n, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double s = (x.row(i) - q.row(j)).squaredNorm();
                acc += radial(spec, s) * p.row(j);
            }
            out.row(i) = acc;
        }
    });
    return out;
}

struct PhaseRhs {
    Eigen::MatrixXd dq;
    Eigen::MatrixXd dp;
};

PhaseRhs hamiltonian_rhs(const FlowKernelSpec& spec, const Eigen::MatrixXd& q,
                         const Eigen::MatrixXd& p) {
    const Eigen::Index n = q.rows();
    const Eigen::Index d = q.cols();
    PhaseRhs rhs;
    rhs.dq = velocity_at(spec, q, p, q);
    rhs.dp.resize(n, d);
    parallel_for(n, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
            for (Eigen::Index j = 0; j < n; ++j) {
                const Eigen::RowVectorXd diff = q.row(i) - q.row(j);
                const double pp = p.row(i).dot(p.row(j));
                // grad_1 k = 2 g'(s) (x - y)
                acc -= 2.0 * radial_d1(spec, diff.squaredNorm()) * pp * diff;
            }
            rhs.dp.row(i) = acc;
        }
    });
    return rhs;
}

// Vector-Jacobian product of hamiltonian_rhs: given cotangents (lq, lp) of
// (dq, dp), accumulate gradients with respect to (q, p).
struct PhaseCotangent {
    Eigen::MatrixXd q;
    Eigen::MatrixXd p;
};

PhaseCotangent hamiltonian_vjp(const FlowKernelSpec& spec, const Eigen::MatrixXd& q,
                               const Eigen::MatrixXd& p, const Eigen::MatrixXd& lq,
                               const Eigen::MatrixXd& lp) {
    const Eigen::Index n = q.rows();
    const Eigen::Index d = q.cols();
    PhaseCotangent bar;
    bar.q.resize(n, d);
    bar.p.resize(n, d);
    parallel_for(n, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            Eigen::RowVectorXd bq = Eigen::RowVectorXd::Zero(d);
            Eigen::RowVectorXd bp = Eigen::RowVectorXd::Zero(d);
            for (Eigen::Index j = 0; j < n; ++j) {
                const Eigen::RowVectorXd diff = q.row(i) - q.row(j);
                const double s = diff.squaredNorm();
                const double g = radial(spec, s);
                const double g1 = radial_d1(spec, s);
                const double g2 = radial_d2(spec, s);
                const double pp = p.row(i).dot(p.row(j));
                const double lpi_d = lp.row(i).dot(diff);
                const double lpj_d = lp.row(j).dot(diff);

                // d/dp_i of sum_k <lq_k, dq_k>: kernel-weighted pull of lq,
                // plus the two momentum slots of dp.
                bp += g * lq.row(j);
                bp += -2.0 * g1 * (lpi_d - lpj_d) * p.row(j);

                // d/dq_i: radial chain through s for both fields, plus the
                // direct dependence of dp on diff.
                bq += 2.0 * g1 * (lq.row(i).dot(p.row(j)) + lq.row(j).dot(p.row(i))) * diff;
                bq += -4.0 * g2 * pp * (lpi_d - lpj_d) * diff;
                bq += -2.0 * g1 * pp * (lp.row(i) - lp.row(j));
            }
            bar.q.row(i) = bq;
            bar.p.row(i) = bp;
        }
    });
    return bar;
}

void check_finite(const Eigen::MatrixXd& q, const Eigen::MatrixXd& p, int step) {
    if (!q.allFinite() || !p.allFinite()) {
        throw NonFiniteState("flow became non-finite at step " + std::to_string(step) +
                             " (momenta too large for the step size)");
    }
}

}  // namespace

void FlowKernelSpec::validate() const {
    if (terms.empty()) throw Error("flow kernel needs at least one term");
    for (const auto& t : terms) {
        if (!(t.weight > 0.0)) throw Error("flow kernel weights must be positive");
        if (!(t.bandwidth > 0.0)) throw Error("flow kernel bandwidths must be positive");
    }
}

double FlowKernelSpec::total_weight() const {
    double acc = 0.0;
    for (const auto& t : terms) acc += t.weight;
    return acc;
}

FlowKernelSpec FlowKernelSpec::default_two_scale() {
    return FlowKernelSpec{{{1.0, 0.025}, {0.75, 0.15}}};
}

const Eigen::MatrixXd& DeformationState::endpoint() const {
    if (trajectory.empty()) throw MissingTrajectory("deformation state has no trajectory");
    return trajectory.back().first;
}

DeformationState shoot(const FlowKernelSpec& spec, const Eigen::MatrixXd& q0,
                       const Eigen::MatrixXd& theta, int num_steps) {
    spec.validate();
    if (q0.rows() != theta.rows() || q0.cols() != theta.cols()) {
        throw DimensionMismatch("control points and momenta shapes disagree");
    }
    if (num_steps < 1) throw Error("shoot needs num_steps >= 1");

    DeformationState state;
    state.control_points = q0;
    state.momenta = theta;
    state.num_steps = num_steps;
    state.step_size = 1.0 / num_steps;
    state.trajectory.reserve(static_cast<size_t>(num_steps) + 1);
    state.trajectory.emplace_back(q0, theta);

    const double h = state.step_size;
    Eigen::MatrixXd q = q0;
    Eigen::MatrixXd p = theta;
    for (int step = 0; step < num_steps; ++step) {
        const PhaseRhs k1 = hamiltonian_rhs(spec, q, p);
        const PhaseRhs k2 = hamiltonian_rhs(spec, q + 0.5 * h * k1.dq, p + 0.5 * h * k1.dp);
        const PhaseRhs k3 = hamiltonian_rhs(spec, q + 0.5 * h * k2.dq, p + 0.5 * h * k2.dp);
        const PhaseRhs k4 = hamiltonian_rhs(spec, q + h * k3.dq, p + h * k3.dp);
        q += h / 6.0 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
        p += h / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
        check_finite(q, p, step + 1);
        state.trajectory.emplace_back(q, p);
    }
    return state;
}

Eigen::MatrixXd flow_nonlocal_points(const DeformationState& state,
                                     const FlowKernelSpec& spec,
                                     const Eigen::MatrixXd& extra) {
    if (state.trajectory.empty()) {
        throw MissingTrajectory("flow_nonlocal_points needs a populated trajectory");
    }
    if (extra.cols() != state.control_points.cols()) {
        throw DimensionMismatch("extra points have the wrong dimension");
    }

    const double h = state.step_size;
    Eigen::MatrixXd x = extra;
    for (int step = 0; step < state.num_steps; ++step) {
        const auto& [q, p] = state.trajectory[static_cast<size_t>(step)];
        // Recompute the (q, p) stages from the checkpoint so the x stages see
        // exactly the states the forward integration saw.
        const PhaseRhs k1 = hamiltonian_rhs(spec, q, p);
        const Eigen::MatrixXd q2 = q + 0.5 * h * k1.dq, p2 = p + 0.5 * h * k1.dp;
        const PhaseRhs k2 = hamiltonian_rhs(spec, q2, p2);
        const Eigen::MatrixXd q3 = q + 0.5 * h * k2.dq, p3 = p + 0.5 * h * k2.dp;
        const PhaseRhs k3 = hamiltonian_rhs(spec, q3, p3);
        const Eigen::MatrixXd q4 = q + h * k3.dq, p4 = p + h * k3.dp;

        const Eigen::MatrixXd x1 = velocity_at(spec, q, p, x);
        const Eigen::MatrixXd x2 = velocity_at(spec, q2, p2, x + 0.5 * h * x1);
        const Eigen::MatrixXd x3 = velocity_at(spec, q3, p3, x + 0.5 * h * x2);
        const Eigen::MatrixXd x4 = velocity_at(spec, q4, p4, x + h * x3);
        x += h / 6.0 * (x1 + 2.0 * x2 + 2.0 * x3 + x4);
        if (!x.allFinite()) {
            throw NonFiniteState("advected points became non-finite at step " +
                                 std::to_string(step + 1));
        }
    }
    return x;
}

double regularization_energy(const FlowKernelSpec& spec, const Eigen::MatrixXd& q0,
                             const Eigen::MatrixXd& theta, Eigen::MatrixXd* grad) {
    if (q0.rows() != theta.rows() || q0.cols() != theta.cols()) {
        throw DimensionMismatch("control points and momenta shapes disagree");
    }
    const Eigen::Index n = q0.rows();
    // K(q0) theta, reused for both the value and the gradient.
    const Eigen::MatrixXd k_theta = velocity_at(spec, q0, theta, q0);
    double value = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) value += theta.row(i).dot(k_theta.row(i));
    if (grad) *grad = 2.0 * k_theta;
    return value;
}

Eigen::MatrixXd shoot_adjoint(const DeformationState& state, const FlowKernelSpec& spec,
                              const Eigen::MatrixXd& grad_endpoint) {
    if (state.trajectory.size() != static_cast<size_t>(state.num_steps) + 1) {
        throw MissingTrajectory("shoot_adjoint needs the full checkpointed trajectory");
    }
    if (grad_endpoint.rows() != state.control_points.rows() ||
        grad_endpoint.cols() != state.control_points.cols()) {
        throw DimensionMismatch("endpoint gradient shape disagrees with the flow");
    }

    const double h = state.step_size;
    Eigen::MatrixXd lq = grad_endpoint;
    Eigen::MatrixXd lp = Eigen::MatrixXd::Zero(grad_endpoint.rows(), grad_endpoint.cols());

    for (int step = state.num_steps - 1; step >= 0; --step) {
        const auto& [q, p] = state.trajectory[static_cast<size_t>(step)];

        // Recompute the forward stages of this step.
        const PhaseRhs k1 = hamiltonian_rhs(spec, q, p);
        const Eigen::MatrixXd q2 = q + 0.5 * h * k1.dq, p2 = p + 0.5 * h * k1.dp;
        const PhaseRhs k2 = hamiltonian_rhs(spec, q2, p2);
        const Eigen::MatrixXd q3 = q + 0.5 * h * k2.dq, p3 = p + 0.5 * h * k2.dp;
        const PhaseRhs k3 = hamiltonian_rhs(spec, q3, p3);
        const Eigen::MatrixXd q4 = q + h * k3.dq, p4 = p + h * k3.dp;

        // Reverse the tableau: bar(k4) ... bar(k1), each pulled back through
        // the stage state it was evaluated at.
        const Eigen::MatrixXd k4q_bar = h / 6.0 * lq;
        const Eigen::MatrixXd k4p_bar = h / 6.0 * lp;
        const PhaseCotangent y4 = hamiltonian_vjp(spec, q4, p4, k4q_bar, k4p_bar);

        const Eigen::MatrixXd k3q_bar = h / 3.0 * lq + h * y4.q;
        const Eigen::MatrixXd k3p_bar = h / 3.0 * lp + h * y4.p;
        const PhaseCotangent y3 = hamiltonian_vjp(spec, q3, p3, k3q_bar, k3p_bar);

        const Eigen::MatrixXd k2q_bar = h / 3.0 * lq + 0.5 * h * y3.q;
        const Eigen::MatrixXd k2p_bar = h / 3.0 * lp + 0.5 * h * y3.p;
        const PhaseCotangent y2 = hamiltonian_vjp(spec, q2, p2, k2q_bar, k2p_bar);

        const Eigen::MatrixXd k1q_bar = h / 6.0 * lq + 0.5 * h * y2.q;
        const Eigen::MatrixXd k1p_bar = h / 6.0 * lp + 0.5 * h * y2.p;
        const PhaseCotangent y1 = hamiltonian_vjp(spec, q, p, k1q_bar, k1p_bar);

        lq += y1.q + y2.q + y3.q + y4.q;
        lp += y1.p + y2.p + y3.p + y4.p;
    }
    return lp;
}

}  // namespace otreg
