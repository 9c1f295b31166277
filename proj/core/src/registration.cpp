#include "otreg/registration.hpp"

#include <chrono>
#include <cmath>
#include <deque>

namespace otreg {

namespace {

double elapsed_s(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void FidelitySpec::validate() const {
    if (kind == FidelityKind::Ot) {
        ot.validate();
        cost.validate();
    } else {
        rkhs.validate();
    }
}

void OptimizerSpec::validate() const {
    if (max_outer_iters < 0) throw Error("optimizer max_outer_iters must be >= 0");
    if (!(grad_tolerance > 0.0)) throw Error("optimizer grad_tolerance must be positive");
    if (lbfgs_memory < 1) throw Error("optimizer lbfgs_memory must be >= 1");
    if (!(armijo_initial_step > 0.0)) throw Error("armijo initial step must be positive");
    if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0)) {
        throw Error("armijo shrink factor must lie in (0, 1)");
    }
    if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) {
        throw Error("armijo sufficient-decrease constant must lie in (0, 1)");
    }
}

void RegistrationProblem::validate() const {
    source_shape.validate();
    target_measure.validate();
    if (source_shape.dim() != target_measure.dim()) {
        throw DimensionMismatch("source shape and target measure dimensions disagree");
    }
    fidelity.validate();
    flow.validate();
    if (num_steps < 1) throw Error("flow num_steps must be >= 1");
    if (!(reg_weight >= 0.0)) throw Error("reg_weight must be nonnegative");
    optimizer.validate();
}

EnergyReport energy_and_gradient(const RegistrationProblem& problem,
                                 const Eigen::MatrixXd& theta,
                                 SinkhornWarmStart* warm) {
    const DeformationState flow_state =
        shoot(problem.flow, problem.source_shape.vertices, theta, problem.num_steps);
    const Eigen::MatrixXd& deformed = flow_state.endpoint();
    const DiscreteMeasure moved = rebuild_measure(problem.source_shape, deformed);

    EnergyReport report;
    MeasureGradient fidelity_grad;

    if (problem.fidelity.kind == FidelityKind::Ot) {
        const Eigen::MatrixXd cost =
            eval_cost_matrix(problem.fidelity.cost, moved, problem.target_measure);
        const Eigen::VectorXd* u0 = (warm && warm->valid) ? &warm->u : nullptr;
        const Eigen::VectorXd* v0 = (warm && warm->valid) ? &warm->v : nullptr;
        const TransportState transport = sinkhorn(cost, moved.masses,
                                                  problem.target_measure.masses,
                                                  problem.fidelity.ot, u0, v0);
        if (warm) {
            warm->u = transport.u;
            warm->v = transport.v;
            warm->valid = true;
        }
        report.fidelity = ot_value(cost, moved.masses, problem.target_measure.masses,
                                   transport, problem.fidelity.ot);
        report.sinkhorn_iterations = transport.iterations;
        report.sinkhorn_converged = transport.converged;
        fidelity_grad = ot_gradients(problem.fidelity.cost, moved,
                                     problem.target_measure, transport,
                                     problem.fidelity.ot);
    } else {
        const double value = rkhs_value(problem.fidelity.rkhs, moved,
                                        problem.target_measure);
        report.fidelity.regularized = value;
        report.fidelity.stripped = value;
        fidelity_grad = rkhs_gradients(problem.fidelity.rkhs, moved,
                                       problem.target_measure);
    }

    const Eigen::MatrixXd grad_vertices = rebuild_measure_adjoint(
        problem.source_shape, deformed, fidelity_grad.positions, fidelity_grad.masses,
        fidelity_grad.directions);
    report.grad_theta = shoot_adjoint(flow_state, problem.flow, grad_vertices);

    Eigen::MatrixXd reg_grad;
    const double reg = regularization_energy(problem.flow, problem.source_shape.vertices,
                                             theta, &reg_grad);
    report.energy = problem.reg_weight * reg + report.fidelity.regularized;
    report.grad_theta += problem.reg_weight * reg_grad;
    return report;
}

RegistrationResult register_shapes(const RegistrationProblem& problem,
                                   std::optional<Eigen::MatrixXd> theta0,
                                   const std::string& phase_tag) {
    problem.validate();
    const auto start = std::chrono::steady_clock::now();
    const OptimizerSpec& opt = problem.optimizer;

    RegistrationResult result;
    result.theta = theta0 ? std::move(*theta0)
                          : Eigen::MatrixXd::Zero(problem.source_shape.vertices.rows(),
                                                  problem.source_shape.dim())
                                .eval();

    SinkhornWarmStart warm;
    EnergyReport current = energy_and_gradient(problem, result.theta, &warm);
    result.total_sinkhorn_iterations += current.sinkhorn_iterations;

    const auto record = [&](int iter, const EnergyReport& rep, double step) {
        IterationRecord rec;
        rec.iteration = iter;
        rec.phase = phase_tag;
        rec.energy = rep.energy;
        rec.grad_norm = rep.grad_theta.lpNorm<Eigen::Infinity>();
        rec.fidelity_regularized = rep.fidelity.regularized;
        rec.fidelity_stripped = rep.fidelity.stripped;
        rec.sinkhorn_iterations = rep.sinkhorn_iterations;
        rec.step_size = step;
        rec.wall_clock_s = elapsed_s(start);
        result.history.push_back(rec);
    };
    record(0, current, 0.0);

    // L-BFGS pair storage (s = theta step, y = gradient change).
    std::deque<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> pairs;

    const auto lbfgs_direction = [&](const Eigen::MatrixXd& grad) {
        Eigen::MatrixXd q = grad;
        std::vector<double> alpha(pairs.size());
        for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(pairs.size()) - 1; k >= 0; --k) {
            const auto& [s, y] = pairs[static_cast<size_t>(k)];
            const double rho_k = 1.0 / y.cwiseProduct(s).sum();
            alpha[static_cast<size_t>(k)] = rho_k * s.cwiseProduct(q).sum();
            q -= alpha[static_cast<size_t>(k)] * y;
        }
        if (!pairs.empty()) {
            const auto& [s, y] = pairs.back();
            q *= y.cwiseProduct(s).sum() / y.cwiseProduct(y).sum();
        }
        for (size_t k = 0; k < pairs.size(); ++k) {
            const auto& [s, y] = pairs[k];
            const double rho_k = 1.0 / y.cwiseProduct(s).sum();
            const double beta = rho_k * y.cwiseProduct(q).sum();
            q += (alpha[k] - beta) * s;
        }
        return Eigen::MatrixXd(-q);
    };

    int iter = 0;
    for (; iter < opt.max_outer_iters; ++iter) {
        const double grad_norm = current.grad_theta.lpNorm<Eigen::Infinity>();
        if (grad_norm <= opt.grad_tolerance && current.sinkhorn_converged) {
            result.converged = true;
            break;
        }

        // Armijo backtracking along `direction`; updates result.theta and
        // `current` on success.
        double accepted_step = 0.0;
        const auto line_search = [&](const Eigen::MatrixXd& direction,
                                     double trial_step) {
            const double slope = direction.cwiseProduct(current.grad_theta).sum();
            double step = trial_step;
            EnergyReport next;
            Eigen::MatrixXd candidate;
            for (int backtrack = 0; backtrack < 60; ++backtrack) {
                candidate = result.theta + step * direction;
                bool finite_trial = true;
                try {
                    next = energy_and_gradient(problem, candidate, &warm);
                } catch (const NonFiniteState&) {
                    // Overshooting trial step; just back off.
                    finite_trial = false;
                }
                if (!finite_trial) {
                    step *= opt.armijo_shrink;
                    continue;
                }
                result.total_sinkhorn_iterations += next.sinkhorn_iterations;
                if (next.energy <= current.energy + opt.armijo_c1 * step * slope) {
                    if (opt.method == OptimizerSpec::Method::Lbfgs) {
                        const Eigen::MatrixXd s = step * direction;
                        const Eigen::MatrixXd y = next.grad_theta - current.grad_theta;
                        const double sy = s.cwiseProduct(y).sum();
                        if (sy > 1e-12 * s.norm() * y.norm()) {
                            pairs.emplace_back(s, y);
                            if (static_cast<int>(pairs.size()) > opt.lbfgs_memory) {
                                pairs.pop_front();
                            }
                        }
                    }
                    result.theta = candidate;
                    current = next;
                    accepted_step = step;
                    return true;
                }
                step *= opt.armijo_shrink;
            }
            return false;
        };

        const double sd_step = opt.armijo_initial_step / std::max(1.0, grad_norm);
        bool accepted = false;
        bool tried_quasi_newton = false;
        if (opt.method == OptimizerSpec::Method::Lbfgs && !pairs.empty()) {
            const Eigen::MatrixXd direction = lbfgs_direction(current.grad_theta);
            if (direction.cwiseProduct(current.grad_theta).sum() < 0.0) {
                tried_quasi_newton = true;
                accepted = line_search(direction, 1.0);
            }
        }
        if (!accepted) {
            // Steepest-descent (Armijo) step, also the fallback when the
            // quasi-Newton direction stalls.
            if (tried_quasi_newton) pairs.clear();
            accepted = line_search(-current.grad_theta, sd_step);
        }

        if (!accepted) {
            result.line_search_failure = true;
            break;
        }
        record(iter + 1, current, accepted_step);
        result.last_sinkhorn_converged = current.sinkhorn_converged;
    }

    result.outer_iterations = iter;
    result.final_energy = current.energy;
    result.final_fidelity = current.fidelity;
    result.last_sinkhorn_converged = current.sinkhorn_converged;
    return result;
}

RegistrationResult register_two_step(const RegistrationProblem& problem,
                                     const OtParams& coarse, const FidelitySpec& fine,
                                     std::optional<OptimizerSpec> fine_optimizer) {
    RegistrationProblem coarse_problem = problem;
    coarse_problem.fidelity.kind = FidelityKind::Ot;
    coarse_problem.fidelity.ot = coarse;

    RegistrationResult coarse_result =
        register_shapes(coarse_problem, std::nullopt, "coarse");

    RegistrationProblem fine_problem = problem;
    fine_problem.fidelity = fine;
    if (fine_optimizer) fine_problem.optimizer = *fine_optimizer;
    RegistrationResult fine_result =
        register_shapes(fine_problem, coarse_result.theta, "fine");

    // Concatenate histories, renumbering the fine phase after the coarse one.
    const int offset = coarse_result.history.empty()
                           ? 0
                           : coarse_result.history.back().iteration + 1;
    for (auto& rec : fine_result.history) rec.iteration += offset;
    fine_result.history.insert(fine_result.history.begin(),
                               coarse_result.history.begin(),
                               coarse_result.history.end());
    fine_result.total_sinkhorn_iterations += coarse_result.total_sinkhorn_iterations;
    fine_result.outer_iterations += coarse_result.outer_iterations;
    return fine_result;
}

}  // namespace otreg
