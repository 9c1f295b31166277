#include "otreg/ot.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "otreg/parallel.hpp"

namespace otreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log p with exact exclusion: zero masses map to -inf and stay out of every
// reduction below.
Eigen::VectorXd masked_log(const Eigen::VectorXd& w) {
    Eigen::VectorXd out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        out(i) = w(i) > 0.0 ? std::log(w(i)) : kNegInf;
    }
    return out;
}

// LSE over j of (u_i + v_j - c_ij)/eps for one row, skipping excluded columns.
double row_lse(const Eigen::MatrixXd& cost, const Eigen::VectorXd& u,
               const Eigen::VectorXd& v, const std::vector<Eigen::Index>& cols,
               double eps, Eigen::Index i) {
    double max_term = kNegInf;
    for (const Eigen::Index j : cols) {
        const double t = (u(i) + v(j) - cost(i, j)) / eps;
        if (t > max_term) max_term = t;
    }
    double acc = 0.0;
    for (const Eigen::Index j : cols) {
        acc += std::exp((u(i) + v(j) - cost(i, j)) / eps - max_term);
    }
    return max_term + std::log(acc);
}

double col_lse(const Eigen::MatrixXd& cost, const Eigen::VectorXd& u,
               const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows,
               double eps, Eigen::Index j) {
    double max_term = kNegInf;
    for (const Eigen::Index i : rows) {
        const double t = (u(i) + v(j) - cost(i, j)) / eps;
        if (t > max_term) max_term = t;
    }
    double acc = 0.0;
    for (const Eigen::Index i : rows) {
        acc += std::exp((u(i) + v(j) - cost(i, j)) / eps - max_term);
    }
    return max_term + std::log(acc);
}

}  // namespace

void OtParams::validate() const {
    if (!(epsilon > 0.0)) throw Error("ot epsilon must be positive");
    if (!(rho > 0.0)) throw Error("ot rho must be positive or +inf");
    if (max_iters < 1) throw Error("ot max_iters must be >= 1");
    const double lam = lambda();
    if (!(lam > 0.0 && lam <= 1.0)) throw Error("ot lambda outside (0, 1]");
    if ((lam == 1.0) != balanced()) throw Error("lambda may reach 1 only for rho = +inf");
}

TransportState sinkhorn(const Eigen::MatrixXd& cost,
                        const Eigen::VectorXd& p,
                        const Eigen::VectorXd& q,
                        const OtParams& params,
                        const Eigen::VectorXd* warm_u,
                        const Eigen::VectorXd* warm_v) {
    params.validate();
    const Eigen::Index ni = cost.rows();
    const Eigen::Index nj = cost.cols();
    if (p.size() != ni || q.size() != nj) {
        throw DimensionMismatch("marginal sizes do not match the cost matrix");
    }
    if (!cost.allFinite()) throw Error("cost matrix contains non-finite entries");
    if (!(p.sum() > 0.0)) throw ZeroMass(ZeroMass::Side::Source, "source total mass is zero");
    if (!(q.sum() > 0.0)) throw ZeroMass(ZeroMass::Side::Target, "target total mass is zero");

    std::vector<Eigen::Index> rows, cols;
    for (Eigen::Index i = 0; i < ni; ++i) {
        if (p(i) > 0.0) rows.push_back(i);
    }
    for (Eigen::Index j = 0; j < nj; ++j) {
        if (q(j) > 0.0) cols.push_back(j);
    }

    const double eps = params.epsilon;
    const double lam = params.lambda();
    const double tol = params.stop_tolerance();
    const Eigen::VectorXd log_p = masked_log(p);
    const Eigen::VectorXd log_q = masked_log(q);

    TransportState state;
    state.u = Eigen::VectorXd::Zero(ni);
    state.v = Eigen::VectorXd::Zero(nj);
    const bool warm = (warm_u && warm_u->size() == ni) || (warm_v && warm_v->size() == nj);
    if (warm_u && warm_u->size() == ni) state.u = *warm_u;
    if (warm_v && warm_v->size() == nj) state.v = *warm_v;
    for (Eigen::Index i = 0; i < ni; ++i) {
        if (p(i) <= 0.0) state.u(i) = kNegInf;
    }
    for (Eigen::Index j = 0; j < nj; ++j) {
        if (q(j) <= 0.0) state.v(j) = kNegInf;
    }
    if (warm && params.balanced()) {
        // Balanced duals are defined up to the gauge (u - c, v + c). Carried
        // potentials may arrive with an arbitrary (possibly large) gauge from
        // an earlier mass-imbalanced solve; re-center them symmetrically so
        // warm starts cannot accumulate it. Cold starts are left untouched.
        double mean_u = 0.0, mean_v = 0.0, total_p = 0.0, total_q = 0.0;
        for (const Eigen::Index i : rows) {
            mean_u += p(i) * state.u(i);
            total_p += p(i);
        }
        for (const Eigen::Index j : cols) {
            mean_v += q(j) * state.v(j);
            total_q += q(j);
        }
        const double gauge = 0.5 * (mean_u / total_p - mean_v / total_q);
        if (std::isfinite(gauge)) {
            for (const Eigen::Index i : rows) state.u(i) -= gauge;
            for (const Eigen::Index j : cols) state.v(j) += gauge;
        }
    }

    Eigen::VectorXd new_u(ni);
    int drift_stall = 0;
    double prev_mean_step = std::numeric_limits<double>::quiet_NaN();
    for (int iter = 1; iter <= params.max_iters; ++iter) {
        state.iterations = iter;

        parallel_for(static_cast<std::ptrdiff_t>(rows.size()),
                     [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
                         for (std::ptrdiff_t r = begin; r < end; ++r) {
                             const Eigen::Index i = rows[static_cast<size_t>(r)];
                             const double lse = row_lse(cost, state.u, state.v, cols, eps, i);
                             new_u(i) = lam * state.u(i) + eps * lam * log_p(i) -
                                        eps * lam * lse;
                         }
                     });

        double update = 0.0;
        double mean_step = 0.0;
        for (const Eigen::Index i : rows) {
            update = std::max(update, std::abs(new_u(i) - state.u(i)));
            mean_step += new_u(i) - state.u(i);
        }
        mean_step /= static_cast<double>(rows.size());
        double oscillation = 0.0;
        for (const Eigen::Index i : rows) {
            oscillation = std::max(oscillation,
                                   std::abs(new_u(i) - state.u(i) - mean_step));
            state.u(i) = new_u(i);
        }
        state.final_update_norm = update;
        if (update < tol) {
            // Row marginals are exact here in the balanced case; stop before
            // the v half-step.
            state.converged = true;
            break;
        }
        if (params.balanced() && oscillation < 0.1 * tol && std::abs(mean_step) >= tol) {
            // Hard marginals with unequal totals: the dual update settles on a
            // constant vector (a pure gauge drift of (u, v) that leaves the
            // plan unchanged). Letting it run only inflates the potentials,
            // so stop once the drift has been steady for a few iterations and
            // report the solve as unconverged.
            if (std::abs(mean_step - prev_mean_step) < tol) {
                if (++drift_stall >= 5) break;
            } else {
                drift_stall = 0;
            }
            prev_mean_step = mean_step;
        } else {
            drift_stall = 0;
        }

        parallel_for(static_cast<std::ptrdiff_t>(cols.size()),
                     [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
                         for (std::ptrdiff_t cidx = begin; cidx < end; ++cidx) {
                             const Eigen::Index j = cols[static_cast<size_t>(cidx)];
                             const double lse = col_lse(cost, state.u, state.v, rows, eps, j);
                             state.v(j) = lam * state.v(j) + eps * lam * log_q(j) -
                                          eps * lam * lse;
                         }
                     });
    }

    if (params.balanced() && !state.converged) {
        // A mass-imbalanced balanced solve diverges along the gauge
        // (u + c, v - c); the plan is gauge-invariant but the potentials (and
        // anything derived from them, like mass gradients) are not. Return
        // the canonical symmetric representative.
        double mean_u = 0.0, mean_v = 0.0, total_p = 0.0, total_q = 0.0;
        for (const Eigen::Index i : rows) {
            mean_u += p(i) * state.u(i);
            total_p += p(i);
        }
        for (const Eigen::Index j : cols) {
            mean_v += q(j) * state.v(j);
            total_q += q(j);
        }
        const double gauge = 0.5 * (mean_u / total_p - mean_v / total_q);
        if (std::isfinite(gauge)) {
            for (const Eigen::Index i : rows) state.u(i) -= gauge;
            for (const Eigen::Index j : cols) state.v(j) += gauge;
        }
    }

    state.plan.resize(ni, nj);
    parallel_for(ni, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            for (Eigen::Index j = 0; j < nj; ++j) {
                const double t = (state.u(i) + state.v(j) - cost(i, j)) / eps;
                state.plan(i, j) = std::exp(t);
            }
        }
    });
    return state;
}

FidelityValue ot_value(const Eigen::MatrixXd& cost,
                       const Eigen::VectorXd& p,
                       const Eigen::VectorXd& q,
                       const TransportState& state,
                       const OtParams& params) {
    const Eigen::Index ni = cost.rows();
    const Eigen::Index nj = cost.cols();
    const Eigen::MatrixXd& plan = state.plan;

    double stripped = 0.0;
    double entropy = 0.0;  // H(gamma) = -sum gamma (log gamma - 1), 0 log 0 = 0
    for (Eigen::Index i = 0; i < ni; ++i) {
        for (Eigen::Index j = 0; j < nj; ++j) {
            const double g = plan(i, j);
            if (g > 0.0) {
                stripped += cost(i, j) * g;
                entropy -= g * (std::log(g) - 1.0);
            }
        }
    }

    FidelityValue value;
    value.stripped = stripped;
    value.regularized = stripped - params.epsilon * entropy;

    if (!params.balanced()) {
        // KL(h|p) = sum h log(h/p) - h + p, with the 0 log 0 = 0 convention.
        const Eigen::VectorXd row = plan.rowwise().sum();
        const Eigen::VectorXd col = plan.colwise().sum();
        double kl = 0.0;
        for (Eigen::Index i = 0; i < ni; ++i) {
            if (row(i) > 0.0) {
                kl += row(i) * std::log(row(i) / p(i)) - row(i) + p(i);
            } else {
                kl += p(i);
            }
        }
        for (Eigen::Index j = 0; j < nj; ++j) {
            if (col(j) > 0.0) {
                kl += col(j) * std::log(col(j) / q(j)) - col(j) + q(j);
            } else {
                kl += q(j);
            }
        }
        value.regularized += params.rho * kl;
    }
    return value;
}

MeasureGradient ot_gradients(const CostSpec& cost_spec,
                             const DiscreteMeasure& source,
                             const DiscreteMeasure& target,
                             const TransportState& state,
                             const OtParams& params) {
    const Eigen::Index ni = source.size();
    const Eigen::Index nj = target.size();
    if (state.plan.rows() != ni || state.plan.cols() != nj) {
        throw DimensionMismatch("transport state does not match the measures");
    }
    const int d = source.dim();

    MeasureGradient grad;
    grad.masses.resize(ni);
    grad.positions = Eigen::MatrixXd::Zero(ni, d);
    grad.directions = Eigen::MatrixXd::Zero(ni, d);

    if (params.balanced()) {
        grad.masses = state.u;
    } else {
        for (Eigen::Index i = 0; i < ni; ++i) {
            grad.masses(i) = params.rho * (1.0 - std::exp(-state.u(i) / params.rho));
        }
    }

    parallel_for(ni, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            Eigen::VectorXd gpos = Eigen::VectorXd::Zero(d);
            Eigen::VectorXd gdir = Eigen::VectorXd::Zero(d);
            for (Eigen::Index j = 0; j < nj; ++j) {
                const double g = state.plan(i, j);
                if (g <= 0.0) continue;
                const CostGradient cg = cost_gradient_x(
                    cost_spec, source.positions.row(i), source.directions.row(i),
                    target.positions.row(j), target.directions.row(j));
                gpos += g * cg.position;
                gdir += g * cg.direction;
            }
            grad.positions.row(i) = gpos.transpose();
            grad.directions.row(i) = gdir.transpose();
        }
    });
    return grad;
}

}  // namespace otreg
