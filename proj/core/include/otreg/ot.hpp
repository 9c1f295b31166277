#pragma once

#include <limits>

#include <Eigen/Dense>

#include "otreg/cost.hpp"
#include "otreg/errors.hpp"
#include "otreg/measures.hpp"

namespace otreg {

// Entropic regularization strength epsilon and marginal relaxation rho, both
// in cost units. rho = +infinity is the balanced (hard-marginal) case and is
// handled as its own code path, not as a large-rho approximation.
struct OtParams {
    double epsilon = 1e-2;
    double rho = std::numeric_limits<double>::infinity();
    int max_iters = 10000;
    double tolerance = -1.0;  // <= 0: defaults to 1e-6 * epsilon

    bool balanced() const { return std::isinf(rho); }
    double lambda() const { return balanced() ? 1.0 : rho / (rho + epsilon); }
    double stop_tolerance() const { return tolerance > 0.0 ? tolerance : 1e-6 * epsilon; }

    void validate() const;
};

// Dual potentials and the derived plan gamma = exp((u_i + v_j - c_ij) /
// epsilon). Atoms with zero mass are excluded exactly: their potential is
// -infinity and their plan rows/columns are zero.
struct TransportState {
    Eigen::VectorXd u;
    Eigen::VectorXd v;
    Eigen::MatrixXd plan;
    int iterations = 0;
    bool converged = false;
    double final_update_norm = std::numeric_limits<double>::infinity();
};

// Alternating log-domain dual updates
//   u <- lambda u + eps lambda log p - eps lambda LSE_J(K(u,v))
//   v <- lambda v + eps lambda log q - eps lambda LSE_I(K(u,v))
// with lambda = rho/(rho+eps), starting from (u,v) = (0,0) unless warm-start
// potentials are supplied. Log-sum-exp reductions subtract the running max and
// sum sequentially, so results are reproducible run to run. Iterations stop
// right after a u-update whose sup-norm change falls below the tolerance (at
// that point row marginals are exact in the balanced case); hitting max_iters
// returns converged = false rather than throwing.
TransportState sinkhorn(const Eigen::MatrixXd& cost,
                        const Eigen::VectorXd& p,
                        const Eigen::VectorXd& q,
                        const OtParams& params,
                        const Eigen::VectorXd* warm_u = nullptr,
                        const Eigen::VectorXd* warm_v = nullptr);

// Transport objective at the computed plan. `regularized` is the full
// objective (cost + entropy + KL relaxation terms; KL terms are identically
// zero in the balanced case); `stripped` keeps only sum_ij c_ij gamma_ij.
struct FidelityValue {
    double regularized = 0.0;
    double stripped = 0.0;
};

FidelityValue ot_value(const Eigen::MatrixXd& cost,
                       const Eigen::VectorXd& p,
                       const Eigen::VectorXd& q,
                       const TransportState& state,
                       const OtParams& params);

// Gradients of a fidelity with respect to a measure's masses, positions and
// directions (direction part in ambient coordinates).
struct MeasureGradient {
    Eigen::VectorXd masses;
    Eigen::MatrixXd positions;
    Eigen::MatrixXd directions;
};

// Gradients of the regularized transport cost with respect to the source
// measure: d/dp_i = rho (1 - exp(-u_i/rho)) (= u_i when rho = +infinity), and
// the position/direction parts accumulate gamma_ij-weighted cost derivatives.
MeasureGradient ot_gradients(const CostSpec& cost_spec,
                             const DiscreteMeasure& source,
                             const DiscreteMeasure& target,
                             const TransportState& state,
                             const OtParams& params);

}  // namespace otreg
