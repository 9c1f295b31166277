#pragma once

// Test-only oracles, kept independent of the solver code paths they check:
// the transport objective is minimized directly over the plan (log
// parameterization for relaxed marginals, reduced affine parameterization for
// hard marginals), never through dual potentials or log-sum-exp updates.

#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "otreg/measures.hpp"

namespace oracle {

// Objective of the relaxed transport problem at an arbitrary nonnegative plan
// (0 log 0 = 0). rho = +inf evaluates only cost + entropy; the caller is then
// responsible for feeding marginal-feasible plans.
double primal_objective(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                        const Eigen::VectorXd& q, double epsilon, double rho,
                        const Eigen::MatrixXd& plan);

struct PrimalSolution {
    Eigen::MatrixXd plan;
    double value;
};

// Direct minimization over the plan: multi-start Armijo descent polishing the
// product-coupling initialization. For rho = +inf the marginals must balance.
PrimalSolution minimize_primal(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                               const Eigen::VectorXd& q, double epsilon, double rho);

// Golden-section search for a scalar minimizer on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol);

// Central finite difference of a scalar function of one coordinate.
double central_difference(const std::function<double(double)>& f, double x, double h);

// |got - want| / max(|want|, floor).
double rel_error(double got, double want, double floor = 1e-12);

// Random test fixtures.
Eigen::VectorXd random_masses(std::mt19937_64& rng, int n, double lo = 0.5,
                              double hi = 1.5);
otreg::DiscreteMeasure random_measure(std::mt19937_64& rng, int n, int dim);

}  // namespace oracle
