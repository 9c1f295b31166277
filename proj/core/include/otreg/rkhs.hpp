#pragma once

#include <Eigen/Dense>

#include "otreg/measures.hpp"
#include "otreg/ot.hpp"

namespace otreg {

// Kernel-varifold reproducing kernel: Gaussian of bandwidth sigma on
// positions (normalized so K(x,x) = 1) times <u,v>^angular_exponent on
// directions. angular_exponent = 0 disables the angular window; nonzero
// exponents must be even so the kernel stays positive definite on
// unoriented data.
struct KernelSpec {
    double sigma = 0.1;
    int angular_exponent = 0;

    void validate() const;
};

// Squared kernel-norm discrepancy <mu - nu, mu - nu>_K before clamping;
// may dip a hair below zero through roundoff.
double rkhs_inner_discrepancy(const KernelSpec& spec, const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu);

// max(0, rkhs_inner_discrepancy).
double rkhs_value(const KernelSpec& spec, const DiscreteMeasure& mu,
                  const DiscreteMeasure& nu);

// Analytic gradients of the double-sum discrepancy with respect to mu's
// masses, positions and directions (ambient direction derivative, including
// the self-pair terms, so finite differences in ambient coordinates match).
MeasureGradient rkhs_gradients(const KernelSpec& spec, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu);

}  // namespace otreg
