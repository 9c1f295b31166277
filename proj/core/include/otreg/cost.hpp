#pragma once

#include <Eigen/Dense>

#include "otreg/errors.hpp"
#include "otreg/measures.hpp"

namespace otreg {

enum class CostFamily { Additive, Multiplicative };

// Angular distance entering the additive family; the returned value is
// squared, so CurrentsLike (1 - <u,v>) and VarifoldLike (2 - 2<u,v>^2) enter
// as their squares.
enum class AngularDistance { Geodesic, CurrentsLike, VarifoldLike };

// Ground cost on (position, direction) pairs.
//   Additive:        |a-b|^2 + alpha * d(u,v)^2
//   Multiplicative:  |a-b|^2 * (1 + alpha * (1 - <u,v>^k))
struct CostSpec {
    double alpha = 1.0;
    int k = 4;
    CostFamily family = CostFamily::Multiplicative;
    AngularDistance angular = AngularDistance::Geodesic;

    void validate() const;
};

double eval_cost(const CostSpec& spec,
                 const Eigen::Ref<const Eigen::VectorXd>& a,
                 const Eigen::Ref<const Eigen::VectorXd>& u,
                 const Eigen::Ref<const Eigen::VectorXd>& b,
                 const Eigen::Ref<const Eigen::VectorXd>& v);

// Dense |I| x |J| matrix of eval_cost over all source/target atom pairs.
Eigen::MatrixXd eval_cost_matrix(const CostSpec& spec,
                                 const DiscreteMeasure& source,
                                 const DiscreteMeasure& target);

struct CostGradient {
    Eigen::VectorXd position;   // d/da
    Eigen::VectorXd direction;  // d/du, ambient coordinates
};

// Analytic derivative of eval_cost with respect to the first argument. The
// direction part is an ambient derivative; callers needing the on-sphere
// gradient project it downstream (the rebuild adjoint does).
CostGradient cost_gradient_x(const CostSpec& spec,
                             const Eigen::Ref<const Eigen::VectorXd>& a,
                             const Eigen::Ref<const Eigen::VectorXd>& u,
                             const Eigen::Ref<const Eigen::VectorXd>& b,
                             const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace otreg
