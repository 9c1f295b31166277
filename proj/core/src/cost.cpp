#include "otreg/cost.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "otreg/parallel.hpp"

namespace otreg {

namespace {

constexpr double kAcosClamp = 1e-9;        // arccos argument kept inside (-1, 1)
constexpr double kSingularityTol = 1e-7;   // gradient refuses |<u,v>| beyond this

double angular_distance(AngularDistance kind, double dot) {
    switch (kind) {
        case AngularDistance::Geodesic:
            return std::acos(std::clamp(dot, -1.0 + kAcosClamp, 1.0 - kAcosClamp));
        case AngularDistance::CurrentsLike:
            return 1.0 - dot;
        case AngularDistance::VarifoldLike:
            return 2.0 - 2.0 * dot * dot;
    }
    return 0.0;
}

double int_pow(double base, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= base;
    return r;
}

}  // namespace

void CostSpec::validate() const {
    if (!(alpha >= 0.0)) throw Error("cost alpha must be nonnegative");
    if (k < 1) throw Error("cost exponent k must be >= 1");
    if (family == CostFamily::Multiplicative &&
        angular == AngularDistance::VarifoldLike && k % 2 != 0) {
        throw Error("varifold-like multiplicative cost requires even k");
    }
}

double eval_cost(const CostSpec& spec,
                 const Eigen::Ref<const Eigen::VectorXd>& a,
                 const Eigen::Ref<const Eigen::VectorXd>& u,
                 const Eigen::Ref<const Eigen::VectorXd>& b,
                 const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double sq = (a - b).squaredNorm();
    const double dot = u.dot(v);
    if (spec.family == CostFamily::Additive) {
        const double dist = angular_distance(spec.angular, dot);
        return sq + spec.alpha * dist * dist;
    }
    return sq * (1.0 + spec.alpha * (1.0 - int_pow(dot, spec.k)));
}

Eigen::MatrixXd eval_cost_matrix(const CostSpec& spec,
                                 const DiscreteMeasure& source,
                                 const DiscreteMeasure& target) {
    if (source.dim() != target.dim()) {
        throw DimensionMismatch("cost matrix needs measures of equal dimension");
    }
    const Eigen::Index ni = source.size();
    const Eigen::Index nj = target.size();
    Eigen::MatrixXd values(ni, nj);
    parallel_for(ni, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            for (Eigen::Index j = 0; j < nj; ++j) {
                values(i, j) = eval_cost(spec, source.positions.row(i),
                                         source.directions.row(i),
                                         target.positions.row(j),
                                         target.directions.row(j));
            }
        }
    });
    return values;
}

CostGradient cost_gradient_x(const CostSpec& spec,
                             const Eigen::Ref<const Eigen::VectorXd>& a,
                             const Eigen::Ref<const Eigen::VectorXd>& u,
                             const Eigen::Ref<const Eigen::VectorXd>& b,
                             const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double dot = u.dot(v);
    CostGradient grad;
    if (spec.family == CostFamily::Additive) {
        grad.position = 2.0 * (a - b);
        if (spec.alpha == 0.0) {
            // Angular term absent; no singularity to guard.
            grad.direction = Eigen::VectorXd::Zero(u.size());
            return grad;
        }
        double dd2_ddot;  // d(dist^2)/d<u,v>
        switch (spec.angular) {
            case AngularDistance::Geodesic: {
                if (std::abs(dot) >= 1.0 - kSingularityTol) {
                    throw AngularSingularity(
                        "geodesic angular gradient undefined near |<u,v>| = 1 (got " +
                        std::to_string(dot) + ")");
                }
                const double theta = std::acos(dot);
                dd2_ddot = -2.0 * theta / std::sqrt(1.0 - dot * dot);
                break;
            }
            case AngularDistance::CurrentsLike:
                dd2_ddot = -2.0 * (1.0 - dot);
                break;
            case AngularDistance::VarifoldLike:
                dd2_ddot = 2.0 * (2.0 - 2.0 * dot * dot) * (-4.0 * dot);
                break;
            default:
                dd2_ddot = 0.0;
        }
        grad.direction = spec.alpha * dd2_ddot * v;
    } else {
        const double sq = (a - b).squaredNorm();
        const double angular_factor = 1.0 + spec.alpha * (1.0 - int_pow(dot, spec.k));
        grad.position = 2.0 * angular_factor * (a - b);
        grad.direction =
            sq * spec.alpha * (-static_cast<double>(spec.k) * int_pow(dot, spec.k - 1)) * v;
    }
    return grad;
}

}  // namespace otreg
