#include "otreg/rkhs.hpp"

#include <cmath>

#include "otreg/errors.hpp"
#include "otreg/parallel.hpp"

namespace otreg {

namespace {

double int_pow(double base, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= base;
    return r;
}

double gaussian(double sq_dist, double sigma) {
    return std::exp(-sq_dist / (2.0 * sigma * sigma));
}

// sum_k w_k K(x_i, y_k) for one row of a cross-correlation, separated so the
// three blocks (mu-mu, mu-nu, nu-nu) share the loop.
double correlation_row(const KernelSpec& spec, const DiscreteMeasure& a,
                       Eigen::Index i, const DiscreteMeasure& b) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < b.size(); ++k) {
        const double g = gaussian((a.positions.row(i) - b.positions.row(k)).squaredNorm(),
                                  spec.sigma);
        const double ang = spec.angular_exponent == 0
                               ? 1.0
                               : int_pow(a.directions.row(i).dot(b.directions.row(k)),
                                         spec.angular_exponent);
        acc += b.masses(k) * g * ang;
    }
    return acc;
}

}  // namespace

void KernelSpec::validate() const {
    if (!(sigma > 0.0)) throw Error("rkhs sigma must be positive");
    if (angular_exponent < 0 || angular_exponent % 2 != 0) {
        throw Error("rkhs angular_exponent must be a nonnegative even integer");
    }
}

double rkhs_inner_discrepancy(const KernelSpec& spec, const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu) {
    if (mu.dim() != nu.dim()) {
        throw DimensionMismatch("rkhs fidelity needs measures of equal dimension");
    }
    const Eigen::Index ni = mu.size();
    const Eigen::Index nj = nu.size();

    Eigen::VectorXd partial(ni + nj);
    parallel_for(ni + nj, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index r = begin; r < end; ++r) {
            if (r < ni) {
                partial(r) = mu.masses(r) * (correlation_row(spec, mu, r, mu) -
                                             2.0 * correlation_row(spec, mu, r, nu));
            } else {
                const Eigen::Index j = r - ni;
                partial(r) = nu.masses(j) * correlation_row(spec, nu, j, nu);
            }
        }
    });
    double acc = 0.0;
    for (Eigen::Index r = 0; r < partial.size(); ++r) acc += partial(r);
    return acc;
}

double rkhs_value(const KernelSpec& spec, const DiscreteMeasure& mu,
                  const DiscreteMeasure& nu) {
    return std::max(0.0, rkhs_inner_discrepancy(spec, mu, nu));
}

MeasureGradient rkhs_gradients(const KernelSpec& spec, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu) {
    if (mu.dim() != nu.dim()) {
        throw DimensionMismatch("rkhs fidelity needs measures of equal dimension");
    }
    const Eigen::Index ni = mu.size();
    const int d = mu.dim();
    const double inv_sq_sigma = 1.0 / (spec.sigma * spec.sigma);
    const int m = spec.angular_exponent;

    MeasureGradient grad;
    grad.masses.resize(ni);
    grad.positions.resize(ni, d);
    grad.directions.resize(ni, d);

    parallel_for(ni, [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index i = begin; i < end; ++i) {
            double gm = 0.0;
            Eigen::VectorXd ga = Eigen::VectorXd::Zero(d);
            Eigen::VectorXd gu = Eigen::VectorXd::Zero(d);

            // Signed sweep: +1 against mu, -2... folded as weight per block.
            const auto accumulate = [&](const DiscreteMeasure& other, double sign) {
                for (Eigen::Index k = 0; k < other.size(); ++k) {
                    const Eigen::VectorXd diff =
                        mu.positions.row(i) - other.positions.row(k);
                    const double g = gaussian(diff.squaredNorm(), spec.sigma);
                    const double dot = m == 0 ? 1.0
                                              : mu.directions.row(i).dot(
                                                    other.directions.row(k));
                    const double ang = m == 0 ? 1.0 : int_pow(dot, m);
                    const double w = sign * other.masses(k) * g;
                    gm += w * ang;
                    ga += (2.0 * mu.masses(i)) * w * ang * (-inv_sq_sigma) * diff;
                    if (m != 0) {
                        gu += (2.0 * mu.masses(i)) * w * m * int_pow(dot, m - 1) *
                              other.directions.row(k).transpose();
                    }
                }
            };
            accumulate(mu, 1.0);
            accumulate(nu, -1.0);

            grad.masses(i) = 2.0 * gm;
            grad.positions.row(i) = ga.transpose();
            grad.directions.row(i) = gu.transpose();
        }
    });
    return grad;
}

}  // namespace otreg
