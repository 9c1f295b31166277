#include "oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracle {

namespace {

constexpr double kGolden = 0.6180339887498949;

double entropy_term(const Eigen::MatrixXd& plan) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            const double g = plan(i, j);
            if (g > 0.0) acc += g * (std::log(g) - 1.0);
        }
    }
    return acc;
}

double kl_term(const Eigen::VectorXd& h, const Eigen::VectorXd& ref) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        if (h(i) > 0.0) {
            acc += h(i) * std::log(h(i) / ref(i)) - h(i) + ref(i);
        } else {
            acc += ref(i);
        }
    }
    return acc;
}

// Armijo descent over an unconstrained parameter vector; `eval` returns +inf
// for infeasible points. Plain and slow, which is the point: no shared
// machinery with the solver under test.
Eigen::VectorXd armijo_descent(
    const std::function<double(const Eigen::VectorXd&)>& eval,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    Eigen::VectorXd x, int max_iters, double grad_tol) {
    double step = 1.0;
    double fx = eval(x);
    for (int it = 0; it < max_iters; ++it) {
        const Eigen::VectorXd g = grad(x);
        if (g.lpNorm<Eigen::Infinity>() < grad_tol) break;
        bool accepted = false;
        for (int back = 0; back < 80; ++back) {
            const Eigen::VectorXd trial = x - step * g;
            const double ft = eval(trial);
            if (ft <= fx - 1e-4 * step * g.squaredNorm()) {
                x = trial;
                fx = ft;
                step *= 1.6;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    return x;
}

PrimalSolution minimize_relaxed(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                                const Eigen::VectorXd& q, double epsilon, double rho) {
    const Eigen::Index ni = cost.rows(), nj = cost.cols();
    const Eigen::Index nvar = ni * nj;

    const auto unpack = [&](const Eigen::VectorXd& z) {
        Eigen::MatrixXd plan(ni, nj);
        for (Eigen::Index i = 0; i < ni; ++i) {
            for (Eigen::Index j = 0; j < nj; ++j) {
                plan(i, j) = std::exp(z(i * nj + j));
            }
        }
        return plan;
    };
    const auto eval = [&](const Eigen::VectorXd& z) {
        return primal_objective(cost, p, q, epsilon, rho, unpack(z));
    };
    const auto grad = [&](const Eigen::VectorXd& z) {
        const Eigen::MatrixXd plan = unpack(z);
        const Eigen::VectorXd row = plan.rowwise().sum();
        const Eigen::VectorXd col = plan.colwise().sum();
        Eigen::VectorXd g(nvar);
        for (Eigen::Index i = 0; i < ni; ++i) {
            for (Eigen::Index j = 0; j < nj; ++j) {
                const double dplan = cost(i, j) + epsilon * z(i * nj + j) +
                                     rho * std::log(row(i) / p(i)) +
                                     rho * std::log(col(j) / q(j));
                g(i * nj + j) = plan(i, j) * dplan;
            }
        }
        return g;
    };

    // Product coupling plus two damped restarts.
    const double total = std::sqrt(p.sum() * q.sum());
    Eigen::VectorXd z0(nvar);
    for (Eigen::Index i = 0; i < ni; ++i) {
        for (Eigen::Index j = 0; j < nj; ++j) {
            z0(i * nj + j) = std::log(p(i) * q(j) / total);
        }
    }
    // Exact 1-D polish per log-coordinate after the descent phase.
    const auto coordinate_polish = [&](Eigen::VectorXd z) {
        double value = eval(z);
        for (int cycle = 0; cycle < 2000; ++cycle) {
            const double before = value;
            for (Eigen::Index k = 0; k < nvar; ++k) {
                const double t_star = golden_section(
                    [&](double t) {
                        Eigen::VectorXd mod = z;
                        mod(k) += t;
                        return eval(mod);
                    },
                    -8.0, 8.0, 1e-13);
                Eigen::VectorXd mod = z;
                mod(k) += t_star;
                const double trial = eval(mod);
                if (trial < value) {
                    z = mod;
                    value = trial;
                }
            }
            if (before - value < 1e-15 * (1.0 + std::abs(value))) break;
        }
        return z;
    };

    PrimalSolution best;
    best.value = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> noise(-0.5, 0.5);
    for (int start = 0; start < 3; ++start) {
        Eigen::VectorXd z = z0;
        if (start > 0) {
            for (Eigen::Index k = 0; k < nvar; ++k) z(k) += noise(rng);
        }
        z = armijo_descent(eval, grad, z, 60000, 1e-12);
        z = coordinate_polish(z);
        const double value = eval(z);
        if (value < best.value) {
            best.value = value;
            best.plan = unpack(z);
        }
    }
    return best;
}

PrimalSolution minimize_balanced(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& q, double epsilon) {
    const Eigen::Index ni = cost.rows(), nj = cost.cols();
    if (std::abs(p.sum() - q.sum()) > 1e-9 * std::max(p.sum(), q.sum())) {
        throw std::invalid_argument("balanced oracle needs matching total masses");
    }

    if (ni == 1 || nj == 1) {
        // Fully determined by the marginals.
        PrimalSolution sol;
        sol.plan = ni == 1 ? Eigen::MatrixXd(q.transpose()) : Eigen::MatrixXd(p);
        sol.value = primal_objective(cost, p, q, epsilon,
                                     std::numeric_limits<double>::infinity(), sol.plan);
        return sol;
    }

    // Free block B = plan(0..ni-2, 0..nj-2); the last row/column absorb the
    // marginal constraints.
    const Eigen::Index nb = (ni - 1) * (nj - 1);
    const auto unpack = [&](const Eigen::VectorXd& b) {
        Eigen::MatrixXd plan(ni, nj);
        for (Eigen::Index i = 0; i < ni - 1; ++i) {
            for (Eigen::Index j = 0; j < nj - 1; ++j) {
                plan(i, j) = b(i * (nj - 1) + j);
            }
        }
        for (Eigen::Index i = 0; i < ni - 1; ++i) {
            plan(i, nj - 1) = p(i) - plan.row(i).head(nj - 1).sum();
        }
        for (Eigen::Index j = 0; j < nj; ++j) {
            plan(ni - 1, j) = q(j) - plan.col(j).head(ni - 1).sum();
        }
        return plan;
    };
    const auto eval = [&](const Eigen::VectorXd& b) {
        const Eigen::MatrixXd plan = unpack(b);
        if ((plan.array() <= 0.0).any()) {
            return std::numeric_limits<double>::infinity();
        }
        return primal_objective(cost, p, q, epsilon,
                                std::numeric_limits<double>::infinity(), plan);
    };
    const auto grad = [&](const Eigen::VectorXd& b) {
        const Eigen::MatrixXd plan = unpack(b);
        const auto dual = [&](Eigen::Index i, Eigen::Index j) {
            return cost(i, j) + epsilon * std::log(plan(i, j));
        };
        Eigen::VectorXd g(nb);
        for (Eigen::Index i = 0; i < ni - 1; ++i) {
            for (Eigen::Index j = 0; j < nj - 1; ++j) {
                g(i * (nj - 1) + j) = dual(i, j) - dual(i, nj - 1) -
                                      dual(ni - 1, j) + dual(ni - 1, nj - 1);
            }
        }
        return g;
    };

    const double total = q.sum();
    Eigen::VectorXd b0(nb);
    for (Eigen::Index i = 0; i < ni - 1; ++i) {
        for (Eigen::Index j = 0; j < nj - 1; ++j) {
            b0(i * (nj - 1) + j) = p(i) * q(j) / total;
        }
    }

    // Cyclic exact (golden-section) coordinate minimization. Gradient descent
    // stalls when the optimum pins plan entries against the positivity
    // boundary; 1-D searches on the exact feasible interval do not.
    const auto coordinate_polish = [&](Eigen::VectorXd b) {
        double value = eval(b);
        for (int cycle = 0; cycle < 4000; ++cycle) {
            const double before = value;
            for (Eigen::Index k = 0; k < nb; ++k) {
                const Eigen::Index i = k / (nj - 1);
                const Eigen::Index j = k % (nj - 1);
                const Eigen::MatrixXd plan = unpack(b);
                // Moving b_k by t shifts four plan entries by +-t.
                const double lo = -std::min(plan(i, j), plan(ni - 1, nj - 1)) + 1e-300;
                const double hi = std::min(plan(i, nj - 1), plan(ni - 1, j)) - 1e-300;
                if (!(hi > lo)) continue;
                const double t_star = golden_section(
                    [&](double t) {
                        Eigen::VectorXd mod = b;
                        mod(k) += t;
                        return eval(mod);
                    },
                    lo, hi, 1e-15 * std::max(1.0, hi - lo));
                Eigen::VectorXd mod = b;
                mod(k) += t_star;
                const double trial = eval(mod);
                if (trial < value) {
                    b = mod;
                    value = trial;
                }
            }
            if (before - value < 1e-15 * (1.0 + std::abs(value))) break;
        }
        return b;
    };

    PrimalSolution best;
    best.value = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(98765);
    std::uniform_real_distribution<double> damp(0.7, 1.0);
    for (int start = 0; start < 3; ++start) {
        Eigen::VectorXd b = b0;
        if (start > 0) {
            for (Eigen::Index k = 0; k < nb; ++k) b(k) *= damp(rng);
        }
        if (!std::isfinite(eval(b))) continue;
        b = armijo_descent(eval, grad, b, 60000, 1e-12);
        b = coordinate_polish(b);
        const double value = eval(b);
        if (value < best.value) {
            best.value = value;
            best.plan = unpack(b);
        }
    }
    return best;
}

}  // namespace

double primal_objective(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                        const Eigen::VectorXd& q, double epsilon, double rho,
                        const Eigen::MatrixXd& plan) {
    double value = (cost.array() * plan.array()).sum() + epsilon * entropy_term(plan);
    if (!std::isinf(rho)) {
        value += rho * kl_term(plan.rowwise().sum(), p);
        value += rho * kl_term(plan.colwise().sum(), q);
    }
    return value;
}

PrimalSolution minimize_primal(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                               const Eigen::VectorXd& q, double epsilon, double rho) {
    if (std::isinf(rho)) return minimize_balanced(cost, p, q, epsilon);
    return minimize_relaxed(cost, p, q, epsilon, rho);
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol) {
    double a = lo, b = hi;
    double x1 = b - kGolden * (b - a);
    double x2 = a + kGolden * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kGolden * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kGolden * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_error(double got, double want, double floor) {
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

Eigen::VectorXd random_masses(std::mt19937_64& rng, int n, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = dist(rng);
    return w;
}

otreg::DiscreteMeasure random_measure(std::mt19937_64& rng, int n, int dim) {
    std::uniform_real_distribution<double> pos(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    otreg::DiscreteMeasure m;
    m.positions.resize(n, dim);
    m.directions.resize(n, dim);
    m.masses = random_masses(rng, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < dim; ++k) m.positions(i, k) = pos(rng);
        Eigen::VectorXd dir(dim);
        do {
            for (int k = 0; k < dim; ++k) dir(k) = gauss(rng);
        } while (dir.norm() < 1e-3);
        m.directions.row(i) = (dir / dir.norm()).transpose();
    }
    return m;
}

}  // namespace oracle
