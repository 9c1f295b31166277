#include "otreg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace otreg {

namespace {

constexpr double kPi = std::numbers::pi;

double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Rescale source and target with one shared similarity transform so both fit
// the unit box (margin on every side) and the vertexwise correspondence
// survives the normalization.
void normalize_jointly(Eigen::MatrixXd& a, Eigen::MatrixXd& b, double margin) {
    const int d = static_cast<int>(a.cols());
    Eigen::VectorXd lo(d), hi(d);
    for (int k = 0; k < d; ++k) {
        lo(k) = std::min(a.col(k).minCoeff(), b.col(k).minCoeff());
        hi(k) = std::max(a.col(k).maxCoeff(), b.col(k).maxCoeff());
    }
    const double extent = (hi - lo).maxCoeff();
    const double scale = (1.0 - 2.0 * margin) / extent;
    for (int k = 0; k < d; ++k) {
        a.col(k) = (a.col(k).array() - lo(k)) * scale + margin;
        b.col(k) = (b.col(k).array() - lo(k)) * scale + margin;
    }
}

Eigen::MatrixXi closed_loop_cells(int n) {
    Eigen::MatrixXi cells(n, 2);
    for (int i = 0; i < n; ++i) {
        cells(i, 0) = i;
        cells(i, 1) = (i + 1) % n;
    }
    return cells;
}

ShapePair make_curve_pair(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);

    const int n = 160;
    const double body_radius = 0.20;
    const double limb_height = 0.17;
    const double limb_sharpness = 50.0;
    const double limb_angles[2] = {0.5 * kPi + 0.17 * jitter(rng),
                                   1.3 * kPi + 0.17 * jitter(rng)};

    const auto radius_at = [&](double phi) {
        double r = body_radius;
        for (const double center : limb_angles) {
            r += limb_height * std::exp(limb_sharpness * (std::cos(phi - center) - 1.0));
        }
        return r;
    };

    Eigen::MatrixXd source(n, 2);
    for (int i = 0; i < n; ++i) {
        const double phi = 2.0 * kPi * i / n;
        const double r = radius_at(phi);
        source(i, 0) = r * std::cos(phi);
        source(i, 1) = r * std::sin(phi);
    }

    // Swirl about the body center: the core barely moves, the limb tips slide
    // tangentially by several limb widths.
    const double swirl = 0.85 + 0.1 * jitter(rng);
    const double swirl_inner = 0.5 * body_radius;
    const double swirl_outer = body_radius + 1.1 * limb_height;
    Eigen::MatrixXd target(n, 2);
    for (int i = 0; i < n; ++i) {
        const double x = source(i, 0), y = source(i, 1);
        const double r = std::hypot(x, y);
        const double beta =
            swirl * smoothstep01((r - swirl_inner) / (swirl_outer - swirl_inner));
        const double c = std::cos(beta), s = std::sin(beta);
        target(i, 0) = c * x - s * y;
        target(i, 1) = s * x + c * y;
    }

    normalize_jointly(source, target, 0.04);

    ShapePair pair;
    pair.source.kind = ShapeKind::Curve2D;
    pair.source.vertices = source;
    pair.source.cells = closed_loop_cells(n);
    pair.target.kind = ShapeKind::Curve2D;
    pair.target.vertices = target;
    pair.target.cells = pair.source.cells;
    return pair;
}

ShapePair make_fiber_bundles(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int bundles = 3;
    const int fibers_per_bundle = 20;
    const int points_per_fiber = 8;
    const double bundle_ring = 0.25;
    const double bundle_radius = 0.07;

    std::vector<Eigen::MatrixXd> fiber_points;
    for (int b = 0; b < bundles; ++b) {
        const double angle = 0.5 * kPi + 2.0 * kPi * b / bundles;
        const double cx = bundle_ring * std::cos(angle);
        const double cy = bundle_ring * std::sin(angle);
        for (int f = 0; f < fibers_per_bundle; ++f) {
            const double psi = 2.0 * kPi * unit(rng);
            const double rad = bundle_radius * std::sqrt(unit(rng));
            const double ox = cx + rad * std::cos(psi);
            const double oy = cy + rad * std::sin(psi);
            Eigen::MatrixXd pts(points_per_fiber, 3);
            for (int k = 0; k < points_per_fiber; ++k) {
                const double t = static_cast<double>(k) / (points_per_fiber - 1);
                // Mild per-bundle curvature so the source is not a straight rod.
                pts(k, 0) = ox + 0.05 * std::sin(kPi * t) * std::cos(angle);
                pts(k, 1) = oy + 0.05 * std::sin(kPi * t) * std::sin(angle);
                pts(k, 2) = t;
            }
            fiber_points.push_back(std::move(pts));
        }
    }

    const int total_fibers = bundles * fibers_per_bundle;
    const int n = total_fibers * points_per_fiber;
    Eigen::MatrixXd source(n, 3);
    Eigen::MatrixXi cells(total_fibers * (points_per_fiber - 1), 2);
    int vrow = 0, crow = 0;
    for (const auto& pts : fiber_points) {
        for (int k = 0; k < points_per_fiber; ++k) {
            source.row(vrow + k) = pts.row(k);
        }
        for (int k = 0; k + 1 < points_per_fiber; ++k) {
            cells(crow, 0) = vrow + k;
            cells(crow, 1) = vrow + k + 1;
            ++crow;
        }
        vrow += points_per_fiber;
    }

    // Smooth global warp: bend in x, sway in y, twist about the z axis.
    Eigen::MatrixXd target(n, 3);
    for (int i = 0; i < n; ++i) {
        const double x = source(i, 0), y = source(i, 1), z = source(i, 2);
        const double bent_x = x + 0.16 * std::sin(kPi * z);
        const double bent_y = y - 0.10 * std::sin(0.5 * kPi * z);
        const double tw = 0.6 * z;
        const double c = std::cos(tw), s = std::sin(tw);
        target(i, 0) = c * bent_x - s * bent_y;
        target(i, 1) = s * bent_x + c * bent_y;
        target(i, 2) = z;
    }

    normalize_jointly(source, target, 0.04);

    ShapePair pair;
    pair.source.kind = ShapeKind::Curve3D;
    pair.source.vertices = source;
    pair.source.cells = cells;
    pair.target.kind = ShapeKind::Curve3D;
    pair.target.vertices = target;
    pair.target.cells = cells;
    return pair;
}

ShapePair make_translated_squares() {
    Eigen::MatrixXd square(4, 2);
    square << 0.1, 0.3,
              0.5, 0.3,
              0.5, 0.7,
              0.1, 0.7;
    ShapePair pair;
    pair.source.kind = ShapeKind::Curve2D;
    pair.source.vertices = square;
    pair.source.cells = closed_loop_cells(4);
    pair.target = pair.source;
    pair.target.vertices.col(0).array() += 0.3;
    return pair;
}

}  // namespace

ShapePair generate_synthetic(SyntheticKind kind, std::uint64_t seed) {
    switch (kind) {
        case SyntheticKind::CurvePair:
            return make_curve_pair(seed);
        case SyntheticKind::FiberBundles:
            return make_fiber_bundles(seed);
        case SyntheticKind::TranslatedSquares:
            return make_translated_squares();
    }
    throw Error("unknown synthetic kind");
}

}  // namespace otreg
