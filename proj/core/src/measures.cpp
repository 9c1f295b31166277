#include "otreg/measures.hpp"

#include <cmath>
#include <string>

namespace otreg {

namespace {

constexpr double kDegenerateTol = 1e-12;  // on cell length/area, unit-box data

void check_shape(const ShapeComplex& shape, const Eigen::MatrixXd& vertices) {
    if (vertices.cols() != shape.dim()) {
        throw DimensionMismatch("shape kind expects dimension " +
                                std::to_string(shape.dim()) + ", vertices have " +
                                std::to_string(vertices.cols()));
    }
    if (shape.cells.cols() != shape.cell_arity()) {
        throw DimensionMismatch("cell arity " + std::to_string(shape.cells.cols()) +
                                " does not match shape kind");
    }
    const Eigen::Index n = vertices.rows();
    for (Eigen::Index c = 0; c < shape.cells.rows(); ++c) {
        for (int k = 0; k < shape.cells.cols(); ++k) {
            const int idx = shape.cells(c, k);
            if (idx < 0 || idx >= n) {
                throw Error("cell " + std::to_string(c) + " references vertex " +
                            std::to_string(idx) + " outside [0, " + std::to_string(n) + ")");
            }
            for (int k2 = 0; k2 < k; ++k2) {
                if (shape.cells(c, k2) == idx) {
                    throw Error("cell " + std::to_string(c) + " repeats vertex " +
                                std::to_string(idx));
                }
            }
        }
    }
}

DiscreteMeasure lift_impl(const ShapeComplex& shape, const Eigen::MatrixXd& vertices) {
    check_shape(shape, vertices);

    const Eigen::Index m = shape.cells.rows();
    const int d = shape.dim();
    DiscreteMeasure out;
    out.positions.resize(m, d);
    out.directions.resize(m, d);
    out.masses.resize(m);

    for (Eigen::Index c = 0; c < m; ++c) {
        if (shape.kind == ShapeKind::Surface3D) {
            const Eigen::Vector3d v0 = vertices.row(shape.cells(c, 0));
            const Eigen::Vector3d v1 = vertices.row(shape.cells(c, 1));
            const Eigen::Vector3d v2 = vertices.row(shape.cells(c, 2));
            const Eigen::Vector3d cross = (v1 - v0).cross(v2 - v0);
            const double norm = cross.norm();
            const double area = 0.5 * norm;
            if (area < kDegenerateTol) {
                throw DegenerateCell(c, "triangle " + std::to_string(c) +
                                            " has area below tolerance");
            }
            out.positions.row(c) = ((v0 + v1 + v2) / 3.0).transpose();
            out.directions.row(c) = (cross / norm).transpose();
            out.masses(c) = area;
        } else {
            const Eigen::VectorXd v0 = vertices.row(shape.cells(c, 0));
            const Eigen::VectorXd v1 = vertices.row(shape.cells(c, 1));
            const Eigen::VectorXd edge = v1 - v0;
            const double len = edge.norm();
            if (len < kDegenerateTol) {
                throw DegenerateCell(c, "segment " + std::to_string(c) +
                                            " has length below tolerance");
            }
            const Eigen::VectorXd tangent = edge / len;
            out.positions.row(c) = (0.5 * (v0 + v1)).transpose();
            out.masses(c) = len;
            if (shape.kind == ShapeKind::Curve2D) {
                // Tangent rotated +90 degrees: orientation follows vertex order.
                out.directions(c, 0) = -tangent(1);
                out.directions(c, 1) = tangent(0);
            } else {
                out.directions.row(c) = tangent.transpose();
            }
        }
    }
    return out;
}

}  // namespace

void ShapeComplex::validate() const { check_shape(*this, vertices); }

void DiscreteMeasure::validate() const {
    if (directions.rows() != positions.rows() || masses.size() != positions.rows() ||
        directions.cols() != positions.cols()) {
        throw DimensionMismatch("measure field sizes disagree");
    }
    for (Eigen::Index i = 0; i < masses.size(); ++i) {
        if (!(masses(i) >= 0.0)) {
            throw Error("mass " + std::to_string(i) + " is negative or NaN");
        }
        if (masses(i) > 0.0 && std::abs(directions.row(i).norm() - 1.0) > 1e-9) {
            throw Error("direction " + std::to_string(i) + " is not unit length");
        }
    }
}

DiscreteMeasure lift_shape(const ShapeComplex& shape) {
    return lift_impl(shape, shape.vertices);
}

DiscreteMeasure rebuild_measure(const ShapeComplex& shape,
                                const Eigen::MatrixXd& new_vertices) {
    if (new_vertices.rows() != shape.vertices.rows()) {
        throw DimensionMismatch("replacement vertex count differs from the shape");
    }
    return lift_impl(shape, new_vertices);
}

Eigen::MatrixXd rebuild_measure_adjoint(const ShapeComplex& shape,
                                        const Eigen::MatrixXd& new_vertices,
                                        const Eigen::MatrixXd& grad_positions,
                                        const Eigen::VectorXd& grad_masses,
                                        const Eigen::MatrixXd& grad_directions) {
    check_shape(shape, new_vertices);
    const Eigen::Index m = shape.cells.rows();
    const int d = shape.dim();
    if (grad_positions.rows() != m || grad_masses.size() != m ||
        grad_directions.rows() != m || grad_positions.cols() != d ||
        grad_directions.cols() != d) {
        throw DimensionMismatch("gradient sizes do not match the cell count");
    }

    Eigen::MatrixXd grad_vertices = Eigen::MatrixXd::Zero(new_vertices.rows(), d);

    for (Eigen::Index c = 0; c < m; ++c) {
        if (shape.kind == ShapeKind::Surface3D) {
            const int i0 = shape.cells(c, 0), i1 = shape.cells(c, 1), i2 = shape.cells(c, 2);
            const Eigen::Vector3d v0 = new_vertices.row(i0);
            const Eigen::Vector3d v1 = new_vertices.row(i1);
            const Eigen::Vector3d v2 = new_vertices.row(i2);
            const Eigen::Vector3d e1 = v1 - v0;
            const Eigen::Vector3d e2 = v2 - v0;
            const Eigen::Vector3d cross = e1.cross(e2);
            const double norm = cross.norm();
            if (norm < 2.0 * kDegenerateTol) {
                throw DegenerateCell(c, "triangle " + std::to_string(c) +
                                            " too degenerate for the adjoint");
            }
            const Eigen::Vector3d unit = cross / norm;

            // Center: each vertex sees a third of the position gradient.
            const Eigen::Vector3d gp = grad_positions.row(c).transpose() / 3.0;
            grad_vertices.row(i0) += gp.transpose();
            grad_vertices.row(i1) += gp.transpose();
            grad_vertices.row(i2) += gp.transpose();

            // Mass = |cross|/2 and direction = cross/|cross| both pull back
            // through the cross product; assemble the cotangent on `cross`.
            const Eigen::Vector3d gu = grad_directions.row(c).transpose();
            Eigen::Vector3d gcross = 0.5 * grad_masses(c) * unit;
            gcross += (gu - unit * unit.dot(gu)) / norm;

            const Eigen::Vector3d ge1 = e2.cross(gcross);
            const Eigen::Vector3d ge2 = gcross.cross(e1);
            grad_vertices.row(i1) += ge1.transpose();
            grad_vertices.row(i2) += ge2.transpose();
            grad_vertices.row(i0) -= (ge1 + ge2).transpose();
        } else {
            const int i0 = shape.cells(c, 0), i1 = shape.cells(c, 1);
            const Eigen::VectorXd v0 = new_vertices.row(i0);
            const Eigen::VectorXd v1 = new_vertices.row(i1);
            const Eigen::VectorXd edge = v1 - v0;
            const double len = edge.norm();
            if (len < kDegenerateTol) {
                throw DegenerateCell(c, "segment " + std::to_string(c) +
                                            " too short for the adjoint");
            }
            const Eigen::VectorXd tangent = edge / len;

            const Eigen::VectorXd gp = 0.5 * grad_positions.row(c).transpose();
            grad_vertices.row(i0) += gp.transpose();
            grad_vertices.row(i1) += gp.transpose();

            Eigen::VectorXd gedge = grad_masses(c) * tangent;

            // Direction gradient, mapped back through the normalization (and,
            // in 2-D, through the transpose of the +90-degree rotation).
            Eigen::VectorXd gt(d);
            if (shape.kind == ShapeKind::Curve2D) {
                const Eigen::VectorXd gu = grad_directions.row(c).transpose();
                gt(0) = gu(1);
                gt(1) = -gu(0);
            } else {
                gt = grad_directions.row(c).transpose();
            }
            gedge += (gt - tangent * tangent.dot(gt)) / len;

            grad_vertices.row(i1) += gedge.transpose();
            grad_vertices.row(i0) -= gedge.transpose();
        }
    }
    return grad_vertices;
}

}  // namespace otreg
