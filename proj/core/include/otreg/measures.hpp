#pragma once

#include <Eigen/Dense>

#include "otreg/errors.hpp"

namespace otreg {

enum class ShapeKind { Curve2D, Curve3D, Surface3D };

// Vertices plus connectivity: segment pairs for curves, triangles for
// surfaces. Cell indices are rows into `vertices`.
struct ShapeComplex {
    Eigen::MatrixXd vertices;  // n x d
    Eigen::MatrixXi cells;     // m x 2 (curves) or m x 3 (surfaces)
    ShapeKind kind = ShapeKind::Curve2D;

    int dim() const { return kind == ShapeKind::Curve2D ? 2 : 3; }
    int cell_arity() const { return kind == ShapeKind::Surface3D ? 3 : 2; }

    // Throws DimensionMismatch / Error on invalid connectivity.
    void validate() const;
};

// Weighted Dirac cloud on the lifted feature space: one atom per shape cell,
// carrying its center, a unit direction (normal or tangent) and its
// length/area as mass. Treat as immutable; deformation goes through
// rebuild_measure.
struct DiscreteMeasure {
    Eigen::MatrixXd positions;   // n x d
    Eigen::MatrixXd directions;  // n x d, unit rows
    Eigen::VectorXd masses;      // n, nonnegative

    Eigen::Index size() const { return masses.size(); }
    int dim() const { return static_cast<int>(positions.cols()); }
    double total_mass() const { return masses.sum(); }

    void validate() const;
};

// One Dirac per cell: position = vertex mean, mass = length/area, direction =
// +90-degree-rotated tangent (2-D curves), unit tangent (3-D curves) or the
// right-handed unit normal (triangles).
DiscreteMeasure lift_shape(const ShapeComplex& shape);

// lift_shape with the vertex set replaced; the original shape is untouched.
DiscreteMeasure rebuild_measure(const ShapeComplex& shape,
                                const Eigen::MatrixXd& new_vertices);

// Pullback of per-Dirac gradients through the center/mass/direction maps,
// accumulated per vertex over all incident cells. Direction gradients may be
// given in ambient coordinates; the adjoint of the normalization projects
// them onto the sphere's tangent space.
Eigen::MatrixXd rebuild_measure_adjoint(const ShapeComplex& shape,
                                        const Eigen::MatrixXd& new_vertices,
                                        const Eigen::MatrixXd& grad_positions,
                                        const Eigen::VectorXd& grad_masses,
                                        const Eigen::MatrixXd& grad_directions);

}  // namespace otreg
