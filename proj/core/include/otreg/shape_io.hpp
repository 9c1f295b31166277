#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "otreg/measures.hpp"
#include "otreg/registration.hpp"

namespace otreg {

// Formats a double with 17 significant digits, enough to round-trip exactly.
std::string format_double(double x);

// OBJ subset: `v x y z` and triangle `f i j k` lines only ('#' comments and
// blank lines allowed).
ShapeComplex read_obj(const std::string& path);
void write_obj(const std::string& path, const ShapeComplex& shape);

// Line-oriented polyline format: one `curve` header per chain (with an
// optional `closed` token), followed by `x y [z]` rows. Cells must form
// disjoint, consistently oriented chains.
ShapeComplex read_curves(const std::string& path);
void write_curves(const std::string& path, const ShapeComplex& shape);

// Dispatch on the shape kind (.obj for surfaces, curve format otherwise).
ShapeComplex read_shape(const std::string& path, ShapeKind kind);
void write_shape(const std::string& path, const ShapeComplex& shape);

// Measure dump: one row per Dirac, position then direction then mass.
void write_measure(const std::string& path, const DiscreteMeasure& measure);
DiscreteMeasure read_measure(const std::string& path, int dim);

// Transport plan exports: dense whitespace-separated rows, and sparse
// (i, j, gamma_ij) triplets for entries above `threshold`.
void write_plan_dense(const std::string& path, const Eigen::MatrixXd& plan);
void write_plan_triplets(const std::string& path, const Eigen::MatrixXd& plan,
                         double threshold);
Eigen::MatrixXd read_plan_dense(const std::string& path);

// Line-per-iteration optimization trace.
void write_history(const std::string& path, const std::vector<IterationRecord>& history);

// Flat `key = value` text, shared by summaries and generated configs.
void write_key_values(const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& entries);

}  // namespace otreg
