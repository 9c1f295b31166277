#pragma once

#include <cstdint>

#include "otreg/measures.hpp"

namespace otreg {

// Desk-scale experiment datasets. All generators are deterministic functions
// of the seed and emit shapes normalized (jointly) to the unit box, with the
// target produced by an explicit smooth warp of the source so vertex i of the
// source corresponds to vertex i of the target.
enum class SyntheticKind { CurvePair, FiberBundles, TranslatedSquares };

struct ShapePair {
    ShapeComplex source;
    ShapeComplex target;
};

// CurvePair: a closed 2-D body with protruding limbs; the target swirls the
// limbs tangentially far enough that narrow local fidelities lose track of
// them. FiberBundles: 3 bundles x 20 polyline fibers in 3-D; the target bends
// and twists the bundles. TranslatedSquares: identical 4-segment squares
// offset by 0.3 box units.
ShapePair generate_synthetic(SyntheticKind kind, std::uint64_t seed);

}  // namespace otreg
