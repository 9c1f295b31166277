#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otreg {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inputs whose spatial dimensions or sizes do not agree.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// A cell whose length/area falls below the degeneracy tolerance (1e-12).
class DegenerateCell : public Error {
public:
    DegenerateCell(std::ptrdiff_t cell_index, const std::string& what)
        : Error(what), cell(cell_index) {}
    std::ptrdiff_t cell;
};

// The geodesic angular gradient is requested too close to |<u,v>| = 1,
// where the arccos derivative diverges.
class AngularSingularity : public Error {
public:
    using Error::Error;
};

// A marginal handed to the transport solver has zero total mass.
class ZeroMass : public Error {
public:
    enum class Side { Source, Target };
    ZeroMass(Side s, const std::string& what) : Error(what), side(s) {}
    Side side;
};

// A flow trajectory left the finite range (momenta too large for the step).
class NonFiniteState : public Error {
public:
    using Error::Error;
};

// An adjoint or advection pass was asked to run without a stored trajectory.
class MissingTrajectory : public Error {
public:
    using Error::Error;
};

// Run-configuration violations; `key` names the offending entry.
class ConfigError : public Error {
public:
    ConfigError(const std::string& k, const std::string& what)
        : Error("config key '" + k + "': " + what), key(k) {}
    std::string key;
};

}  // namespace otreg
