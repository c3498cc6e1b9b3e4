#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace matchopt {

inline constexpr std::string_view version = "0.1.0";

// Identifier of the counter-based generator used everywhere; recorded in
// run manifests so outputs can be tied to a PRNG implementation.
inline constexpr std::string_view prng_id = "splitmix64-counter";

// Thrown when a caller violates a documented precondition.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation produces non-finite values or otherwise
// leaves the representable range.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A structural failure that should be unreachable for valid inputs
// (e.g. no perfect matching on the support of a doubly stochastic
// matrix); signals an invariant violation upstream.
struct NumericalDegeneracy : NumericalError {
  using NumericalError::NumericalError;
};

namespace tolerances {
// Marginal feasibility of couplings, in probability-mass units.
inline constexpr double marginal = 1e-8;
// Mean-zero normalization of the g potential.
inline constexpr double normalization = 1e-10;
// Relative duality gap at a converged solve.
inline constexpr double gap = 1e-6;
// Entrywise reconstruction error of a Birkhoff decomposition.
inline constexpr double bvn = 1e-8;
// Entries of a coupling below this are treated as structural zeros.
inline constexpr double support = 1e-12;
}  // namespace tolerances

}  // namespace matchopt
