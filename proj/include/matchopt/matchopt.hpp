#pragma once

// Entropy-regularized optimal matching: solvers, cost estimation,
// regret accounting, and experiment harness.

#include "matchopt/assignment.hpp"
#include "matchopt/bvn.hpp"
#include "matchopt/common.hpp"
#include "matchopt/config.hpp"
#include "matchopt/cost_model.hpp"
#include "matchopt/csv.hpp"
#include "matchopt/experiments.hpp"
#include "matchopt/gbt.hpp"
#include "matchopt/matrix.hpp"
#include "matchopt/numeric.hpp"
#include "matchopt/ot.hpp"
#include "matchopt/regret.hpp"
#include "matchopt/rng.hpp"
