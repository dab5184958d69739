#pragma once

// Quantile and average treatment effect estimation and bootstrap inference
// for experiments randomized within covariate strata, plus the simulation
// machinery to study rejection rates of the associated Wald tests.

#include "carq/assign.hpp"
#include "carq/bootstrap.hpp"
#include "carq/csv.hpp"
#include "carq/dgp.hpp"
#include "carq/errors.hpp"
#include "carq/estimate.hpp"
#include "carq/montecarlo.hpp"
#include "carq/normal.hpp"
#include "carq/parallel.hpp"
#include "carq/quantile.hpp"
#include "carq/rng.hpp"
#include "carq/sample.hpp"
#include "carq/variance.hpp"
