#pragma once

// Umbrella header: two-stage covariate selection and design-based ATE
// estimation for cluster-randomized trials.

#include "crtlasso/csv.hpp"
#include "crtlasso/data.hpp"
#include "crtlasso/diagnostics.hpp"
#include "crtlasso/errors.hpp"
#include "crtlasso/lasso.hpp"
#include "crtlasso/report_io.hpp"
#include "crtlasso/rng.hpp"
#include "crtlasso/sim.hpp"
#include "crtlasso/standardize.hpp"
#include "crtlasso/stats.hpp"
#include "crtlasso/two_stage.hpp"
#include "crtlasso/wls.hpp"
