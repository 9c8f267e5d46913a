#pragma once

#include "stork/analysis.hpp"
#include "stork/coefficients.hpp"
#include "stork/core.hpp"
#include "stork/derivatives.hpp"
#include "stork/fields.hpp"
#include "stork/parallel.hpp"
#include "stork/scheduler.hpp"
#include "stork/solve.hpp"
#include "stork/stepper.hpp"
#include "stork/time_grid.hpp"
