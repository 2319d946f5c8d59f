#pragma once

#include "swlab/cells.hpp"
#include "swlab/directions.hpp"
#include "swlab/energy.hpp"
#include "swlab/errors.hpp"
#include "swlab/exact_ot.hpp"
#include "swlab/experiments.hpp"
#include "swlab/harness.hpp"
#include "swlab/io.hpp"
#include "swlab/rng.hpp"
#include "swlab/slice.hpp"
#include "swlab/solvers.hpp"
#include "swlab/support.hpp"
