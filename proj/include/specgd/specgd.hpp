#pragma once

#include "error.hpp"
#include "fit.hpp"
#include "harness.hpp"
#include "lower_bound.hpp"
#include "oracles.hpp"
#include "parallel.hpp"
#include "pde_sobolev.hpp"
#include "random.hpp"
#include "simulate.hpp"
#include "spectral_core.hpp"
#include "theory_bounds.hpp"
