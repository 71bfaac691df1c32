#pragma once

#include "nqn/errors.hpp"
#include "nqn/linalg.hpp"
#include "nqn/rng.hpp"
#include "nqn/problem.hpp"
#include "nqn/noise.hpp"
#include "nqn/directions.hpp"
#include "nqn/ccqn.hpp"
#include "nqn/harness.hpp"
#include "nqn/metrics.hpp"
#include "nqn/trace_io.hpp"
