#pragma once

// Umbrella header.

#include "burnsim/bidlog.hpp"
#include "burnsim/chunked.hpp"
#include "burnsim/core.hpp"
#include "burnsim/estimator.hpp"
#include "burnsim/experiments.hpp"
#include "burnsim/io.hpp"
#include "burnsim/parallel_sim.hpp"
#include "burnsim/rng.hpp"
#include "burnsim/s2a.hpp"
#include "burnsim/sequential.hpp"
#include "burnsim/synthetic.hpp"
