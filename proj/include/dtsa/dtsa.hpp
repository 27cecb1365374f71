#pragma once

// Distributed two-time-scale stochastic approximation: simulation library
// for consensus-coupled linear solvers over two communication graphs, with
// the finite-time bound machinery needed to check convergence claims.

#include "dtsa/algorithm.hpp"
#include "dtsa/analysis.hpp"
#include "dtsa/experiment.hpp"
#include "dtsa/matrix.hpp"
#include "dtsa/network.hpp"
#include "dtsa/noise.hpp"
#include "dtsa/problem.hpp"
#include "dtsa/rng.hpp"
#include "dtsa/serialization.hpp"
#include "dtsa/spectral.hpp"
