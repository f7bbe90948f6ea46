#pragma once

#include "teki/linalg.hpp"
#include "teki/ensemble.hpp"
#include "teki/forward_model.hpp"
#include "teki/inverse_problem.hpp"
#include "teki/diagnostics.hpp"
#include "teki/random.hpp"
#include "teki/eki.hpp"
#include "teki/gauss_newton.hpp"
#include "teki/models/kl_prior.hpp"
#include "teki/models/lorenz96.hpp"
#include "teki/models/darcy.hpp"
#include "teki/models/problems.hpp"
#include "teki/experiment.hpp"
#include "teki/theory.hpp"
