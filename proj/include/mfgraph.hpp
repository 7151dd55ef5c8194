#pragma once

#include "mfgraph/activation.hpp"
#include "mfgraph/error.hpp"
#include "mfgraph/gradient_flow.hpp"
#include "mfgraph/lagrangian.hpp"
#include "mfgraph/markov_graph.hpp"
#include "mfgraph/master_eq.hpp"
#include "mfgraph/mfg_core.hpp"
#include "mfgraph/mfg_problem.hpp"
#include "mfgraph/quadrature.hpp"
#include "mfgraph/twopoint.hpp"
