#pragma once

// Umbrella header for the whole toolkit.

#include "pvgae/adam.hpp"
#include "pvgae/error.hpp"
#include "pvgae/evaluation.hpp"
#include "pvgae/experiment.hpp"
#include "pvgae/graph.hpp"
#include "pvgae/graph_io.hpp"
#include "pvgae/model.hpp"
#include "pvgae/objectives.hpp"
#include "pvgae/random.hpp"
#include "pvgae/sweep.hpp"
#include "pvgae/tape.hpp"
#include "pvgae/tensor.hpp"
#include "pvgae/training.hpp"
