#pragma once

#include "orca/config.hpp"
#include "orca/dataset.hpp"
#include "orca/eval.hpp"
#include "orca/experiment.hpp"
#include "orca/io.hpp"
#include "orca/matrix.hpp"
#include "orca/model.hpp"
#include "orca/objective.hpp"
#include "orca/rng.hpp"
#include "orca/trainer.hpp"
