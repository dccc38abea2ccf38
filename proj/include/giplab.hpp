#pragma once

#include "giplab/augment.hpp"
#include "giplab/autodiff.hpp"
#include "giplab/config.hpp"
#include "giplab/data.hpp"
#include "giplab/encoder.hpp"
#include "giplab/error.hpp"
#include "giplab/eval.hpp"
#include "giplab/graph.hpp"
#include "giplab/matrix.hpp"
#include "giplab/objectives.hpp"
#include "giplab/optim.hpp"
#include "giplab/rng.hpp"
#include "giplab/training.hpp"
