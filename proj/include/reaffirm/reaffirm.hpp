#pragma once

#include "reaffirm/error.hpp"
#include "reaffirm/expr.hpp"
#include "reaffirm/model.hpp"
#include "reaffirm/model_io.hpp"
#include "reaffirm/hatl.hpp"
#include "reaffirm/rng.hpp"
#include "reaffirm/signal.hpp"
#include "reaffirm/sim.hpp"
#include "reaffirm/stl.hpp"
#include "reaffirm/cmaes.hpp"
#include "reaffirm/parallel.hpp"
#include "reaffirm/synth.hpp"
#include "reaffirm/case_studies.hpp"
