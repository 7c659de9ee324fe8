#pragma once

#include "mllmcl/config.hpp"
#include "mllmcl/corpus.hpp"
#include "mllmcl/encoder.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/gradcheck.hpp"
#include "mllmcl/losses.hpp"
#include "mllmcl/matrix.hpp"
#include "mllmcl/metrics.hpp"
#include "mllmcl/numeric.hpp"
#include "mllmcl/rng.hpp"
#include "mllmcl/schedule.hpp"
#include "mllmcl/trainer.hpp"
