#pragma once

#include "elto/common.hpp"
#include "elto/csv.hpp"
#include "elto/filter.hpp"
#include "elto/kernels.hpp"
#include "elto/model_io.hpp"
#include "elto/modes.hpp"
#include "elto/operators.hpp"
#include "elto/realization.hpp"
#include "elto/systems.hpp"
#include "elto/time_series.hpp"
#include "elto/bench/config.hpp"
#include "elto/bench/experiment.hpp"
#include "elto/bench/metrics.hpp"
#include "elto/bench/search.hpp"
