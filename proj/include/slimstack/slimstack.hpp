#pragma once

// Convenience umbrella for the whole library.

#include "slimstack/container.hpp"
#include "slimstack/expectation.hpp"
#include "slimstack/hessian.hpp"
#include "slimstack/matrix.hpp"
#include "slimstack/model.hpp"
#include "slimstack/pipeline.hpp"
#include "slimstack/pruning.hpp"
#include "slimstack/quantize.hpp"
#include "slimstack/report_io.hpp"
#include "slimstack/rng.hpp"
#include "slimstack/scheduler.hpp"
#include "slimstack/selfcheck.hpp"
#include "slimstack/synthetic.hpp"
