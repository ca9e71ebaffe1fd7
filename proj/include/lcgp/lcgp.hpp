#pragma once

#include "lcgp/curve_models.hpp"
#include "lcgp/data_io.hpp"
#include "lcgp/errors.hpp"
#include "lcgp/evaluation.hpp"
#include "lcgp/fitting.hpp"
#include "lcgp/gp_core.hpp"
#include "lcgp/math_stats.hpp"
#include "lcgp/priors.hpp"
#include "lcgp/study.hpp"
#include "lcgp/synthetic.hpp"
