#pragma once

#include "nhnoise/core.hpp"
#include "nhnoise/model.hpp"
#include "nhnoise/integrator.hpp"
#include "nhnoise/meanfield.hpp"
#include "nhnoise/noise.hpp"
#include "nhnoise/topology.hpp"
#include "nhnoise/sweep.hpp"
#include "nhnoise/kspace.hpp"
#include "nhnoise/stochastic.hpp"
#include "nhnoise/config.hpp"
#include "nhnoise/io.hpp"
#include "nhnoise/scenario.hpp"
