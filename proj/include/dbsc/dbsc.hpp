#pragma once

// Umbrella header.

#include "dbsc/config.hpp"
#include "dbsc/counterfactual.hpp"
#include "dbsc/diagnostics.hpp"
#include "dbsc/distance.hpp"
#include "dbsc/error.hpp"
#include "dbsc/io.hpp"
#include "dbsc/mcmc.hpp"
#include "dbsc/panel.hpp"
#include "dbsc/pipeline.hpp"
#include "dbsc/priors.hpp"
#include "dbsc/replication.hpp"
#include "dbsc/simgen.hpp"
