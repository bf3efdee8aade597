#pragma once

// Umbrella header.

#include "platoon/cutin.hpp"
#include "platoon/errors.hpp"
#include "platoon/geometry.hpp"
#include "platoon/kinematics.hpp"
#include "platoon/lane_change.hpp"
#include "platoon/log.hpp"
#include "platoon/manifest.hpp"
#include "platoon/mpc.hpp"
#include "platoon/nn.hpp"
#include "platoon/predictor.hpp"
#include "platoon/qp.hpp"
#include "platoon/random.hpp"
#include "platoon/riccati.hpp"
#include "platoon/scenario.hpp"
#include "platoon/series.hpp"
#include "platoon/simulation.hpp"
#include "platoon/terminal_set.hpp"
#include "platoon/trace.hpp"
#include "platoon/version.hpp"
