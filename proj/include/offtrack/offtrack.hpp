#pragma once

#include "offtrack/geometry.hpp"
#include "offtrack/dynamics.hpp"
#include "offtrack/filtering.hpp"
#include "offtrack/association.hpp"
#include "offtrack/types.hpp"
#include "offtrack/tracker.hpp"
#include "offtrack/dreaming.hpp"
#include "offtrack/eval.hpp"
#include "offtrack/sim.hpp"
#include "offtrack/io.hpp"
