#pragma once

#include "wptmech/benchmarks.hpp"
#include "wptmech/harness.hpp"
#include "wptmech/model.hpp"
#include "wptmech/mpat.hpp"
#include "wptmech/pat.hpp"
#include "wptmech/report.hpp"
#include "wptmech/rng.hpp"
#include "wptmech/serialize.hpp"
#include "wptmech/swm.hpp"
#include "wptmech/textio.hpp"
