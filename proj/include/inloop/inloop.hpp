#pragma once

// Umbrella header for the in-loop cavity optomechanics toolkit.

#include "inloop/checks.hpp"
#include "inloop/config.hpp"
#include "inloop/csv.hpp"
#include "inloop/errors.hpp"
#include "inloop/filter_design.hpp"
#include "inloop/manifest.hpp"
#include "inloop/occupancy.hpp"
#include "inloop/omit.hpp"
#include "inloop/params.hpp"
#include "inloop/presets.hpp"
#include "inloop/psd.hpp"
#include "inloop/response.hpp"
#include "inloop/simulate.hpp"
#include "inloop/spectra.hpp"
#include "inloop/steady_state.hpp"
#include "inloop/sweeps.hpp"
#include "inloop/units.hpp"
