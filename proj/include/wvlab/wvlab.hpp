// Umbrella header.

#pragma once

#include "wvlab/alignfit.hpp"
#include "wvlab/beamlab.hpp"
#include "wvlab/core.hpp"
#include "wvlab/io.hpp"
#include "wvlab/mzi.hpp"
#include "wvlab/pointer.hpp"
#include "wvlab/qstate.hpp"
#include "wvlab/verify.hpp"
#include "wvlab/weakvalue.hpp"
