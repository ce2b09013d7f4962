#pragma once

#include "polent/types.hpp"
#include "polent/polarization.hpp"
#include "polent/spdc.hpp"
#include "polent/random.hpp"
#include "polent/photon_stats.hpp"
#include "polent/density_matrix.hpp"
#include "polent/tomography.hpp"
#include "polent/metrics.hpp"
#include "polent/io.hpp"
