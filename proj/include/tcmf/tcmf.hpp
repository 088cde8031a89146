#pragma once

// Umbrella header.

#include "tcmf/commands.hpp"
#include "tcmf/config.hpp"
#include "tcmf/control.hpp"
#include "tcmf/grid.hpp"
#include "tcmf/intensity.hpp"
#include "tcmf/io.hpp"
#include "tcmf/levy.hpp"
#include "tcmf/measures.hpp"
#include "tcmf/mfbsde.hpp"
#include "tcmf/mfsde.hpp"
#include "tcmf/noise.hpp"
#include "tcmf/parallel.hpp"
#include "tcmf/regression.hpp"
#include "tcmf/rng.hpp"
#include "tcmf/vasicek.hpp"
#include "tcmf/version.hpp"
