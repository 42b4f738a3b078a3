#pragma once

// Umbrella header for the power-flow feasibility library.

#include "pffa/casefile.hpp"
#include "pffa/index_map.hpp"
#include "pffa/splitcircuit.hpp"
#include "pffa/adjointcircuit.hpp"
#include "pffa/sparse_lu.hpp"
#include "pffa/assembler.hpp"
#include "pffa/solver.hpp"
#include "pffa/feasibility.hpp"
#include "pffa/report_io.hpp"
#include "pffa/options_io.hpp"
