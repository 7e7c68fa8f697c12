#pragma once

#include "lrgw/alloc_stats.hpp"
#include "lrgw/costs.hpp"
#include "lrgw/datasets_io.hpp"
#include "lrgw/entropic_gw.hpp"
#include "lrgw/errors.hpp"
#include "lrgw/gw_lr.hpp"
#include "lrgw/lot_init.hpp"
#include "lrgw/lr_dykstra.hpp"
#include "lrgw/oracle_metrics.hpp"
#include "lrgw/rng.hpp"
#include "lrgw/sinkhorn.hpp"
#include "lrgw/types.hpp"
#include "lrgw/version.hpp"
