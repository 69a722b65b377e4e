#pragma once

#include "fcdpipe/compare.hpp"
#include "fcdpipe/fcdsim.hpp"
#include "fcdpipe/freeflow.hpp"
#include "fcdpipe/grid.hpp"
#include "fcdpipe/io.hpp"
#include "fcdpipe/parallel.hpp"
#include "fcdpipe/pipeline.hpp"
#include "fcdpipe/random.hpp"
#include "fcdpipe/roadgraph.hpp"
#include "fcdpipe/segspeed.hpp"
#include "fcdpipe/sjoin.hpp"
#include "fcdpipe/spotbin.hpp"
#include "fcdpipe/taggr.hpp"
