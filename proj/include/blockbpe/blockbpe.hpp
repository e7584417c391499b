#pragma once

// Umbrella header for the blockbpe library.

#include "blockbpe/batch.hpp"
#include "blockbpe/bench.hpp"
#include "blockbpe/block_engine.hpp"
#include "blockbpe/eval.hpp"
#include "blockbpe/merge_table.hpp"
#include "blockbpe/pretokenize.hpp"
#include "blockbpe/ref_engines.hpp"
#include "blockbpe/thread_pool.hpp"
#include "blockbpe/types.hpp"
