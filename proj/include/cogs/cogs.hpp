// Umbrella header: pulls in the whole library.
#pragma once

#include "cogs/bm25.hpp"
#include "cogs/cognition.hpp"
#include "cogs/config.hpp"
#include "cogs/eval.hpp"
#include "cogs/log_model.hpp"
#include "cogs/longterm_memory.hpp"
#include "cogs/metrics.hpp"
#include "cogs/pipeline.hpp"
#include "cogs/prompts.hpp"
#include "cogs/ranking.hpp"
#include "cogs/sensory_memory.hpp"
#include "cogs/synthgen.hpp"
#include "cogs/text.hpp"
#include "cogs/types.hpp"
#include "cogs/working_memory.hpp"
