#pragma once

#include "hqa/agents.hpp"
#include "hqa/corpus_io.hpp"
#include "hqa/errors.hpp"
#include "hqa/evaluate.hpp"
#include "hqa/metrics.hpp"
#include "hqa/optimizer.hpp"
#include "hqa/params.hpp"
#include "hqa/reward.hpp"
#include "hqa/simulator.hpp"
#include "hqa/trainer.hpp"
