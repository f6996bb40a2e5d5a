#pragma once

#include "autotab/balance.hpp"
#include "autotab/commands.hpp"
#include "autotab/config.hpp"
#include "autotab/csv.hpp"
#include "autotab/engine.hpp"
#include "autotab/ensemble.hpp"
#include "autotab/error.hpp"
#include "autotab/metrics.hpp"
#include "autotab/models.hpp"
#include "autotab/pipeline.hpp"
#include "autotab/preprocess.hpp"
#include "autotab/space.hpp"
#include "autotab/synthdata.hpp"
#include "autotab/tabular.hpp"
