#pragma once

#include "trendforest/csv.hpp"
#include "trendforest/dataset.hpp"
#include "trendforest/forest.hpp"
#include "trendforest/forest_io.hpp"
#include "trendforest/harness.hpp"
#include "trendforest/importance.hpp"
#include "trendforest/parallel.hpp"
#include "trendforest/report_io.hpp"
#include "trendforest/rng.hpp"
#include "trendforest/shapley.hpp"
#include "trendforest/stats.hpp"
#include "trendforest/synth.hpp"
#include "trendforest/trends.hpp"
