#pragma once

#include "fundrank/aggregate.hpp"
#include "fundrank/anfis.hpp"
#include "fundrank/config.hpp"
#include "fundrank/error.hpp"
#include "fundrank/evaluate.hpp"
#include "fundrank/feature_select.hpp"
#include "fundrank/fnn.hpp"
#include "fundrank/ingest.hpp"
#include "fundrank/local_learning.hpp"
#include "fundrank/matrix.hpp"
#include "fundrank/model.hpp"
#include "fundrank/parallel.hpp"
#include "fundrank/pipeline.hpp"
#include "fundrank/prediction_table.hpp"
#include "fundrank/preprocess.hpp"
#include "fundrank/quarter.hpp"
#include "fundrank/rf.hpp"
#include "fundrank/rng.hpp"
#include "fundrank/synthetic.hpp"
