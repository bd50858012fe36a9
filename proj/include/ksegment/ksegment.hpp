#pragma once

#include "ksegment/dataset.hpp"
#include "ksegment/error.hpp"
#include "ksegment/evaluation.hpp"
#include "ksegment/fairness.hpp"
#include "ksegment/gbm.hpp"
#include "ksegment/model.hpp"
#include "ksegment/quantile.hpp"
#include "ksegment/rng.hpp"
#include "ksegment/segmentation.hpp"
