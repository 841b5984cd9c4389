#pragma once

#include "macroxfer/error.hpp"
#include "macroxfer/random.hpp"
#include "macroxfer/dataset.hpp"
#include "macroxfer/network.hpp"
#include "macroxfer/propagation.hpp"
#include "macroxfer/optim.hpp"
#include "macroxfer/tuner.hpp"
#include "macroxfer/transfer.hpp"
#include "macroxfer/metrics.hpp"
#include "macroxfer/disagg.hpp"
#include "macroxfer/synthetic.hpp"
#include "macroxfer/experiment.hpp"
