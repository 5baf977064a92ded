#pragma once

#include "igmc/checkpoint.hpp"
#include "igmc/common.hpp"
#include "igmc/eval.hpp"
#include "igmc/graph.hpp"
#include "igmc/model.hpp"
#include "igmc/optim.hpp"
#include "igmc/subgraph.hpp"
#include "igmc/subgraph_io.hpp"
#include "igmc/tensor.hpp"
#include "igmc/train.hpp"
