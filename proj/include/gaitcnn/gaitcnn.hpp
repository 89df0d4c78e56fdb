#pragma once

#include "gaitcnn/checkpoint.hpp"
#include "gaitcnn/commands.hpp"
#include "gaitcnn/crossval.hpp"
#include "gaitcnn/gaitio.hpp"
#include "gaitcnn/layers.hpp"
#include "gaitcnn/nets.hpp"
#include "gaitcnn/network.hpp"
#include "gaitcnn/optim.hpp"
#include "gaitcnn/report.hpp"
#include "gaitcnn/run_config.hpp"
#include "gaitcnn/stats.hpp"
#include "gaitcnn/strideprep.hpp"
#include "gaitcnn/synthgait.hpp"
#include "gaitcnn/tensor.hpp"
