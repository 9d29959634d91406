#pragma once

#include "ssltsc/augment.hpp"
#include "ssltsc/baselines.hpp"
#include "ssltsc/checkpoint.hpp"
#include "ssltsc/data_io.hpp"
#include "ssltsc/errors.hpp"
#include "ssltsc/evaluation.hpp"
#include "ssltsc/experiment.hpp"
#include "ssltsc/metrics.hpp"
#include "ssltsc/model.hpp"
#include "ssltsc/optim.hpp"
#include "ssltsc/report.hpp"
#include "ssltsc/synthetic.hpp"
#include "ssltsc/train_config.hpp"
#include "ssltsc/trainers.hpp"
#include "ssltsc/training.hpp"
#include "ssltsc/tuning.hpp"
