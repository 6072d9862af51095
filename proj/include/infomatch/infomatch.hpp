#pragma once

#include "infomatch/augment.hpp"
#include "infomatch/bounds.hpp"
#include "infomatch/bounds_lab.hpp"
#include "infomatch/checkpoint.hpp"
#include "infomatch/common.hpp"
#include "infomatch/config.hpp"
#include "infomatch/dataset.hpp"
#include "infomatch/image.hpp"
#include "infomatch/matrix.hpp"
#include "infomatch/metrics.hpp"
#include "infomatch/model.hpp"
#include "infomatch/objective.hpp"
#include "infomatch/rng.hpp"
#include "infomatch/threshold.hpp"
#include "infomatch/trainer.hpp"
