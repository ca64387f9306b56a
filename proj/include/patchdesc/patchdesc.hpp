#pragma once

#include "patchdesc/checkpoint.hpp"
#include "patchdesc/data.hpp"
#include "patchdesc/error.hpp"
#include "patchdesc/eval.hpp"
#include "patchdesc/image_io.hpp"
#include "patchdesc/layers.hpp"
#include "patchdesc/loss.hpp"
#include "patchdesc/model.hpp"
#include "patchdesc/protocol.hpp"
#include "patchdesc/run_config.hpp"
#include "patchdesc/tensor.hpp"
#include "patchdesc/train.hpp"
