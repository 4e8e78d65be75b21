// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "marlin/clip.hpp"
#include "marlin/graph.hpp"
#include "marlin/losses.hpp"
#include "marlin/masking.hpp"
#include "marlin/model.hpp"
#include "marlin/optim.hpp"
#include "marlin/report.hpp"
#include "marlin/synth.hpp"
#include "marlin/tokenizer.hpp"
#include "marlin/training.hpp"
