// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/error.hpp"
#include "freqdis/tensor.hpp"
#include "freqdis/ops.hpp"
#include "freqdis/grad_check.hpp"
#include "freqdis/nn.hpp"
#include "freqdis/optim.hpp"
#include "freqdis/pyramid.hpp"
#include "freqdis/wcca.hpp"
#include "freqdis/acca.hpp"
#include "freqdis/ldrm.hpp"
#include "freqdis/losses.hpp"
#include "freqdis/training.hpp"
#include "freqdis/evalkit.hpp"
#include "freqdis/weights.hpp"
