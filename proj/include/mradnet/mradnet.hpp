// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mradnet/autograd.hpp"
#include "mradnet/checkpoint.hpp"
#include "mradnet/data.hpp"
#include "mradnet/errors.hpp"
#include "mradnet/eval.hpp"
#include "mradnet/model.hpp"
#include "mradnet/npy.hpp"
#include "mradnet/ops.hpp"
#include "mradnet/params.hpp"
#include "mradnet/tensor.hpp"
#include "mradnet/train.hpp"
