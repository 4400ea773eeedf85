// Copyright Contributors to the Teleview Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "teleview/blend.hpp"
#include "teleview/common.hpp"
#include "teleview/config.hpp"
#include "teleview/geometry.hpp"
#include "teleview/io.hpp"
#include "teleview/pipeline.hpp"
#include "teleview/splatting.hpp"
#include "teleview/stereo.hpp"
#include "teleview/synthetic.hpp"
