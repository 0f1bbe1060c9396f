/*
 * Copyright 2026 The gprop Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header.
#pragma once

#include "gprop/common.hpp"
#include "gprop/config.hpp"
#include "gprop/data.hpp"
#include "gprop/energy.hpp"
#include "gprop/equivalence.hpp"
#include "gprop/experiments.hpp"
#include "gprop/graph.hpp"
#include "gprop/implicit.hpp"
#include "gprop/model.hpp"
#include "gprop/unfold.hpp"
#include "gprop/verify.hpp"
