/*
 * Copyright 2026 The kvte Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header for the kvte library.
#pragma once

#include "kvte/baselines.hpp"
#include "kvte/benchmark.hpp"
#include "kvte/cme.hpp"
#include "kvte/csv.hpp"
#include "kvte/dataset.hpp"
#include "kvte/error.hpp"
#include "kvte/estimators.hpp"
#include "kvte/kernel.hpp"
#include "kvte/krr.hpp"
#include "kvte/linalg.hpp"
#include "kvte/simdata.hpp"
