/*
 * Copyright 2026 The platoon-perl Authors
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

/// Umbrella header: the whole platoon-control workbench.

#ifndef PPERL_PLATOON_HPP_
#define PPERL_PLATOON_HPP_

#include "pperl/config.hpp"     // IWYU pragma: export
#include "pperl/disturbance.hpp" // IWYU pragma: export
#include "pperl/dynamics.hpp"   // IWYU pragma: export
#include "pperl/io.hpp"         // IWYU pragma: export
#include "pperl/metrics.hpp"    // IWYU pragma: export
#include "pperl/mpc.hpp"        // IWYU pragma: export
#include "pperl/qp.hpp"         // IWYU pragma: export
#include "pperl/residual_nn.hpp" // IWYU pragma: export
#include "pperl/residual_q.hpp" // IWYU pragma: export
#include "pperl/rng.hpp"        // IWYU pragma: export
#include "pperl/scenario.hpp"   // IWYU pragma: export

#endif  // PPERL_PLATOON_HPP_
