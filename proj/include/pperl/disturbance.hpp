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

#ifndef PPERL_DISTURBANCE_HPP_
#define PPERL_DISTURBANCE_HPP_

#include <stdexcept>
#include <string>

#include "pperl/rng.hpp"

namespace pperl {

/**
 * Actuation-error models mapping the commanded speed u to the speed the
 * actuator actually applies. Two deterministic error shapes plus additive
 * Gaussian noise, drawn fresh per vehicle per step:
 *
 *     none       u_a = u
 *     affine     u_a = 1.1 u + 0.1 + x
 *     quadratic  u_a = 0.01 u^2 + u + 0.1 + x,    x ~ N(0, sigma^2)
 *
 * The 0.3 default noise level is interpreted as a standard deviation, and
 * u_a lives in the same commanded-speed channel (m/s) as u.
 */

enum class DisturbanceKind { none, affine, quadratic };

inline const char* to_string(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::none: return "none";
    case DisturbanceKind::affine: return "affine";
    case DisturbanceKind::quadratic: return "quadratic";
  }
  return "?";
}

inline DisturbanceKind disturbance_kind_from_string(const std::string& s) {
  if (s == "none") return DisturbanceKind::none;
  if (s == "affine") return DisturbanceKind::affine;
  if (s == "quadratic") return DisturbanceKind::quadratic;
  throw std::invalid_argument("unknown disturbance kind: " + s);
}

struct DisturbanceModel {
  DisturbanceKind kind = DisturbanceKind::none;
  double noise_sigma = 0.3;

  void validate() const {
    if (noise_sigma < 0)
      throw std::invalid_argument("DisturbanceModel: negative noise_sigma");
  }

  /// Map one commanded speed to the applied speed, consuming one noise draw
  /// for the stochastic kinds.
  double apply(double u, Rng& rng) const {
    validate();
    switch (kind) {
      case DisturbanceKind::none:
        return u;
      case DisturbanceKind::affine:
        return 1.1 * u + 0.1 + draw(rng);
      case DisturbanceKind::quadratic:
        return 0.01 * u * u + u + 0.1 + draw(rng);
    }
    return u;
  }

 private:
  double draw(Rng& rng) const {
    return noise_sigma > 0 ? rng.normal(0.0, noise_sigma) : 0.0;
  }
};

}  // namespace pperl

#endif  // PPERL_DISTURBANCE_HPP_
