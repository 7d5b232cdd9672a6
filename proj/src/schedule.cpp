/*
 *   Copyright 2026 The mcout Authors
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

#include "mcout/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mcout/errors.hpp"

namespace mcout {

void LRSchedule::validate() const {
  if (!(min_lr <= init_lr)) throw ContractError("schedule: min_lr exceeds init_lr");
  if (warmup_steps >= total_steps)
    throw ContractError("schedule: warmup_steps must be below total_steps");
}

double lr_at(std::size_t step, const LRSchedule& s) {
  s.validate();
  if (step > s.total_steps)
    throw ContractError("schedule: step " + std::to_string(step) + " beyond total " +
                        std::to_string(s.total_steps));
  if (step < s.warmup_steps)
    return s.warmup_lr + (s.init_lr - s.warmup_lr) * static_cast<double>(step) /
                             static_cast<double>(s.warmup_steps);
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return s.min_lr + 0.5 * (s.init_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace mcout
