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

#pragma once

#include <cstddef>

namespace mcout {

struct LRSchedule {
  double warmup_lr = 1e-6;
  double init_lr = 3e-4;
  double min_lr = 3e-5;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  void validate() const;
};

/// Linear from warmup_lr to init_lr over the warmup steps, then a half
/// cosine from init_lr down to min_lr at total_steps.
double lr_at(std::size_t step, const LRSchedule& s);

}  // namespace mcout
