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

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcout/model.hpp"

namespace mcout {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct CheckpointTensor {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::vector<double> data;
};

/// Layout: "MCOUT1", u32 version, u32 tensor count, then per tensor a u16
/// name length, the name, u8 dtype, u8 rank, u64 dims and the payload, all
/// little-endian; a JSON blob fills the rest of the file. The blob carries a
/// manifest of the tensor headers that loading checks against.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<CheckpointTensor> tensors;
  nlohmann::json config = nlohmann::json::object();

  const CheckpointTensor* find(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Appends every model parameter under its stable name.
void add_parameters(Checkpoint& ckpt, const ModelParams& params, DType dtype);
/// Copies the stored values into `params`. Names that are neither model
/// parameters nor carry `extra_prefix` are rejected, as are missing
/// parameters and shape mismatches.
void restore_parameters(const Checkpoint& ckpt, ModelParams& params,
                        const std::string& extra_prefix = "adam.");

}  // namespace mcout
