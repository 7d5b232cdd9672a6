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

#include "mcout/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "mcout/errors.hpp"

namespace mcout {

namespace {

constexpr char kMagic[6] = {'M', 'C', 'O', 'U', 'T', '1'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string rest() const { return bytes_.substr(pos_); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_)
      throw FormatError("checkpoint: header points past the end of the data");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json manifest_entry(const CheckpointTensor& t) {
  return {{"name", t.name}, {"dtype", static_cast<int>(t.dtype)}, {"shape", t.shape}};
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xFFFF) throw ContractError("checkpoint: name too long");
    if (t.shape.size() > 0xFF) throw ContractError("checkpoint: rank too large");
    if (numel(t.shape) != t.data.size())
      throw ContractError("checkpoint: '" + t.name + "' data does not match its shape");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.data) {
      if (t.dtype == DType::F32)
        put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    manifest.push_back(manifest_entry(t));
  }
  nlohmann::json blob = ckpt.config;
  blob["tensors"] = manifest;
  out += blob.dump();
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("checkpoint: bad magic");
  // The blob always closes with '}', so a missing brace means the file was cut.
  if (bytes.back() != '}') throw IoError("checkpoint: file is truncated");
  Reader in(bytes);
  in.take(sizeof(kMagic));
  const auto version = in.get<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = in.take(in.get<std::uint16_t>());
    const auto dtype = in.get<std::uint8_t>();
    if (dtype > 1) throw FormatError("checkpoint: unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const auto rank = in.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto d = in.get<std::uint64_t>();
      if (d == 0 || d > bytes.size()) throw FormatError("checkpoint: bad dimension");
      t.shape.push_back(static_cast<std::size_t>(d));
      n *= static_cast<std::size_t>(d);
      if (n > bytes.size()) throw FormatError("checkpoint: header points past the end of the data");
    }
    t.data.resize(n);
    for (auto& v : t.data)
      v = t.dtype == DType::F32
              ? static_cast<double>(std::bit_cast<float>(in.get<std::uint32_t>()))
              : std::bit_cast<double>(in.get<std::uint64_t>());
    if (ckpt.find(t.name)) throw FormatError("checkpoint: duplicate tensor '" + t.name + "'");
    ckpt.tensors.push_back(std::move(t));
  }
  try {
    ckpt.config = nlohmann::json::parse(in.rest());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config blob: ") + e.what());
  }
  if (!ckpt.config.is_object() || !ckpt.config.contains("tensors"))
    throw FormatError("checkpoint: config blob lacks the tensor manifest");
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) manifest.push_back(manifest_entry(t));
  if (ckpt.config["tensors"] != manifest)
    throw FormatError("checkpoint: tensor headers disagree with the manifest");
  ckpt.config.erase("tensors");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad()) throw IoError("failed reading checkpoint '" + path + "'");
  if (bytes.empty()) throw IoError("checkpoint '" + path + "' is empty");
  return parse_checkpoint(bytes);
}

void add_parameters(Checkpoint& ckpt, const ModelParams& params, DType dtype) {
  for (const auto& [name, tensor] : params.named()) {
    const auto v = tensor.values();
    ckpt.tensors.push_back({name, dtype, tensor.shape(), std::vector<double>(v.begin(), v.end())});
  }
}

void restore_parameters(const Checkpoint& ckpt, ModelParams& params,
                        const std::string& extra_prefix) {
  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : params.named()) by_name.emplace(name, tensor);
  std::size_t restored = 0;
  for (const auto& t : ckpt.tensors) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) {
      if (!extra_prefix.empty() && t.name.rfind(extra_prefix, 0) == 0) continue;
      throw FormatError("checkpoint: unknown tensor '" + t.name + "'");
    }
    if (it->second.shape() != t.shape)
      throw FormatError("checkpoint: '" + t.name + "' has shape " + shape_string(t.shape) +
                        ", model expects " + shape_string(it->second.shape()));
    auto dst = it->second.mutable_values();
    std::copy(t.data.begin(), t.data.end(), dst.begin());
    ++restored;
  }
  if (restored != by_name.size())
    throw FormatError("checkpoint: " + std::to_string(by_name.size() - restored) +
                      " model parameters are missing");
}

}  // namespace mcout
