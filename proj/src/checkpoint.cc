//
// Copyright 2026 The dpasr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpasr/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dpasr/status.h"

namespace dpasr {
namespace {

constexpr char kMagic[8] = {'D', 'P', 'A', 'S', 'R', 'C', 'K', '1'};

void AppendU64LE(uint64_t v, std::string* out) {
  for (int i = 0; i < 8; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint64_t ReadU64LE(const char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

}  // namespace

void AppendFloatsLE(std::span<const float> values, std::string* out) {
  const size_t start = out->size();
  out->resize(start + values.size() * 4);
  char* dst = out->data() + start;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, values.data(), values.size() * 4);
  } else {
    for (size_t i = 0; i < values.size(); ++i) {
      const uint32_t bits = std::bit_cast<uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) dst[4 * i + b] = static_cast<char>(bits >> (8 * b));
    }
  }
}

void ReadFloatsLE(const char* bytes, size_t count, float* out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, bytes, count * 4);
  } else {
    for (size_t i = 0; i < count; ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
      }
      out[i] = std::bit_cast<float>(bits);
    }
  }
}

void WriteCheckpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& metadata) {
  nlohmann::json header;
  header["metadata"] = metadata;
  header["tensors"] = nlohmann::json::array();
  std::string payload;
  for (const NamedTensor& t : tensors) {
    const size_t offset = payload.size();
    AppendFloatsLE(t.tensor.data(), &payload);
    header["tensors"].push_back({{"name", t.name},
                                 {"shape", t.tensor.shape()},
                                 {"trainable", t.trainable},
                                 {"kind", t.kind},
                                 {"dtype", "f32"},
                                 {"offset", offset},
                                 {"length", payload.size() - offset}});
  }
  const std::string head = header.dump();
  std::string bytes(kMagic, sizeof(kMagic));
  AppendU64LE(head.size(), &bytes);
  bytes += head;
  bytes += payload;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

CheckpointContents ReadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw IoError("checkpoint: '" + path + "' is not a checkpoint file");
  }
  const uint64_t head_len = ReadU64LE(bytes.data() + 8);
  if (head_len > bytes.size() - 16) {
    throw IoError("checkpoint: '" + path + "' has a truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: '" + path + "' header: " + e.what());
  }
  const size_t payload_start = 16 + head_len;
  const size_t payload_size = bytes.size() - payload_start;
  CheckpointContents out;
  out.metadata = header.value("metadata", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.trainable = entry.at("trainable").get<bool>();
    t.kind = entry.at("kind").get<std::string>();
    if (entry.at("dtype").get<std::string>() != "f32") {
      throw IoError("checkpoint: tensor '" + t.name + "' has unsupported dtype");
    }
    const Shape shape = entry.at("shape").get<Shape>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    const uint64_t length = entry.at("length").get<uint64_t>();
    const uint64_t expected = static_cast<uint64_t>(NumElements(shape)) * 4;
    if (length != expected || offset > payload_size ||
        length > payload_size - offset) {
      throw IoError("checkpoint: tensor '" + t.name +
                    "' payload does not match its shape " + ShapeString(shape));
    }
    t.tensor = TensorF(shape);
    ReadFloatsLE(bytes.data() + payload_start + offset, NumElements(shape),
                 t.tensor.raw());
    out.tensors.push_back(std::move(t));
  }
  return out;
}

}  // namespace dpasr
