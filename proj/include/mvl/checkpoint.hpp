// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout (all integers little-endian):
//
//   bytes 0..7    magic "MVLCKPT\0"
//   bytes 8..15   u64 header length H
//   next H bytes  UTF-8 JSON header:
//                   {"config": {...}, "stage": int, "step": int, "seed": int,
//                    "metrics": {...}, "tensors": [{"name","shape","offset","bytes"}, ...]}
//   remainder     float32 blobs; each tensor's offset is relative to the end of the header
//
// The header is written with sorted keys, so equal models and metadata give
// equal files.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvl/model.hpp"

namespace mvl {

inline constexpr char kCheckpointMagic[8] = {'M', 'V', 'L', 'C', 'K', 'P', 'T', '\0'};

struct CheckpointMeta {
  int stage = 0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  nlohmann::json metrics = nlohmann::json::object();

  bool operator==(const CheckpointMeta&) const = default;
};

nlohmann::json config_to_json(const ModelConfig& config);
/// Throws a config error for missing or ill-typed fields.
ModelConfig config_from_json(const nlohmann::json& j);

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct CheckpointContents {
  ModelConfig config;
  CheckpointMeta meta;
  std::vector<CheckpointTensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const MultimodalModel<float>& model,
                     const CheckpointMeta& meta);

/// Parses and validates the file. Bad magic, malformed header or truncated
/// blobs are checkpoint-format errors.
CheckpointContents read_checkpoint(const std::filesystem::path& path);

/// Builds a model from the header's config and fills in every parameter.
MultimodalModel<float> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

/// Overwrites `model`'s parameters. A header config different from
/// model.config() is a config error; a missing or mis-shaped tensor is a
/// checkpoint-format error.
void load_into(MultimodalModel<float>& model, const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace mvl
