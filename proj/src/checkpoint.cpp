// SPDX-License-Identifier: Apache-2.0

#include "mvl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

namespace fs = std::filesystem;
using nlohmann::json;

json config_to_json(const ModelConfig& config) {
  const auto& e = config.encoder;
  const auto& l = config.lm;
  return {
      {"encoder",
       {{"variant", e.variant_name},
        {"image_size", e.image_size},
        {"patch_size", e.patch_size},
        {"d_vision", e.d_vision},
        {"n_layers", e.n_layers},
        {"n_heads", e.n_heads},
        {"mlp_ratio", e.mlp_ratio},
        {"position_embedding", e.position_embedding}}},
      {"projector", std::string(to_string(config.projector))},
      {"lm",
       {{"d_model", l.d_model},
        {"n_layers", l.n_layers},
        {"n_heads", l.n_heads},
        {"mlp_ratio", l.mlp_ratio},
        {"vocab_size", l.vocab_size},
        {"context_length", l.context_length},
        {"tie_embeddings", l.tie_embeddings}}},
      {"seed", config.seed},
  };
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    const auto& e = j.at("encoder");
    c.encoder.variant_name = e.at("variant").get<std::string>();
    c.encoder.image_size = e.at("image_size").get<std::size_t>();
    c.encoder.patch_size = e.at("patch_size").get<std::size_t>();
    c.encoder.d_vision = e.at("d_vision").get<std::size_t>();
    c.encoder.n_layers = e.at("n_layers").get<std::size_t>();
    c.encoder.n_heads = e.at("n_heads").get<std::size_t>();
    c.encoder.mlp_ratio = e.at("mlp_ratio").get<std::size_t>();
    c.encoder.position_embedding = e.at("position_embedding").get<bool>();
    c.projector = parse_projector_variant(j.at("projector").get<std::string>());
    const auto& l = j.at("lm");
    c.lm.d_model = l.at("d_model").get<std::size_t>();
    c.lm.n_layers = l.at("n_layers").get<std::size_t>();
    c.lm.n_heads = l.at("n_heads").get<std::size_t>();
    c.lm.mlp_ratio = l.at("mlp_ratio").get<std::size_t>();
    c.lm.vocab_size = l.at("vocab_size").get<std::size_t>();
    c.lm.context_length = l.at("context_length").get<std::size_t>();
    c.lm.tie_embeddings = l.at("tie_embeddings").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kConfig, fmt::format("model config: {}", ex.what()));
  }
  return c;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<float>(bits);
}

[[noreturn]] void format_error(const fs::path& path, const std::string& what) {
  throw Error(ErrorKind::kCheckpointFormat, fmt::format("{}: {}", path.string(), what));
}

}  // namespace

void save_checkpoint(const fs::path& path, const MultimodalModel<float>& model, const CheckpointMeta& meta) {
  std::string blobs;
  json table = json::array();
  for (const auto& p : model.named_parameters()) {
    const auto values = p.tensor.data();
    table.push_back({{"name", p.name},
                     {"shape", p.tensor.shape()},
                     {"offset", blobs.size()},
                     {"bytes", values.size() * sizeof(float)}});
    for (float v : values) put_f32(blobs, v);
  }
  json header = {{"config", config_to_json(model.config())},
                 {"stage", meta.stage},
                 {"step", meta.step},
                 {"seed", meta.seed},
                 {"metrics", meta.metrics},
                 {"tensors", std::move(table)}};
  const std::string header_text = header.dump();

  std::string bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(bytes, header_text.size());
  bytes += header_text;
  bytes += blobs;

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write checkpoint '{}'", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, fmt::format("short write to checkpoint '{}'", path.string()));
}

CheckpointContents read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read checkpoint '{}'", path.string()));
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    format_error(path, "bad magic");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) format_error(path, "header length exceeds file size");
  const std::size_t blob_start = 16 + header_len;

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(blob_start));
  } catch (const json::parse_error& e) {
    format_error(path, fmt::format("corrupt header ({})", e.what()));
  }

  CheckpointContents contents;
  try {
    contents.config = config_from_json(header.at("config"));
    contents.meta.stage = header.at("stage").get<int>();
    contents.meta.step = header.at("step").get<std::uint64_t>();
    contents.meta.seed = header.at("seed").get<std::uint64_t>();
    contents.meta.metrics = header.at("metrics");
    const std::size_t blob_bytes = bytes.size() - blob_start;
    std::size_t expected_end = 0;
    for (const auto& entry : header.at("tensors")) {
      CheckpointTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto size = entry.at("bytes").get<std::uint64_t>();
      if (size != shape_numel(t.shape) * sizeof(float)) {
        format_error(path, fmt::format("tensor '{}' byte count {} does not match shape {}", t.name, size,
                                       shape_string(t.shape)));
      }
      if (offset > blob_bytes || size > blob_bytes - offset) {
        format_error(path, fmt::format("tensor '{}' is truncated", t.name));
      }
      t.values.resize(size / sizeof(float));
      const char* src = bytes.data() + blob_start + offset;
      for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = get_f32(src + 4 * i);
      expected_end = std::max<std::size_t>(expected_end, offset + size);
      contents.tensors.push_back(std::move(t));
    }
    if (expected_end != blob_bytes) format_error(path, "trailing bytes after the last tensor");
  } catch (const json::exception& e) {
    format_error(path, fmt::format("malformed header ({})", e.what()));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) format_error(path, e.what());
    throw;
  }
  return contents;
}

namespace {

void fill(MultimodalModel<float>& model, const CheckpointContents& contents, const fs::path& path) {
  auto params = model.named_parameters();
  if (contents.tensors.size() != params.size()) {
    format_error(path, fmt::format("holds {} tensors, model has {}", contents.tensors.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = contents.tensors[i];
    auto& p = params[i];
    if (t.name != p.name) format_error(path, fmt::format("expected tensor '{}', found '{}'", p.name, t.name));
    if (t.shape != p.tensor.shape()) {
      format_error(path, fmt::format("tensor '{}' has shape {}, model expects {}", t.name, shape_string(t.shape),
                                     shape_string(p.tensor.shape())));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(t.values.begin(), t.values.end(), dst.begin());
  }
}

}  // namespace

MultimodalModel<float> load_checkpoint(const fs::path& path, CheckpointMeta* meta) {
  const auto contents = read_checkpoint(path);
  auto model = MultimodalModel<float>::init(contents.config);
  fill(model, contents, path);
  if (meta) *meta = contents.meta;
  return model;
}

void load_into(MultimodalModel<float>& model, const fs::path& path, CheckpointMeta* meta) {
  const auto contents = read_checkpoint(path);
  // The init seed is provenance, not architecture.
  ModelConfig expected = contents.config;
  expected.seed = model.config().seed;
  if (!(expected == model.config())) {
    throw Error(ErrorKind::kConfig, fmt::format("checkpoint '{}' was written for config {}, model has {}",
                                                path.string(), config_to_json(contents.config).dump(),
                                                config_to_json(model.config()).dump()));
  }
  fill(model, contents, path);
  if (meta) *meta = contents.meta;
}

}  // namespace mvl
