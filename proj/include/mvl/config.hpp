// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. Files hold `key = value` lines; `#` starts a comment.
// Keys are dotted (model.d_model, train.stage1.batch_size, ...) and
// command-line `--set key=value` overrides are applied on top. Unknown keys
// are rejected. See README for the full key list.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mvl/ablation.hpp"
#include "mvl/gradcheck.hpp"
#include "mvl/model.hpp"
#include "mvl/trainer.hpp"

namespace mvl {

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines. Malformed lines are config errors naming the line.
KeyValues parse_key_values(std::string_view text, std::string_view origin = "config");
KeyValues read_key_values(const std::filesystem::path& path);
/// "key=value" -> (key, value); config error without '='.
std::pair<std::string, std::string> parse_override(std::string_view assignment);

struct DataSettings {
  // Synthetic items per language source.
  std::size_t items = 2000;
  std::size_t stage1_total = 1200;
  std::size_t stage2_total = 1200;
  double english_fraction = 0.5;
  std::vector<std::string> languages = {"l1", "l2", "l3", "l4", "l5", "l6", "l7", "l8", "l9", "l10"};
  std::size_t eval_items = 40;
  std::vector<std::string> eval_languages = {"en", "l1", "l2", "l3", "l4", "l5", "l6", "l7", "l8", "l9", "l10"};
  // Write PPM files for each image instead of procedural specs.
  bool write_images = false;
};

struct Settings {
  std::uint64_t seed = 0;
  ModelConfig model;
  DataSettings data;
  StageConfig stage1 = StageConfig::defaults(1);
  StageConfig stage2 = StageConfig::defaults(2);
  std::size_t max_new_tokens = 96;
  std::string system_prompt;
  GradcheckConfig gradcheck;
  AblationConfig ablation = AblationConfig::defaults();

  /// Seeds the model, both stages and the ablation from `seed`.
  void set_seed(std::uint64_t value);
  /// Stage config for 1 or 2.
  const StageConfig& stage(int which) const;
};

/// Defaults with `values` applied in key order. Unknown keys and unparsable
/// values are config errors.
Settings resolve_settings(const KeyValues& values);

/// Every key with its resolved value, one `key = value` per line, sorted.
/// Parsing the echo reproduces the same settings.
std::string echo_settings(const Settings& settings);
KeyValues settings_to_key_values(const Settings& settings);

}  // namespace mvl
