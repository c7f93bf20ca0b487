// SPDX-License-Identifier: Apache-2.0

#include "mvl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mvl/errors.hpp"

namespace mvl {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues parse_key_values(std::string_view text, std::string_view origin) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kConfig, fmt::format("{}:{}: expected 'key = value'", origin, line_no));
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::kConfig, fmt::format("{}:{}: empty key", origin, line_no));
    out[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kConfig, fmt::format("cannot read config '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str(), path.string());
}

std::pair<std::string, std::string> parse_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty()) {
    throw Error(ErrorKind::kConfig, fmt::format("override '{}' is not key=value", assignment));
  }
  return {std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1)))};
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::kConfig, fmt::format("{}: cannot parse '{}'", key, value));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorKind::kConfig, fmt::format("{}: expected true or false, got '{}'", key, value));
}

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = value.find(',', pos);
    const auto item = trim(std::string_view(value).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

struct Binding {
  std::string key;
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

template <typename Field>
Binding size_binding(std::string key, Field field) {
  return {key, [key, field](Settings& s, const std::string& v) { field(s) = parse_number<std::size_t>(key, v); },
          [field](const Settings& s) { return fmt::format("{}", field(const_cast<Settings&>(s))); }};
}

template <typename Field>
Binding double_binding(std::string key, Field field) {
  return {key, [key, field](Settings& s, const std::string& v) { field(s) = parse_number<double>(key, v); },
          [field](const Settings& s) { return fmt::format("{}", field(const_cast<Settings&>(s))); }};
}

template <typename Field>
Binding bool_binding(std::string key, Field field) {
  return {key, [key, field](Settings& s, const std::string& v) { field(s) = parse_bool(key, v); },
          [field](const Settings& s) { return std::string(field(const_cast<Settings&>(s)) ? "true" : "false"); }};
}

template <typename Field>
Binding list_binding(std::string key, Field field) {
  return {key, [field](Settings& s, const std::string& v) { field(s) = parse_list(v); },
          [field](const Settings& s) { return fmt::format("{}", fmt::join(field(const_cast<Settings&>(s)), ",")); }};
}

void add_stage_bindings(std::vector<Binding>& b, const std::string& prefix, std::function<StageConfig&(Settings&)> st) {
  b.push_back(size_binding(prefix + ".batch_size", [st](Settings& s) -> auto& { return st(s).batch_size; }));
  b.push_back(double_binding(prefix + ".peak_lr", [st](Settings& s) -> auto& { return st(s).peak_lr; }));
  b.push_back(double_binding(prefix + ".min_lr", [st](Settings& s) -> auto& { return st(s).min_lr; }));
  b.push_back(size_binding(prefix + ".epochs", [st](Settings& s) -> auto& { return st(s).epochs; }));
  b.push_back(double_binding(prefix + ".warmup_ratio", [st](Settings& s) -> auto& { return st(s).warmup_ratio; }));
  b.push_back(size_binding(prefix + ".max_steps", [st](Settings& s) -> auto& { return st(s).max_steps; }));
  b.push_back(size_binding(prefix + ".physical_batch", [st](Settings& s) -> auto& { return st(s).physical_batch; }));
  b.push_back(double_binding(prefix + ".weight_decay", [st](Settings& s) -> auto& { return st(s).adam.weight_decay; }));
  b.push_back(double_binding(prefix + ".clip_norm", [st](Settings& s) -> auto& { return st(s).adam.clip_norm; }));
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b;
    b.push_back({"seed", [](Settings& s, const std::string& v) { s.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const Settings& s) { return fmt::format("{}", s.seed); }});

    // The variant name resets every encoder field; it is applied before the others.
    b.push_back({"model.encoder.variant",
                 [](Settings& s, const std::string& v) { s.model.encoder = encoder_variant(v); },
                 [](const Settings& s) { return s.model.encoder.variant_name; }});
    b.push_back(size_binding("model.encoder.image_size", [](Settings& s) -> auto& { return s.model.encoder.image_size; }));
    b.push_back(size_binding("model.encoder.patch_size", [](Settings& s) -> auto& { return s.model.encoder.patch_size; }));
    b.push_back(size_binding("model.encoder.d_vision", [](Settings& s) -> auto& { return s.model.encoder.d_vision; }));
    b.push_back(size_binding("model.encoder.n_layers", [](Settings& s) -> auto& { return s.model.encoder.n_layers; }));
    b.push_back(size_binding("model.encoder.n_heads", [](Settings& s) -> auto& { return s.model.encoder.n_heads; }));
    b.push_back(size_binding("model.encoder.mlp_ratio", [](Settings& s) -> auto& { return s.model.encoder.mlp_ratio; }));
    b.push_back(bool_binding("model.encoder.position_embedding",
                             [](Settings& s) -> auto& { return s.model.encoder.position_embedding; }));
    b.push_back({"model.projector",
                 [](Settings& s, const std::string& v) { s.model.projector = parse_projector_variant(v); },
                 [](const Settings& s) { return std::string(to_string(s.model.projector)); }});
    b.push_back(size_binding("model.d_model", [](Settings& s) -> auto& { return s.model.lm.d_model; }));
    b.push_back(size_binding("model.n_layers", [](Settings& s) -> auto& { return s.model.lm.n_layers; }));
    b.push_back(size_binding("model.n_heads", [](Settings& s) -> auto& { return s.model.lm.n_heads; }));
    b.push_back(size_binding("model.mlp_ratio", [](Settings& s) -> auto& { return s.model.lm.mlp_ratio; }));
    b.push_back(size_binding("model.context_length", [](Settings& s) -> auto& { return s.model.lm.context_length; }));
    b.push_back(bool_binding("model.tie_embeddings", [](Settings& s) -> auto& { return s.model.lm.tie_embeddings; }));

    b.push_back(size_binding("data.items", [](Settings& s) -> auto& { return s.data.items; }));
    b.push_back(size_binding("data.stage1_total", [](Settings& s) -> auto& { return s.data.stage1_total; }));
    b.push_back(size_binding("data.stage2_total", [](Settings& s) -> auto& { return s.data.stage2_total; }));
    b.push_back(double_binding("data.english_fraction", [](Settings& s) -> auto& { return s.data.english_fraction; }));
    b.push_back(list_binding("data.languages", [](Settings& s) -> auto& { return s.data.languages; }));
    b.push_back(size_binding("data.eval_items", [](Settings& s) -> auto& { return s.data.eval_items; }));
    b.push_back(list_binding("data.eval_languages", [](Settings& s) -> auto& { return s.data.eval_languages; }));
    b.push_back(bool_binding("data.write_images", [](Settings& s) -> auto& { return s.data.write_images; }));

    add_stage_bindings(b, "train.stage1", [](Settings& s) -> StageConfig& { return s.stage1; });
    add_stage_bindings(b, "train.stage2", [](Settings& s) -> StageConfig& { return s.stage2; });

    b.push_back(size_binding("eval.max_new_tokens", [](Settings& s) -> auto& { return s.max_new_tokens; }));
    b.push_back({"eval.system_prompt", [](Settings& s, const std::string& v) { s.system_prompt = v; },
                 [](const Settings& s) { return s.system_prompt; }});

    b.push_back(double_binding("gradcheck.kernel_threshold",
                               [](Settings& s) -> auto& { return s.gradcheck.kernel_threshold; }));
    b.push_back(double_binding("gradcheck.end_to_end_threshold",
                               [](Settings& s) -> auto& { return s.gradcheck.end_to_end_threshold; }));
    b.push_back(double_binding("gradcheck.step", [](Settings& s) -> auto& { return s.gradcheck.step; }));
    b.push_back(size_binding("gradcheck.max_coordinates",
                             [](Settings& s) -> auto& { return s.gradcheck.max_coordinates; }));

    b.push_back({"ablation.seeds",
                 [](Settings& s, const std::string& v) {
                   s.ablation.seeds.clear();
                   for (const auto& item : parse_list(v))
                     s.ablation.seeds.push_back(parse_number<std::uint64_t>("ablation.seeds", item));
                 },
                 [](const Settings& s) { return fmt::format("{}", fmt::join(s.ablation.seeds, ",")); }});
    b.push_back(list_binding("ablation.eval_languages", [](Settings& s) -> auto& { return s.ablation.eval_languages; }));
    b.push_back(size_binding("ablation.train_items", [](Settings& s) -> auto& { return s.ablation.train_items; }));
    b.push_back(size_binding("ablation.stage1_total", [](Settings& s) -> auto& { return s.ablation.stage1_total; }));
    b.push_back(size_binding("ablation.stage2_total", [](Settings& s) -> auto& { return s.ablation.stage2_total; }));
    b.push_back(size_binding("ablation.eval_items", [](Settings& s) -> auto& { return s.ablation.eval_items; }));
    b.push_back(size_binding("ablation.max_new_tokens", [](Settings& s) -> auto& { return s.ablation.max_new_tokens; }));
    add_stage_bindings(b, "ablation.stage1", [](Settings& s) -> StageConfig& { return s.ablation.stage1; });
    add_stage_bindings(b, "ablation.stage2", [](Settings& s) -> StageConfig& { return s.ablation.stage2; });
    return b;
  }();
  return table;
}

const Binding* find_binding(const std::string& key) {
  for (const auto& b : bindings())
    if (b.key == key) return &b;
  return nullptr;
}

}  // namespace

void Settings::set_seed(std::uint64_t value) {
  seed = value;
  model.seed = value;
  stage1.seed = value;
  stage2.seed = value;
  gradcheck.seed = value;
}

const StageConfig& Settings::stage(int which) const {
  if (which == 1) return stage1;
  if (which == 2) return stage2;
  throw Error(ErrorKind::kConfig, fmt::format("stage must be 1 or 2, got {}", which));
}

Settings resolve_settings(const KeyValues& values) {
  Settings s;
  for (const auto& [key, value] : values) {
    if (!find_binding(key)) throw Error(ErrorKind::kConfig, fmt::format("unknown config key '{}'", key));
  }
  if (const auto it = values.find("model.encoder.variant"); it != values.end()) {
    find_binding(it->first)->set(s, it->second);
  }
  for (const auto& [key, value] : values) {
    if (key != "model.encoder.variant") find_binding(key)->set(s, value);
  }
  s.set_seed(s.seed);
  s.ablation.model = s.model;
  s.model.validate();
  s.stage1.validate();
  s.stage2.validate();
  return s;
}

KeyValues settings_to_key_values(const Settings& settings) {
  KeyValues out;
  for (const auto& b : bindings()) out[b.key] = b.get(settings);
  return out;
}

std::string echo_settings(const Settings& settings) {
  std::string out;
  for (const auto& [key, value] : settings_to_key_values(settings)) out += fmt::format("{} = {}\n", key, value);
  return out;
}

}  // namespace mvl
