// SPDX-License-Identifier: Apache-2.0

#include "mvl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "mvl/errors.hpp"
#include "mvl/rng.hpp"
#include "mvl/utf8.hpp"

namespace mvl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool contains(std::span<const std::string_view> set, std::string_view value) {
  return std::find(set.begin(), set.end(), value) != set.end();
}

[[noreturn]] void schema_error(std::string_view where, const std::string& what) {
  throw Error(ErrorKind::kSchema, fmt::format("{}: {}", where, what));
}

ProceduralImage procedural_from_json(const json& j, std::string_view where) {
  ProceduralImage spec;
  try {
    spec.shape = j.at("shape").get<std::string>();
    spec.color = j.at("color").get<std::string>();
    spec.row = j.at("row").get<int>();
    spec.col = j.at("col").get<int>();
    spec.dx = j.value("dx", 0);
    spec.dy = j.value("dy", 0);
    spec.radius = j.value("radius", 6);
  } catch (const json::exception& e) {
    schema_error(where, fmt::format("bad procedural image spec ({})", e.what()));
  }
  if (!contains(kShapes, spec.shape)) schema_error(where, fmt::format("unknown shape '{}'", spec.shape));
  if (!contains(kColors, spec.color)) schema_error(where, fmt::format("unknown color '{}'", spec.color));
  if (spec.row < 0 || spec.row > 2 || spec.col < 0 || spec.col > 2) {
    schema_error(where, fmt::format("grid cell ({}, {}) outside 3x3", spec.row, spec.col));
  }
  if (spec.radius <= 0 || std::abs(spec.dx) > 8 || std::abs(spec.dy) > 8) {
    schema_error(where, "procedural jitter/radius out of range");
  }
  return spec;
}

}  // namespace

// ---------------------------------------------------------------------------
// Records

json sample_to_json(const ConversationSample& sample) {
  json j;
  j["id"] = sample.id;
  j["language"] = sample.language;
  if (sample.image) {
    if (sample.image->path) {
      j["image"] = *sample.image->path;
    } else if (sample.image->procedural) {
      const auto& s = *sample.image->procedural;
      j["image"] = {{"shape", s.shape}, {"color", s.color}, {"row", s.row}, {"col", s.col},
                    {"dx", s.dx},       {"dy", s.dy},       {"radius", s.radius}};
    }
  }
  json turns = json::array();
  for (const auto& t : sample.turns) {
    turns.push_back({{"role", t.role == Role::kUser ? "user" : "assistant"}, {"text", t.text}});
  }
  j["turns"] = std::move(turns);
  return j;
}

ConversationSample sample_from_json(const json& record, std::string_view where) {
  if (!record.is_object()) schema_error(where, "record is not a JSON object");
  ConversationSample sample;
  const auto id = record.find("id");
  if (id == record.end() || !id->is_string() || id->get<std::string>().empty()) {
    schema_error(where, "missing string field 'id'");
  }
  sample.id = id->get<std::string>();
  const auto language = record.find("language");
  if (language == record.end() || !language->is_string() || language->get<std::string>().empty()) {
    schema_error(where, "missing string field 'language'");
  }
  sample.language = language->get<std::string>();

  if (const auto image = record.find("image"); image != record.end() && !image->is_null()) {
    if (image->is_array()) {
      throw Error(ErrorKind::kUnsupportedModality,
                  fmt::format("{}: multiple images per sample are not supported", where));
    }
    if (image->is_string()) {
      if (image->get<std::string>().empty()) schema_error(where, "empty image path");
      sample.image = ImageRef::from_path(image->get<std::string>());
    } else if (image->is_object()) {
      sample.image = ImageRef::from_spec(procedural_from_json(*image, where));
    } else {
      schema_error(where, "field 'image' must be a path string or a procedural spec object");
    }
  }

  const auto turns = record.find("turns");
  if (turns == record.end() || !turns->is_array() || turns->empty()) {
    schema_error(where, "field 'turns' must be a non-empty array");
  }
  for (std::size_t i = 0; i < turns->size(); ++i) {
    const auto& t = (*turns)[i];
    if (!t.is_object() || !t.contains("role") || !t.contains("text") || !t["role"].is_string() ||
        !t["text"].is_string()) {
      schema_error(where, fmt::format("turn {} needs string 'role' and 'text'", i));
    }
    const auto role = t["role"].get<std::string>();
    Turn turn;
    if (role == "user") {
      turn.role = Role::kUser;
    } else if (role == "assistant") {
      turn.role = Role::kAssistant;
    } else {
      schema_error(where, fmt::format("turn {} has unknown role '{}'", i, role));
    }
    const auto expected = i % 2 == 0 ? Role::kUser : Role::kAssistant;
    if (turn.role != expected) {
      schema_error(where, fmt::format("turn {} is '{}' but turns must alternate starting with user", i, role));
    }
    turn.text = t["text"].get<std::string>();
    sample.turns.push_back(std::move(turn));
  }
  return sample;
}

std::string serialize_sample(const ConversationSample& sample) { return sample_to_json(sample).dump(); }

std::vector<ConversationSample> load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read manifest '{}'", path.string()));
  const fs::path base = path.parent_path();
  std::vector<ConversationSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = fmt::format("{}:{}", path.string(), line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      schema_error(where, fmt::format("invalid JSON ({})", e.what()));
    }
    auto sample = sample_from_json(record, where);
    if (sample.image && sample.image->path) {
      fs::path image_path(*sample.image->path);
      if (image_path.is_relative()) image_path = base / image_path;
      if (!fs::exists(image_path)) schema_error(where, fmt::format("image '{}' not found", image_path.string()));
      sample.image->path = image_path.lexically_normal().string();
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

void write_manifest(const fs::path& path, std::span<const ConversationSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write manifest '{}'", path.string()));
  for (const auto& s : samples) out << serialize_sample(s) << '\n';
}

RawImage load_image(const ImageRef& image) {
  if (image.procedural) return render_procedural(*image.procedural);
  if (image.path) return read_ppm(*image.path);
  throw Error(ErrorKind::kSchema, "empty image reference");
}

// ---------------------------------------------------------------------------
// Cipher languages

std::span<const SyntheticLanguage> synthetic_languages() {
  // Distinct 128-codepoint blocks; letters occupy offsets 0x15..0x48 of each.
  static const std::array<SyntheticLanguage, 10> kLanguages = {{
      {"l1", "Telugu", 0x0C15},
      {"l2", "Hindi", 0x0915},
      {"l3", "Bengali", 0x0995},
      {"l4", "Malayalam", 0x0D15},
      {"l5", "Kannada", 0x0C95},
      {"l6", "Assamese", 0x0A15},
      {"l7", "Tamil", 0x0B95},
      {"l8", "Marathi", 0x0D95},
      {"l9", "Gujarati", 0x0A95},
      {"l10", "Odia", 0x0B15},
  }};
  return kLanguages;
}

const SyntheticLanguage* find_synthetic_language(std::string_view tag) {
  for (const auto& lang : synthetic_languages())
    if (lang.tag == tag) return &lang;
  return nullptr;
}

namespace {

const SyntheticLanguage& require_language(std::string_view tag) {
  const auto* lang = find_synthetic_language(tag);
  if (!lang) throw Error(ErrorKind::kConfig, fmt::format("'{}' is not a registered synthetic language", tag));
  return *lang;
}

}  // namespace

std::string cipher_translate(std::string_view text, std::string_view language) {
  const auto& lang = require_language(language);
  std::string out;
  out.reserve(text.size() * 3);
  for (char c : text) {
    if (c >= 'a' && c <= 'z') {
      utf8::append(out, lang.base + static_cast<char32_t>(c - 'a'));
    } else if (c >= 'A' && c <= 'Z') {
      utf8::append(out, lang.base + 26 + static_cast<char32_t>(c - 'A'));
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string cipher_inverse(std::string_view text, std::string_view language) {
  const auto& lang = require_language(language);
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b = static_cast<unsigned char>(text[i]);
    if (b < 0x80) {
      out.push_back(text[i++]);
      continue;
    }
    // Only 3-byte sequences can fall inside a cipher block.
    if ((b >> 4) == 0xE && i + 2 < text.size()) {
      const auto cps = utf8::codepoints(text.substr(i, 3));
      if (cps.size() == 1 && cps[0] >= lang.base && cps[0] < lang.base + 52) {
        const char32_t off = cps[0] - lang.base;
        out.push_back(static_cast<char>(off < 26 ? 'a' + off : 'A' + (off - 26)));
        i += 3;
        continue;
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

std::string localize(std::string_view english, std::string_view language) {
  if (find_synthetic_language(language)) return cipher_translate(english, language);
  return std::string(english);
}

// ---------------------------------------------------------------------------
// Conversations

namespace {

constexpr std::array<std::string_view, 4> kInstructionPool = {
    "Describe the image briefly.",
    "What is shown in this picture?",
    "Write a short caption for this image.",
    "What do you see in the image?",
};

}  // namespace

std::string instruction_phrase(std::string_view id, std::string_view language) {
  return localize(kInstructionPool[fnv1a(id) % kInstructionPool.size()], language);
}

ConversationSample caption_to_single_turn(std::string id, std::optional<ImageRef> image, std::string_view caption,
                                          std::string_view language) {
  if (caption.empty()) throw Error(ErrorKind::kSchema, fmt::format("sample '{}' has an empty caption", id));
  ConversationSample sample;
  sample.language = std::string(language);
  const std::string phrase = instruction_phrase(id, language);
  sample.turns.push_back({Role::kUser, image ? std::string(kImagePlaceholder) + "\n" + phrase : phrase});
  sample.turns.push_back({Role::kAssistant, std::string(caption)});
  sample.image = std::move(image);
  sample.id = std::move(id);
  return sample;
}

// ---------------------------------------------------------------------------
// Mixing

void MixSpec::validate() const {
  if (total == 0) throw Error(ErrorKind::kConfig, "mix total must be positive");
  if (!(english_fraction > 0.0 && english_fraction <= 1.0)) {
    throw Error(ErrorKind::kConfig, fmt::format("english fraction {} outside (0, 1]", english_fraction));
  }
  if (languages.empty() && english_fraction != 1.0) {
    throw Error(ErrorKind::kConfig,
                fmt::format("english fraction {} leaves a non-English share but no languages are listed",
                            english_fraction));
  }
  std::set<std::string> seen;
  for (const auto& lang : languages) {
    if (lang == english_tag) throw Error(ErrorKind::kConfig, "the English tag may not appear among mixed languages");
    if (!seen.insert(lang).second) throw Error(ErrorKind::kConfig, fmt::format("language '{}' listed twice", lang));
  }
}

std::vector<std::pair<std::string, std::size_t>> mix_counts(const MixSpec& spec) {
  spec.validate();
  std::vector<std::string> tags{spec.english_tag};
  tags.insert(tags.end(), spec.languages.begin(), spec.languages.end());
  std::vector<double> quotas(tags.size());
  const double total = static_cast<double>(spec.total);
  quotas[0] = total * spec.english_fraction;
  for (std::size_t i = 1; i < tags.size(); ++i) {
    quotas[i] = total * (1.0 - spec.english_fraction) / static_cast<double>(spec.languages.size());
  }
  std::vector<std::size_t> counts(tags.size());
  std::vector<double> remainders(tags.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const double q = std::round(quotas[i] * 1e9) / 1e9;  // absorb representation noise
    counts[i] = static_cast<std::size_t>(std::floor(q));
    remainders[i] = q - std::floor(q);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(tags.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < spec.total; ++k, ++assigned) counts[order[k % order.size()]] += 1;

  std::vector<std::pair<std::string, std::size_t>> out;
  for (std::size_t i = 0; i < tags.size(); ++i) out.emplace_back(tags[i], counts[i]);
  return out;
}

std::vector<ConversationSample> mix_languages(const std::map<std::string, std::vector<ConversationSample>>& sources,
                                              const MixSpec& spec) {
  const auto counts = mix_counts(spec);
  std::vector<ConversationSample> mixed;
  mixed.reserve(spec.total);
  for (std::size_t li = 0; li < counts.size(); ++li) {
    const auto& [tag, count] = counts[li];
    if (count == 0) continue;
    const auto it = sources.find(tag);
    const std::size_t available = it == sources.end() ? 0 : it->second.size();
    if (available < count) {
      throw Error(ErrorKind::kCapacity,
                  fmt::format("language '{}' needs {} samples but its source has {}", tag, count, available));
    }
    std::vector<std::size_t> picks(available);
    std::iota(picks.begin(), picks.end(), 0);
    Rng rng(derive_seed(spec.seed, li));
    rng.shuffle(std::span<std::size_t>(picks));
    for (std::size_t k = 0; k < count; ++k) mixed.push_back(it->second[picks[k]]);
  }
  Rng rng(derive_seed(spec.seed, 0xA11));
  rng.shuffle(std::span<ConversationSample>(mixed));
  return mixed;
}

std::map<std::string, std::size_t> language_histogram(std::span<const ConversationSample> samples) {
  std::map<std::string, std::size_t> histogram;
  for (const auto& s : samples) histogram[s.language] += 1;
  return histogram;
}

// ---------------------------------------------------------------------------
// Procedural corpus

namespace {

constexpr std::array<std::string_view, 3> kRowNames = {"top", "middle", "bottom"};
constexpr std::array<std::string_view, 3> kColNames = {"left", "center", "right"};

std::array<std::uint8_t, 3> color_rgb(std::string_view color) {
  if (color == "red") return {230, 30, 30};
  if (color == "green") return {30, 200, 50};
  return {40, 70, 235};
}

}  // namespace

std::string caption_for(const ProceduralImage& spec) {
  return fmt::format("a {} {} in the {} {}", spec.color, spec.shape, kRowNames.at(static_cast<std::size_t>(spec.row)),
                     kColNames.at(static_cast<std::size_t>(spec.col)));
}

RawImage render_procedural(const ProceduralImage& spec, std::size_t canvas) {
  if (canvas == 0) throw Error(ErrorKind::kConfig, "canvas size must be positive");
  RawImage image;
  image.width = canvas;
  image.height = canvas;
  image.rgb.assign(canvas * canvas * 3, 24);
  const double unit = static_cast<double>(canvas) / 48.0;
  const double cx = (spec.col * 16 + 8 + spec.dx) * unit;
  const double cy = (spec.row * 16 + 8 + spec.dy) * unit;
  const double r = spec.radius * unit;
  const auto rgb = color_rgb(spec.color);
  for (std::size_t y = 0; y < canvas; ++y) {
    for (std::size_t x = 0; x < canvas; ++x) {
      const double px = static_cast<double>(x) + 0.5 - cx;
      const double py = static_cast<double>(y) + 0.5 - cy;
      bool inside = false;
      if (spec.shape == "circle") {
        inside = px * px + py * py <= r * r;
      } else if (spec.shape == "square") {
        inside = std::abs(px) <= r && std::abs(py) <= r;
      } else {
        inside = py >= -r && py <= r && std::abs(px) <= (py + r) / 2.0;
      }
      if (inside) std::copy(rgb.begin(), rgb.end(), image.rgb.begin() + static_cast<std::ptrdiff_t>((y * canvas + x) * 3));
    }
  }
  return image;
}

std::vector<SynthItem> synth_corpus(std::size_t n, std::uint64_t seed, std::string_view id_prefix) {
  if (n == 0) throw Error(ErrorKind::kConfig, "synth_corpus needs n >= 1");
  Rng rng(seed);
  std::vector<SynthItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SynthItem item;
    item.id = fmt::format("{}-{:05d}", id_prefix, i);
    const std::size_t cls = i % 9;
    item.spec.shape = std::string(kShapes[cls / 3]);
    item.spec.color = std::string(kColors[cls % 3]);
    item.spec.row = static_cast<int>(rng.below(3));
    item.spec.col = static_cast<int>(rng.below(3));
    item.spec.dx = static_cast<int>(rng.below(5)) - 2;
    item.spec.dy = static_cast<int>(rng.below(5)) - 2;
    item.spec.radius = 5 + static_cast<int>(rng.below(3));
    item.caption = caption_for(item.spec);
    items.push_back(std::move(item));
  }
  return items;
}

PopeProbe pope_probe(const ProceduralImage& spec, std::string_view probe_shape, std::string_view probe_color) {
  PopeProbe probe;
  probe.question = fmt::format("Is there a {} {} in the image?", probe_color, probe_shape);
  probe.answer = probe_shape == spec.shape && probe_color == spec.color ? "yes" : "no";
  return probe;
}

ConversationSample synth_dialog(const SynthItem& item, std::string_view language, std::uint64_t seed) {
  Rng rng(derive_seed(seed, fnv1a(item.id)));
  const auto& s = item.spec;
  std::vector<std::pair<std::string, std::string>> pool = {
      {"Describe the image briefly.", item.caption},
      {"What shape is in the image?", fmt::format("a {}", s.shape)},
      {fmt::format("What color is the {}?", s.shape), s.color},
      {fmt::format("Where is the {}?", s.shape),
       fmt::format("in the {} {}", kRowNames.at(static_cast<std::size_t>(s.row)),
                   kColNames.at(static_cast<std::size_t>(s.col)))},
  };
  // Presence probe: the true object half the time, otherwise a different shape/colour.
  std::string probe_shape = s.shape;
  std::string probe_color = s.color;
  if (rng.below(2) == 1) {
    do {
      probe_shape = std::string(kShapes[rng.below(3)]);
      probe_color = std::string(kColors[rng.below(3)]);
    } while (probe_shape == s.shape && probe_color == s.color);
  }
  const auto probe = pope_probe(s, probe_shape, probe_color);
  pool.emplace_back(probe.question, probe.answer);

  rng.shuffle(std::span<std::pair<std::string, std::string>>(pool));
  const std::size_t n_turns = 2 + rng.below(2);

  ConversationSample sample;
  sample.id = fmt::format("{}-dialog-{}", item.id, language);
  sample.language = std::string(language);
  sample.image = ImageRef::from_spec(s);
  for (std::size_t k = 0; k < n_turns; ++k) {
    std::string question = localize(pool[k].first, language);
    if (k == 0) question = std::string(kImagePlaceholder) + "\n" + question;
    sample.turns.push_back({Role::kUser, std::move(question)});
    sample.turns.push_back({Role::kAssistant, localize(pool[k].second, language)});
  }
  return sample;
}

}  // namespace mvl
