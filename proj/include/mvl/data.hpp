// SPDX-License-Identifier: Apache-2.0
//
// Manifests, conversation construction, synthetic cipher languages, balanced
// language mixing and the procedural shapes corpus.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mvl/sample.hpp"
#include "mvl/vision.hpp"

namespace mvl {

// ---------------------------------------------------------------------------
// Manifest records
//
// One UTF-8 JSON object per line:
//   {"id": str, "language": str, "image"?: str | {"shape","color","row","col","dx"?,"dy"?,"radius"?},
//    "turns": [{"role": "user"|"assistant", "text": str}, ...]}
// Relative image paths resolve against the manifest's directory.

nlohmann::json sample_to_json(const ConversationSample& sample);
/// Throws a schema error (prefixed with `where`) for any violation.
ConversationSample sample_from_json(const nlohmann::json& record, std::string_view where = "record");
std::string serialize_sample(const ConversationSample& sample);

/// Validated samples in file order. Image paths are resolved and must exist.
std::vector<ConversationSample> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ConversationSample> samples);

/// Decodes (PPM) or renders (procedural) the referenced image.
RawImage load_image(const ImageRef& image);

// ---------------------------------------------------------------------------
// Synthetic cipher languages l1..l10

struct SyntheticLanguage {
  std::string tag;         // l1 .. l10
  std::string display;     // report column this language stands in for
  char32_t base;           // a -> base, z -> base + 25, A -> base + 26, Z -> base + 51
};

std::span<const SyntheticLanguage> synthetic_languages();
const SyntheticLanguage* find_synthetic_language(std::string_view tag);

/// Maps ASCII letters into the language's codepoint block; every other
/// codepoint passes through unchanged. Unknown tags are a config error.
std::string cipher_translate(std::string_view text, std::string_view language);
std::string cipher_inverse(std::string_view text, std::string_view language);

/// Renders English text in `language`: cipher for l1..l10, identity otherwise.
std::string localize(std::string_view english, std::string_view language);

// ---------------------------------------------------------------------------
// Conversation construction

/// Instruction phrase chosen deterministically from a small pool by hashing `id`.
std::string instruction_phrase(std::string_view id, std::string_view language);

/// Single-turn captioning conversation: user = "<image>\n" + instruction,
/// assistant = caption. Empty captions are a schema error.
ConversationSample caption_to_single_turn(std::string id, std::optional<ImageRef> image, std::string_view caption,
                                          std::string_view language);

// ---------------------------------------------------------------------------
// Language mixing

struct MixSpec {
  std::size_t total = 0;
  double english_fraction = 0.5;
  std::vector<std::string> languages;
  std::uint64_t seed = 0;
  std::string english_tag = "en";

  void validate() const;
};

/// Per-language counts (English first, then `languages` in order) from
/// largest-remainder rounding; they sum to `total` exactly.
std::vector<std::pair<std::string, std::size_t>> mix_counts(const MixSpec& spec);

/// Samples each language without replacement to its count, then shuffles the union once.
std::vector<ConversationSample> mix_languages(const std::map<std::string, std::vector<ConversationSample>>& sources,
                                              const MixSpec& spec);

std::map<std::string, std::size_t> language_histogram(std::span<const ConversationSample> samples);

// ---------------------------------------------------------------------------
// Procedural corpus

inline constexpr std::size_t kSynthCanvas = 48;

struct SynthItem {
  std::string id;
  ProceduralImage spec;
  std::string caption;  // English
};

std::string caption_for(const ProceduralImage& spec);
RawImage render_procedural(const ProceduralImage& spec, std::size_t canvas = kSynthCanvas);

/// `n` items; item i has shape/colour class i % 9 and a seeded grid cell and jitter.
std::vector<SynthItem> synth_corpus(std::size_t n, std::uint64_t seed, std::string_view id_prefix = "synth");

/// Multi-turn instruction dialog about one item (shape, colour, position,
/// yes/no presence and caption questions), localized into `language`.
ConversationSample synth_dialog(const SynthItem& item, std::string_view language, std::uint64_t seed);

/// English yes/no presence question and its answer for a probe shape/colour.
struct PopeProbe {
  std::string question;
  std::string answer;  // "yes" | "no"
};
PopeProbe pope_probe(const ProceduralImage& spec, std::string_view probe_shape, std::string_view probe_color);

inline constexpr std::string_view kShapes[] = {"circle", "square", "triangle"};
inline constexpr std::string_view kColors[] = {"red", "green", "blue"};

}  // namespace mvl
