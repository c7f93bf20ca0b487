// SPDX-License-Identifier: Apache-2.0

#include "mvl/tokenizer.hpp"

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

std::string ImageRef::key() const {
  if (path) return *path;
  if (procedural) {
    const auto& s = *procedural;
    return fmt::format("proc:{}:{}:{}:{}:{}:{}:{}", s.shape, s.color, s.row, s.col, s.dx, s.dy, s.radius);
  }
  return {};
}

std::vector<TokenId> encode(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(vocab::kByteOffset + static_cast<TokenId>(static_cast<unsigned char>(c)));
  return ids;
}

std::string sanitize_utf8(std::string_view bytes) {
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
  std::string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    const auto lead = static_cast<unsigned char>(bytes[i]);
    if (lead < 0x80) {
      out.push_back(static_cast<char>(lead));
      ++i;
      continue;
    }
    std::size_t need = 0;
    unsigned char lo = 0x80;
    unsigned char hi = 0xBF;
    if (lead >= 0xC2 && lead <= 0xDF) {
      need = 1;
    } else if (lead >= 0xE0 && lead <= 0xEF) {
      need = 2;
      if (lead == 0xE0) lo = 0xA0;
      if (lead == 0xED) hi = 0x9F;
    } else if (lead >= 0xF0 && lead <= 0xF4) {
      need = 3;
      if (lead == 0xF0) lo = 0x90;
      if (lead == 0xF4) hi = 0x8F;
    } else {
      out += kReplacement;
      ++i;
      continue;
    }
    // Consume the maximal well-formed prefix; a broken sequence becomes one U+FFFD.
    std::size_t j = 1;
    for (; j <= need && i + j < n; ++j) {
      const auto c = static_cast<unsigned char>(bytes[i + j]);
      const unsigned char min = j == 1 ? lo : 0x80;
      const unsigned char max = j == 1 ? hi : 0xBF;
      if (c < min || c > max) break;
    }
    if (j == need + 1) {
      out.append(bytes.substr(i, j));
    } else {
      out += kReplacement;
    }
    i += j;
  }
  return out;
}

std::string decode(std::span<const TokenId> ids) {
  std::string bytes;
  bytes.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < vocab::kByteOffset || static_cast<std::size_t>(id) >= vocab::kSize) {
      throw Error(ErrorKind::kVocabulary, fmt::format("id {} is not a byte token (valid: [{}, {}))", id,
                                                      vocab::kByteOffset, vocab::kSize));
    }
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(id - vocab::kByteOffset)));
  }
  return sanitize_utf8(bytes);
}

std::string decode_text(std::span<const TokenId> ids) {
  std::vector<TokenId> kept;
  kept.reserve(ids.size());
  for (TokenId id : ids)
    if (!vocab::is_special(id)) kept.push_back(id);
  return decode(kept);
}

namespace {

struct Builder {
  RenderedSample out;

  void push(TokenId id, bool supervised) {
    out.ids.push_back(id);
    out.loss_mask.push_back(supervised ? 1 : 0);
  }
  void text(std::string_view s, bool supervised) {
    for (TokenId id : encode(s)) push(id, supervised);
  }
};

std::size_t count_placeholders(std::string_view text) {
  std::size_t count = 0;
  for (auto pos = text.find(kImagePlaceholder); pos != std::string_view::npos;
       pos = text.find(kImagePlaceholder, pos + kImagePlaceholder.size()))
    ++count;
  return count;
}

}  // namespace

RenderedSample render_conversation(const ConversationSample& sample, bool for_training,
                                   const RenderOptions& options) {
  if (sample.turns.empty()) {
    throw Error(ErrorKind::kSchema, fmt::format("sample '{}' has no turns", sample.id));
  }
  std::size_t placeholders = 0;
  for (std::size_t i = 0; i < sample.turns.size(); ++i) {
    const auto expected = i % 2 == 0 ? Role::kUser : Role::kAssistant;
    if (sample.turns[i].role != expected) {
      throw Error(ErrorKind::kSchema,
                  fmt::format("sample '{}': turn {} breaks user/assistant alternation", sample.id, i));
    }
    const std::size_t here = count_placeholders(sample.turns[i].text);
    if (here > 0 && i != 0 && placeholders + here == 1) {
      throw Error(ErrorKind::kSchema,
                  fmt::format("sample '{}': image placeholder outside the first user turn", sample.id));
    }
    placeholders += here;
  }
  if (placeholders > 1) {
    throw Error(ErrorKind::kUnsupportedModality,
                fmt::format("sample '{}' references {} images; at most one is supported", sample.id, placeholders));
  }
  if (placeholders == 1 && !sample.image) {
    throw Error(ErrorKind::kSchema, fmt::format("sample '{}' has an image placeholder but no image", sample.id));
  }

  std::size_t n_turns = sample.turns.size();
  if (!for_training && sample.turns.back().role == Role::kAssistant) --n_turns;

  Builder b;
  b.push(vocab::kBos, false);
  if (!options.system_prompt.empty()) {
    b.text("SYSTEM: ", false);
    b.text(options.system_prompt, false);
    b.text("\n", false);
  }
  for (std::size_t i = 0; i < n_turns; ++i) {
    const auto& turn = sample.turns[i];
    if (turn.role == Role::kUser) {
      b.text("USER: ", false);
      std::string_view text = turn.text;
      if (i == 0 && sample.image) {
        const auto pos = text.find(kImagePlaceholder);
        if (pos == std::string_view::npos) {
          b.out.image_slot = b.out.ids.size();
          b.push(vocab::kImg, false);
          b.text(text, false);
        } else {
          b.text(text.substr(0, pos), false);
          b.out.image_slot = b.out.ids.size();
          b.push(vocab::kImg, false);
          b.text(text.substr(pos + kImagePlaceholder.size()), false);
        }
      } else {
        b.text(text, false);
      }
      b.text("\n", false);
    } else {
      b.text("ASSISTANT: ", false);
      b.text(turn.text, true);
      b.push(vocab::kEos, true);
    }
  }
  if (!for_training) b.text("ASSISTANT: ", false);
  return std::move(b.out);
}

}  // namespace mvl
