// SPDX-License-Identifier: Apache-2.0
//
// Byte-level vocabulary: four specials followed by the 256 byte values. Any
// UTF-8 text, whatever the script, encodes without an unknown token.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvl/sample.hpp"
#include "mvl/tensor.hpp"

namespace mvl::vocab {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kImg = 3;
inline constexpr TokenId kByteOffset = 4;
inline constexpr std::size_t kSize = 260;

inline constexpr bool is_special(TokenId id) { return id >= 0 && id < kByteOffset; }

}  // namespace mvl::vocab

namespace mvl {

std::vector<TokenId> encode(std::string_view text);

/// Inverse of encode. Ill-formed UTF-8 decodes to U+FFFD replacement
/// characters; any id outside the byte range is a vocabulary error.
std::string decode(std::span<const TokenId> ids);

/// Drops special ids, then decodes.
std::string decode_text(std::span<const TokenId> ids);

/// Replaces every ill-formed UTF-8 subsequence with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

struct RenderedSample {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> loss_mask;
  std::optional<std::size_t> image_slot;
};

struct RenderOptions {
  // Emitted as "SYSTEM: {text}\n" after BOS when non-empty.
  std::string system_prompt;
};

/// Renders turns through the chat template:
///
///   BOS [SYSTEM: s\n] USER: [IMG]text\n ASSISTANT: text EOS USER: ...
///
/// loss_mask is 1 exactly on assistant text bytes and their EOS. With
/// `for_training` false, a trailing assistant turn is dropped and an open
/// "ASSISTANT: " prefix is appended as the generation prompt.
RenderedSample render_conversation(const ConversationSample& sample, bool for_training,
                                   const RenderOptions& options = {});

}  // namespace mvl
