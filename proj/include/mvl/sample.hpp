// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mvl {

/// Inline recipe for a synthetic image: one coloured shape on a 3x3 grid.
struct ProceduralImage {
  std::string shape;  // circle | square | triangle
  std::string color;  // red | green | blue
  int row = 0;        // 0..2, top to bottom
  int col = 0;        // 0..2, left to right
  int dx = 0;         // jitter in 1/48ths of the canvas
  int dy = 0;
  int radius = 6;     // half-extent in 1/48ths of the canvas

  bool operator==(const ProceduralImage&) const = default;
};

struct ImageRef {
  // Exactly one of the two is set.
  std::optional<std::string> path;
  std::optional<ProceduralImage> procedural;

  static ImageRef from_path(std::string p) { return ImageRef{std::move(p), std::nullopt}; }
  static ImageRef from_spec(ProceduralImage spec) { return ImageRef{std::nullopt, std::move(spec)}; }
  /// Stable textual key (path, or a canonical rendering of the spec).
  std::string key() const;

  bool operator==(const ImageRef&) const = default;
};

enum class Role { kUser, kAssistant };

struct Turn {
  Role role = Role::kUser;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct ConversationSample {
  std::string id;
  std::string language;
  std::optional<ImageRef> image;
  std::vector<Turn> turns;

  bool operator==(const ConversationSample&) const = default;
};

/// Marker a user turn may carry to position the image inside its text.
inline constexpr std::string_view kImagePlaceholder = "<image>";

}  // namespace mvl
