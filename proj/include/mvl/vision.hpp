// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mvl/layers.hpp"
#include "mvl/tensor.hpp"

namespace mvl {

struct EncoderConfig {
  std::string variant_name = "clip-like";
  std::size_t image_size = 48;
  std::size_t patch_size = 8;
  std::size_t d_vision = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t mlp_ratio = 4;
  // Off only in tests probing patch-permutation equivariance.
  bool position_embedding = true;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t token_count() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

/// Registered encoder variants, selectable by name:
///   clip-like    48px / patch 8,  d 64  -> 36 tokens (desk default)
///   siglip-like  378px / patch 14, d 96 -> 729 tokens
///   clip-336     336px / patch 14, d 64 -> 576 tokens
EncoderConfig encoder_variant(std::string_view name);
std::vector<std::string> encoder_variant_names();

/// Decoded 8-bit RGB raster, row-major, interleaved channels.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Square model input: height x width x 3 values in [-1, 1] (HWC order).
struct ImageInput {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;
};

RawImage parse_ppm(std::string_view bytes);
RawImage read_ppm(const std::filesystem::path& path);
std::string encode_ppm(const RawImage& image);
void write_ppm(const std::filesystem::path& path, const RawImage& image);

/// Bilinear resize (half-pixel centres) of the short side to `image_size`,
/// centre crop, then scale bytes to [-1, 1].
ImageInput preprocess(const RawImage& raw, std::size_t image_size);

template <typename T>
class VisionEncoder {
 public:
  static VisionEncoder init(const EncoderConfig& config, std::uint64_t seed);

  /// [token_count x d_vision]; row i is patch i in row-major grid order.
  Tensor<T> encode(const ImageInput& image) const;

  /// Flattens an image into [token_count x patch_dim] rows, (y, x, channel) within a patch.
  static Tensor<T> patchify(const ImageInput& image, const EncoderConfig& config);

  const EncoderConfig& config() const { return config_; }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const;

 private:
  EncoderConfig config_;
  Linear<T> patch_embed_;
  Tensor<T> position_;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNormParams<T> ln_post_;
};

}  // namespace mvl
