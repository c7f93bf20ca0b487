// SPDX-License-Identifier: Apache-2.0

#include "mvl/vision.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw Error(ErrorKind::kConfig,
                fmt::format("encoder: image_size {} must be a positive multiple of patch_size {}", image_size, patch_size));
  }
  if (d_vision == 0 || n_heads == 0 || d_vision % n_heads != 0) {
    throw Error(ErrorKind::kConfig,
                fmt::format("encoder: d_vision {} must be divisible by n_heads {}", d_vision, n_heads));
  }
  if (mlp_ratio == 0) throw Error(ErrorKind::kConfig, "encoder: mlp_ratio must be positive");
}

EncoderConfig encoder_variant(std::string_view name) {
  EncoderConfig cfg;
  if (name == "clip-like") {
    return cfg;
  }
  if (name == "siglip-like") {
    cfg.variant_name = "siglip-like";
    cfg.image_size = 378;
    cfg.patch_size = 14;
    cfg.d_vision = 96;
    return cfg;
  }
  if (name == "clip-336") {
    cfg.variant_name = "clip-336";
    cfg.image_size = 336;
    cfg.patch_size = 14;
    return cfg;
  }
  throw Error(ErrorKind::kConfig, fmt::format("unknown encoder variant '{}'", name));
}

std::vector<std::string> encoder_variant_names() { return {"clip-like", "siglip-like", "clip-336"}; }

// ---------------------------------------------------------------------------
// PPM

RawImage parse_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
      if (++digits > 9) throw Error(ErrorKind::kFormat, fmt::format("ppm: {} too large", what));
    }
    if (digits == 0) throw Error(ErrorKind::kFormat, fmt::format("ppm: missing {}", what));
    return value;
  };

  if (bytes.substr(0, 2) != "P6") throw Error(ErrorKind::kFormat, "ppm: expected binary 'P6' magic");
  pos = 2;
  RawImage image;
  image.width = read_uint("width");
  image.height = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval == 0 || maxval > 255) {
    throw Error(ErrorKind::kFormat, fmt::format("ppm: maxval {} unsupported (8-bit only)", maxval));
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorKind::kFormat, "ppm: header must end with one whitespace byte");
  }
  ++pos;
  if (image.width == 0 || image.height == 0) {
    throw Error(ErrorKind::kFormat, fmt::format("ppm: zero-sized image {}x{}", image.width, image.height));
  }
  const std::size_t need = image.width * image.height * 3;
  if (bytes.size() - pos < need) {
    throw Error(ErrorKind::kFormat, fmt::format("ppm: expected {} pixel bytes, found {}", need, bytes.size() - pos));
  }
  image.rgb.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    const auto v = static_cast<unsigned char>(bytes[pos + i]);
    image.rgb[i] = maxval == 255 ? v : static_cast<std::uint8_t>(std::lround(255.0 * std::min<double>(v, maxval) / maxval));
  }
  return image;
}

RawImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open image '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_ppm(buffer.str());
}

std::string encode_ppm(const RawImage& image) {
  std::string out = fmt::format("P6\n{} {}\n255\n", image.width, image.height);
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return out;
}

void write_ppm(const std::filesystem::path& path, const RawImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write image '{}'", path.string()));
  const auto bytes = encode_ppm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Preprocessing

ImageInput preprocess(const RawImage& raw, std::size_t image_size) {
  if (raw.width == 0 || raw.height == 0) {
    throw Error(ErrorKind::kFormat, fmt::format("image has zero extent ({}x{})", raw.width, raw.height));
  }
  if (raw.rgb.size() != raw.width * raw.height * 3) {
    throw Error(ErrorKind::kFormat,
                fmt::format("image {}x{} needs {} bytes, has {}", raw.width, raw.height, raw.width * raw.height * 3,
                            raw.rgb.size()));
  }
  if (image_size == 0) throw Error(ErrorKind::kConfig, "image_size must be positive");

  const double factor = static_cast<double>(image_size) / static_cast<double>(std::min(raw.width, raw.height));
  const auto resized_w = std::max<std::size_t>(image_size, static_cast<std::size_t>(std::lround(raw.width * factor)));
  const auto resized_h = std::max<std::size_t>(image_size, static_cast<std::size_t>(std::lround(raw.height * factor)));
  const std::size_t off_x = (resized_w - image_size) / 2;
  const std::size_t off_y = (resized_h - image_size) / 2;
  const double scale_x = static_cast<double>(raw.width) / static_cast<double>(resized_w);
  const double scale_y = static_cast<double>(raw.height) / static_cast<double>(resized_h);

  // Source coordinate and blend weight for one output index along an axis.
  auto source = [](std::size_t out_index, std::size_t offset, double scale, std::size_t extent) {
    double s = (static_cast<double>(out_index + offset) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    const std::size_t hi = std::min(lo + 1, extent - 1);
    return std::tuple{lo, hi, s - static_cast<double>(lo)};
  };

  ImageInput out;
  out.height = image_size;
  out.width = image_size;
  out.pixels.resize(image_size * image_size * 3);
  for (std::size_t y = 0; y < image_size; ++y) {
    const auto [y0, y1, wy] = source(y, off_y, scale_y, raw.height);
    for (std::size_t x = 0; x < image_size; ++x) {
      const auto [x0, x1, wx] = source(x, off_x, scale_x, raw.width);
      for (std::size_t c = 0; c < 3; ++c) {
        auto px = [&](std::size_t yy, std::size_t xx) {
          return static_cast<double>(raw.rgb[(yy * raw.width + xx) * 3 + c]);
        };
        const double top = px(y0, x0) * (1.0 - wx) + px(y0, x1) * wx;
        const double bottom = px(y1, x0) * (1.0 - wx) + px(y1, x1) * wx;
        const double value = top * (1.0 - wy) + bottom * wy;
        out.pixels[(y * image_size + x) * 3 + c] = static_cast<float>(value / 127.5 - 1.0);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

template <typename T>
VisionEncoder<T> VisionEncoder<T>::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  VisionEncoder enc;
  enc.config_ = config;
  enc.patch_embed_ = Linear<T>::init(config.patch_dim(), config.d_vision, rng);
  if (config.position_embedding) {
    enc.position_ = init_truncated_normal<T>({config.token_count(), config.d_vision}, rng);
  }
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    enc.blocks_.push_back(
        TransformerBlock<T>::init(config.d_vision, config.n_heads, config.d_vision * config.mlp_ratio, rng));
  }
  enc.ln_post_ = LayerNormParams<T>::init(config.d_vision);
  return enc;
}

template <typename T>
Tensor<T> VisionEncoder<T>::patchify(const ImageInput& image, const EncoderConfig& config) {
  if (image.height != config.image_size || image.width != config.image_size || image.channels != 3 ||
      image.pixels.size() != image.height * image.width * 3) {
    throw Error(ErrorKind::kShape, fmt::format("encoder expects {0}x{0}x3 input, got {1}x{2}x{3}", config.image_size,
                                               image.height, image.width, image.channels));
  }
  const std::size_t p = config.patch_size;
  const std::size_t grid = config.grid();
  const std::size_t dim = config.patch_dim();
  std::vector<T> rows(config.token_count() * dim);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      T* dst = rows.data() + (gy * grid + gx) * dim;
      for (std::size_t y = 0; y < p; ++y) {
        const float* src = image.pixels.data() + ((gy * p + y) * image.width + gx * p) * 3;
        for (std::size_t k = 0; k < p * 3; ++k) *dst++ = static_cast<T>(src[k]);
      }
    }
  }
  return Tensor<T>::from({config.token_count(), dim}, std::move(rows));
}

template <typename T>
Tensor<T> VisionEncoder<T>::encode(const ImageInput& image) const {
  auto x = patch_embed_(patchify(image, config_));
  if (config_.position_embedding) x = add(x, position_);
  for (const auto& block : blocks_) x = block.forward(x, /*causal=*/false);
  return ln_post_(x);
}

template <typename T>
void VisionEncoder<T>::collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
  patch_embed_.collect(prefix + ".patch_embed", out);
  if (config_.position_embedding) out.push_back({prefix + ".position", position_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(fmt::format("{}.blocks.{}", prefix, i), out);
  ln_post_.collect(prefix + ".ln_post", out);
}

template class VisionEncoder<float>;
template class VisionEncoder<double>;

}  // namespace mvl
