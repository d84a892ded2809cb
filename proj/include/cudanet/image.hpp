#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cudanet {

// Interleaved RGB image, row-major, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // height * width * 3

  Image() = default;
  Image(int h, int w, float fill = 0.0F) : height(h), width(w), pixels(static_cast<size_t>(h) * w * 3, fill) {}

  [[nodiscard]] float& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  [[nodiscard]] float at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

// Per-pixel class ids; kIgnore marks pixels excluded from losses and metrics.
struct LabelMap {
  static constexpr std::uint8_t kIgnore = 255;

  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> ids;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0) : height(h), width(w), ids(static_cast<size_t>(h) * w, fill) {}

  [[nodiscard]] std::uint8_t& at(int y, int x) { return ids[static_cast<size_t>(y) * width + x]; }
  [[nodiscard]] std::uint8_t at(int y, int x) const { return ids[static_cast<size_t>(y) * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

// 8-bit quantization used by the PNG writer: round(clamp(v, 0, 1) * 255).
std::uint8_t quantize(float v);
Image quantized(const Image& image);

void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const LabelMap& labels);
Image read_png_rgb(const std::filesystem::path& path);
LabelMap read_png_labels(const std::filesystem::path& path);

// Peak signal-to-noise ratio in dB for images in [0, 1].
double psnr(const Image& a, const Image& b);

}  // namespace cudanet
