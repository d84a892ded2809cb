#pragma once

// Small raster plots written as PNG: the gap bar chart and training loss curves.

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cudanet/image.hpp"
#include "cudanet/uncertainty.hpp"

namespace cudanet {

using Color = std::array<float, 3>;

class Canvas {
 public:
  Canvas(int width, int height, Color background = {1.0F, 1.0F, 1.0F});

  void fill_rect(int x0, int y0, int x1, int y1, Color c);
  void line(int x0, int y0, int x1, int y1, Color c);
  // 3x5 pixel glyphs scaled by `scale`; lowercase is drawn as uppercase.
  void text(int x, int y, std::string_view s, Color c, int scale = 2);
  [[nodiscard]] static int text_width(std::string_view s, int scale = 2);

  [[nodiscard]] const Image& image() const { return image_; }

 private:
  void put(int x, int y, Color c);
  Image image_;
};

// MVV bars for s, m, t next to gap bars for style, fog, dual; one group per report.
Image render_gap_plot(const std::vector<GapReport>& reports);
void write_gap_plot(const std::vector<GapReport>& reports, const std::filesystem::path& path);

// One line per key over the record index, each key scaled to its own range.
Image render_loss_plot(const std::vector<nlohmann::json>& records, const std::vector<std::string>& keys);
void write_loss_plot(const std::vector<nlohmann::json>& records, const std::vector<std::string>& keys,
                     const std::filesystem::path& path);

}  // namespace cudanet
