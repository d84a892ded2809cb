#include "cudanet/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "cudanet/errors.hpp"

namespace cudanet {
namespace {

// Rows top to bottom, three columns each.
const std::map<char, std::array<const char*, 5>>& glyphs() {
  static const std::map<char, std::array<const char*, 5>> g{
      {'A', {"010", "101", "111", "101", "101"}}, {'B', {"110", "101", "110", "101", "110"}},
      {'C', {"011", "100", "100", "100", "011"}}, {'D', {"110", "101", "101", "101", "110"}},
      {'E', {"111", "100", "110", "100", "111"}}, {'F', {"111", "100", "110", "100", "100"}},
      {'G', {"011", "100", "101", "101", "011"}}, {'H', {"101", "101", "111", "101", "101"}},
      {'I', {"111", "010", "010", "010", "111"}}, {'J', {"001", "001", "001", "101", "010"}},
      {'K', {"101", "101", "110", "101", "101"}}, {'L', {"100", "100", "100", "100", "111"}},
      {'M', {"101", "111", "111", "101", "101"}}, {'N', {"110", "101", "101", "101", "101"}},
      {'O', {"010", "101", "101", "101", "010"}}, {'P', {"110", "101", "110", "100", "100"}},
      {'Q', {"010", "101", "101", "110", "011"}}, {'R', {"110", "101", "110", "101", "101"}},
      {'S', {"011", "100", "010", "001", "110"}}, {'T', {"111", "010", "010", "010", "010"}},
      {'U', {"101", "101", "101", "101", "111"}}, {'V', {"101", "101", "101", "101", "010"}},
      {'W', {"101", "101", "111", "111", "101"}}, {'X', {"101", "101", "010", "101", "101"}},
      {'Y', {"101", "101", "010", "010", "010"}}, {'Z', {"111", "001", "010", "100", "111"}},
      {'0', {"111", "101", "101", "101", "111"}}, {'1', {"010", "110", "010", "010", "111"}},
      {'2', {"110", "001", "010", "100", "111"}}, {'3', {"110", "001", "010", "001", "110"}},
      {'4', {"101", "101", "111", "001", "001"}}, {'5', {"111", "100", "110", "001", "110"}},
      {'6', {"011", "100", "111", "101", "111"}}, {'7', {"111", "001", "010", "010", "010"}},
      {'8', {"111", "101", "111", "101", "111"}}, {'9', {"111", "101", "111", "001", "110"}},
      {'.', {"000", "000", "000", "000", "010"}}, {'-', {"000", "000", "111", "000", "000"}},
      {':', {"000", "010", "000", "010", "000"}}, {'/', {"001", "001", "010", "100", "100"}},
      {'_', {"000", "000", "000", "000", "111"}}, {'=', {"000", "111", "000", "111", "000"}},
      {'(', {"010", "100", "100", "100", "010"}}, {')', {"010", "001", "001", "001", "010"}},
      {'+', {"000", "010", "111", "010", "000"}}, {' ', {"000", "000", "000", "000", "000"}},
  };
  return g;
}

constexpr Color kBlack{0.0F, 0.0F, 0.0F};
constexpr Color kGrid{0.85F, 0.85F, 0.85F};
const std::array<Color, 6> kPalette{Color{0.20F, 0.40F, 0.75F}, Color{0.85F, 0.45F, 0.15F}, Color{0.25F, 0.65F, 0.30F},
                                    Color{0.75F, 0.20F, 0.25F}, Color{0.55F, 0.35F, 0.70F}, Color{0.45F, 0.45F, 0.45F}};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

Canvas::Canvas(int width, int height, Color background) {
  image_.height = height;
  image_.width = width;
  image_.pixels.resize(static_cast<size_t>(width) * height * 3);
  for (size_t i = 0; i < image_.pixels.size(); i += 3) {
    std::copy(background.begin(), background.end(), image_.pixels.begin() + static_cast<std::ptrdiff_t>(i));
  }
}

void Canvas::put(int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= image_.width || y >= image_.height) return;
  const auto i = (static_cast<size_t>(y) * image_.width + x) * 3;
  std::copy(c.begin(), c.end(), image_.pixels.begin() + static_cast<std::ptrdiff_t>(i));
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Color c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) put(x, y, c);
  }
}

void Canvas::line(int x0, int y0, int x1, int y1, Color c) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

int Canvas::text_width(std::string_view s, int scale) { return static_cast<int>(s.size()) * 4 * scale; }

void Canvas::text(int x, int y, std::string_view s, Color c, int scale) {
  const auto& g = glyphs();
  for (const char raw : s) {
    const auto it = g.find(static_cast<char>(std::toupper(static_cast<unsigned char>(raw))));
    if (it != g.end()) {
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if (it->second[static_cast<size_t>(row)][col] == '1') {
            fill_rect(x + col * scale, y + row * scale, x + (col + 1) * scale - 1, y + (row + 1) * scale - 1, c);
          }
        }
      }
    }
    x += 4 * scale;
  }
}

Image render_gap_plot(const std::vector<GapReport>& reports) {
  if (reports.empty()) throw DataError("gap plot needs at least one report");
  constexpr int kPanelW = 300;
  constexpr int kPanelH = 220;
  constexpr int kTop = 40;
  constexpr int kBase = 190;
  const int width = kPanelW * 2 + 20;
  const int height = kPanelH + 20 + 14 * static_cast<int>(reports.size());
  Canvas canvas(width, height);

  double max_mvv = 1e-12;
  double max_gap = 1e-12;
  for (const auto& r : reports) {
    max_mvv = std::max({max_mvv, r.mvv_s, r.mvv_m, r.mvv_t});
    max_gap = std::max({max_gap, std::abs(r.gap_style()), std::abs(r.gap_fog()), std::abs(r.gap_dual())});
  }

  auto panel = [&](int x0, const std::string& title, const std::array<std::string, 3>& names, double scale,
                   auto&& value_of) {
    canvas.text(x0 + 10, 10, title, kBlack);
    canvas.line(x0 + 10, kBase, x0 + kPanelW - 10, kBase, kBlack);
    const int group_w = (kPanelW - 20) / 3;
    const int bar_w = std::max(4, (group_w - 20) / static_cast<int>(reports.size()));
    for (int k = 0; k < 3; ++k) {
      const int gx = x0 + 10 + k * group_w + 10;
      for (size_t r = 0; r < reports.size(); ++r) {
        const double v = value_of(reports[r], k);
        const int h = static_cast<int>(std::lround(std::abs(v) / scale * (kBase - kTop)));
        const int bx = gx + static_cast<int>(r) * bar_w;
        if (v >= 0) {
          canvas.fill_rect(bx, kBase - h, bx + bar_w - 2, kBase - 1, kPalette[r % kPalette.size()]);
        } else {
          canvas.fill_rect(bx, kBase + 1, bx + bar_w - 2, std::min(kBase + h, kPanelH - 1), kPalette[r % kPalette.size()]);
        }
        canvas.text(bx, std::max(kTop - 14, kBase - h - 10), fmt(v), kBlack, 1);
      }
      canvas.text(gx, kBase + 8, names[static_cast<size_t>(k)], kBlack);
    }
  };

  panel(0, "MVV", {"S", "M", "T"}, max_mvv, [](const GapReport& r, int k) {
    return k == 0 ? r.mvv_s : (k == 1 ? r.mvv_m : r.mvv_t);
  });
  panel(kPanelW + 20, "GAP", {"STYLE", "FOG", "DUAL"}, max_gap, [](const GapReport& r, int k) {
    return k == 0 ? r.gap_style() : (k == 1 ? r.gap_fog() : r.gap_dual());
  });
  for (size_t r = 0; r < reports.size(); ++r) {
    const int y = kPanelH + 10 + 14 * static_cast<int>(r);
    canvas.fill_rect(10, y, 20, y + 9, kPalette[r % kPalette.size()]);
    canvas.text(26, y, reports[r].model, kBlack);
  }
  return canvas.image();
}

void write_gap_plot(const std::vector<GapReport>& reports, const std::filesystem::path& path) {
  write_png(path, render_gap_plot(reports));
}

Image render_loss_plot(const std::vector<nlohmann::json>& records, const std::vector<std::string>& keys) {
  constexpr int kW = 640;
  constexpr int kH = 360;
  constexpr int kLeft = 20;
  constexpr int kRight = kW - 20;
  constexpr int kTop = 20;
  constexpr int kBottom = kH - 40;
  Canvas canvas(kW, kH);
  for (int i = 0; i <= 4; ++i) {
    const int y = kTop + (kBottom - kTop) * i / 4;
    canvas.line(kLeft, y, kRight, y, kGrid);
  }
  canvas.line(kLeft, kBottom, kRight, kBottom, kBlack);
  canvas.line(kLeft, kTop, kLeft, kBottom, kBlack);
  const auto n = records.size();
  for (size_t k = 0; k < keys.size(); ++k) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : records) {
      if (const auto it = r.find(keys[k]); it != r.end() && it->is_number()) {
        lo = std::min(lo, it->get<double>());
        hi = std::max(hi, it->get<double>());
      }
    }
    if (!(hi >= lo)) continue;
    const double span = hi > lo ? hi - lo : 1.0;
    const auto color = kPalette[k % kPalette.size()];
    int px = -1;
    int py = -1;
    for (size_t i = 0; i < n; ++i) {
      const auto it = records[i].find(keys[k]);
      if (it == records[i].end() || !it->is_number()) continue;
      const int x = kLeft + static_cast<int>(n > 1 ? (kRight - kLeft) * i / (n - 1) : 0);
      const int y = kBottom - static_cast<int>(std::lround((it->get<double>() - lo) / span * (kBottom - kTop)));
      if (px >= 0) canvas.line(px, py, x, y, color);
      px = x;
      py = y;
    }
    const int lx = kLeft + static_cast<int>(k) * 100;
    canvas.fill_rect(lx, kH - 24, lx + 10, kH - 14, color);
    canvas.text(lx + 14, kH - 24, keys[k], kBlack);
  }
  return canvas.image();
}

void write_loss_plot(const std::vector<nlohmann::json>& records, const std::vector<std::string>& keys,
                     const std::filesystem::path& path) {
  write_png(path, render_loss_plot(records, keys));
}

}  // namespace cudanet
