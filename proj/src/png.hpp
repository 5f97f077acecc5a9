#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sfdiff::detail {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // RGB, row-major

  RgbImage(int w, int h, std::uint8_t fill = 255) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    auto* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

// 8-bit RGB PNG with optional tEXt chunks; deterministic for identical input.
std::string encode_png(const RgbImage& image, const std::vector<std::pair<std::string, std::string>>& text = {});

// 5x7 bitmap text for digits, '.', '-', '+', 'e' and space.
void draw_text(RgbImage& image, int x, int y, const std::string& text, std::uint8_t shade = 0);

}  // namespace sfdiff::detail
