#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace scalpel {

/// RGB image, planar CHW, values normalized to [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<size_t>(3) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t plane() const { return static_cast<size_t>(height) * width; }

  bool operator==(const Image&) const = default;
};

/// Rounds every value to the nearest 1/255 step, as a PPM round trip would.
void quantize_8bit(Image& image);

/// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& file, const Image& image);
Image read_ppm(const std::filesystem::path& file);

}  // namespace scalpel
