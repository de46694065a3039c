#include "scalpel/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace scalpel {

namespace {

uint8_t to_byte(float v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

void quantize_8bit(Image& image) {
  for (float& v : image.data) v = static_cast<float>(to_byte(v)) / 255.0f;
}

void write_ppm(const std::filesystem::path& file, const Image& image) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write image " + file.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<uint8_t> buf(image.plane() * 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<size_t>(y) * image.width + x) * 3 + c] = to_byte(image.at(c, y, x));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("failed writing image " + file.string());
}

Image read_ppm(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image " + file.string());
  if (header_token(is) != "P6") throw std::runtime_error(file.string() + " is not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(header_token(is));
    h = std::stoi(header_token(is));
    maxval = std::stoi(header_token(is));
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PPM header in " + file.string());
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("unsupported PPM geometry or depth in " + file.string());
  }
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error("truncated PPM payload in " + file.string());
  }
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<float>(buf[(static_cast<size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return img;
}

}  // namespace scalpel
