#include "scalpel/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace scalpel {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

double uniform(std::mt19937_64& rng, const std::array<double, 2>& range) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return range[0] + u * (range[1] - range[0]);
}

std::vector<float> luma(const Image& img) {
  const size_t plane = static_cast<size_t>(img.height) * img.width;
  std::vector<float> y(plane);
  for (size_t i = 0; i < plane; ++i)
    y[i] = static_cast<float>(kLumaR * img.data[i] + kLumaG * img.data[plane + i] +
                              kLumaB * img.data[2 * plane + i]);
  return y;
}

}  // namespace

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.blur_sigma = {0, 0};
  c.noise_std = {0, 0};
  c.brightness = c.contrast = c.saturation = {1, 1};
  c.pixel_dropout_prob = 0;
  c.flip_prob = 0;
  return c;
}

void AugmentConfig::validate() const {
  auto range = [](const char* name, const std::array<double, 2>& r) {
    if (!(r[0] >= 0 && r[1] >= r[0]))
      throw std::invalid_argument(std::string("augment.") + name + ": need 0 <= lo <= hi");
  };
  range("blur_sigma", blur_sigma);
  range("noise_std", noise_std);
  range("brightness", brightness);
  range("contrast", contrast);
  range("saturation", saturation);
  if (!(pixel_dropout_prob >= 0 && pixel_dropout_prob <= 1))
    throw std::invalid_argument("augment.pixel_dropout_prob must lie in [0, 1]");
  if (!(flip_prob >= 0 && flip_prob <= 1))
    throw std::invalid_argument("augment.flip_prob must lie in [0, 1]");
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 1e-3) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;

  const int h = img.height, w = img.width;
  Image tmp = img, out = img;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * img.at(c, y, std::clamp(x + i, 0, w - 1));
        tmp.at(c, y, x) = static_cast<float>(s);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        out.at(c, y, x) = clamp01(s);
      }
  }
  return out;
}

Image scale_brightness(const Image& img, double factor) {
  if (factor == 1.0) return img;
  Image out = img;
  for (float& v : out.data) v = clamp01(v * factor);
  return out;
}

Image scale_contrast(const Image& img, double factor) {
  if (factor == 1.0) return img;
  const auto y = luma(img);
  double mean = 0;
  for (float v : y) mean += v;
  mean /= std::max<size_t>(y.size(), 1);
  Image out = img;
  for (float& v : out.data) v = clamp01(mean + factor * (v - mean));
  return out;
}

Image scale_saturation(const Image& img, double factor) {
  if (factor == 1.0) return img;
  const auto y = luma(img);
  const size_t plane = y.size();
  Image out = img;
  for (size_t c = 0; c < 3; ++c)
    for (size_t i = 0; i < plane; ++i) {
      float& v = out.data[c * plane + i];
      v = clamp01(y[i] + factor * (v - y[i]));
    }
  return out;
}

InstanceAnnotation flip_annotation(const InstanceAnnotation& ann, int width) {
  InstanceAnnotation out = ann;
  const double w = width;
  for (Polygon& poly : out.segmentation)
    for (Point& p : poly) p.x = w - p.x;
  out.bbox[0] = w - ann.bbox[0] - ann.bbox[2];
  return out;
}

Sample flip_horizontal(const Sample& sample) {
  Sample out = sample;
  const int h = sample.image.height, w = sample.image.width;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.image.at(c, y, w - 1 - x) = sample.image.at(c, y, x);
  for (InstanceAnnotation& a : out.instances) a = flip_annotation(a, w);
  return out;
}

Sample augment_sample(const Sample& sample, const AugmentConfig& config, std::mt19937_64& rng) {
  const double brightness = uniform(rng, config.brightness);
  const double contrast = uniform(rng, config.contrast);
  const double saturation = uniform(rng, config.saturation);
  const double sigma = uniform(rng, config.blur_sigma);
  const double noise = uniform(rng, config.noise_std);
  const double dropout = uniform(rng, {0.0, config.pixel_dropout_prob});
  const bool flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.flip_prob;
  // Per-pixel streams are derived so that their length does not shift the caller's rng.
  const uint64_t pixel_seed = rng();

  Sample out = sample;
  Image img = scale_brightness(sample.image, brightness);
  img = scale_contrast(img, contrast);
  img = scale_saturation(img, saturation);
  img = gaussian_blur(img, sigma);
  std::mt19937_64 prng(pixel_seed);
  if (noise > 0) {
    std::normal_distribution<double> n(0.0, noise);
    for (float& v : img.data) v = clamp01(v + n(prng));
  }
  if (dropout > 0) {
    std::bernoulli_distribution drop(dropout);
    const size_t plane = static_cast<size_t>(img.height) * img.width;
    for (size_t i = 0; i < plane; ++i)
      if (drop(prng))
        for (size_t c = 0; c < 3; ++c) img.data[c * plane + i] = 0.0f;
  }
  out.image = std::move(img);
  return flip ? flip_horizontal(out) : out;
}

}  // namespace scalpel
