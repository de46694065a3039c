#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "scalpel/coco.hpp"
#include "scalpel/image.hpp"

namespace scalpel {

/// Training-time augmentation. Each transform draws its magnitude uniformly
/// from its range; factors are multiplicative around 1.
struct AugmentConfig {
  std::array<double, 2> blur_sigma{0.0, 1.5};
  std::array<double, 2> noise_std{0.0, 0.05};
  std::array<double, 2> brightness{0.8, 1.2};
  std::array<double, 2> contrast{0.8, 1.2};
  std::array<double, 2> saturation{0.8, 1.2};
  double pixel_dropout_prob = 0.05;  // upper bound; the per-sample rate is drawn in [0, this]
  double flip_prob = 0.5;
  uint64_t seed = 0;

  /// A configuration under which augment_sample is the identity.
  static AugmentConfig identity();
  /// Throws std::invalid_argument naming the field.
  void validate() const;
};

Image gaussian_blur(const Image& img, double sigma);
Image scale_brightness(const Image& img, double factor);
/// Scales deviations from the mean luma.
Image scale_contrast(const Image& img, double factor);
/// Scales deviations of each pixel from its own luma.
Image scale_saturation(const Image& img, double factor);

/// Mirrors polygons and boxes about the vertical axis: x -> width - x.
InstanceAnnotation flip_annotation(const InstanceAnnotation& ann, int width);
Sample flip_horizontal(const Sample& sample);

/// Photometric transforms in a fixed order (brightness, contrast, saturation,
/// blur, noise, dropout), then the optional flip. The same number of values is
/// drawn from `rng` regardless of the config, so streams stay aligned.
Sample augment_sample(const Sample& sample, const AugmentConfig& config, std::mt19937_64& rng);

}  // namespace scalpel
