#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "dmrs/tensor.hpp"

namespace dmrs {

struct AugmentConfig {
  double flip_prob = 0.5;
  double max_translate_frac = 0.10;  // of each spatial dim
  double max_rotate_deg = 15.0;
  double brightness_delta = 0.10;    // fraction of the image intensity range
  double contrast_min = 0.9;
  double contrast_max = 1.1;
  std::uint64_t seed = 0;

  /// Configuration under which augment_pair is the identity.
  static AugmentConfig identity();
  void validate() const;
};

/// One concrete draw of every random quantity, in application order.
struct AugmentDraw {
  bool flip = false;        // left/right
  double shift_x = 0.0;     // columns, positive moves content right
  double shift_y = 0.0;     // rows, positive moves content down
  double angle_deg = 0.0;   // about the image centre
  double brightness = 0.0;  // additive, absolute intensity units
  double contrast = 1.0;    // multiplicative about the per-channel mean
};

enum class Interp { Bilinear, Nearest };

AugmentDraw draw_augmentation(const AugmentConfig& config, std::int64_t height, std::int64_t width,
                              double intensity_range, std::mt19937_64& rng);

/// Geometric part of a draw (flip, translate, rotate) applied to every
/// channel of a [C,H,W] image; out-of-bounds samples are 0.
template <typename T>
Tensor<T> warp_image(const Tensor<T>& image, const AugmentDraw& draw, Interp interp);

/// Same geometry on a label map with nearest-neighbour sampling and
/// background (0) fill.
LabelMap warp_labels(const LabelMap& labels, const AugmentDraw& draw);

/// Full draw application: geometry on both, intensity on the image only.
template <typename T>
std::pair<Tensor<T>, LabelMap> apply_augmentation(const Tensor<T>& image, const LabelMap& labels,
                                                  const AugmentDraw& draw);

/// Flip, then translate, then rotate, then brightness/contrast.
template <typename T>
std::pair<Tensor<T>, LabelMap> augment_pair(const Tensor<T>& image, const LabelMap& labels,
                                            const AugmentConfig& config, std::mt19937_64& rng);

}  // namespace dmrs
