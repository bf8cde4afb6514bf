#include "dmrs/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dmrs {

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.flip_prob = 0.0;
  c.max_translate_frac = 0.0;
  c.max_rotate_deg = 0.0;
  c.brightness_delta = 0.0;
  c.contrast_min = 1.0;
  c.contrast_max = 1.0;
  return c;
}

void AugmentConfig::validate() const {
  if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("flip_prob must be in [0, 1]");
  if (max_translate_frac < 0.0 || max_translate_frac >= 1.0)
    throw ConfigError("max_translate_frac must be in [0, 1)");
  if (max_rotate_deg < 0.0) throw ConfigError("max_rotate_deg must be non-negative");
  if (brightness_delta < 0.0) throw ConfigError("brightness_delta must be non-negative");
  if (contrast_min <= 0.0 || contrast_min > 1.0 || contrast_max < 1.0)
    throw ConfigError("contrast range must contain 1 and stay positive");
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool is_identity_geometry(const AugmentDraw& d) {
  return !d.flip && d.shift_x == 0.0 && d.shift_y == 0.0 && d.angle_deg == 0.0;
}

// Maps an output pixel back to its source location: undo rotation about the
// centre, then undo translation. Flip is applied separately as an exact
// index reversal.
struct InverseMap {
  double cy, cx, cos_a, sin_a, ty, tx;
  bool rotate;

  InverseMap(std::int64_t h, std::int64_t w, const AugmentDraw& d)
      : cy((static_cast<double>(h) - 1.0) / 2.0),
        cx((static_cast<double>(w) - 1.0) / 2.0),
        cos_a(std::cos(d.angle_deg * std::numbers::pi / 180.0)),
        sin_a(std::sin(d.angle_deg * std::numbers::pi / 180.0)),
        ty(d.shift_y),
        tx(d.shift_x),
        rotate(d.angle_deg != 0.0) {}

  void operator()(std::int64_t r, std::int64_t c, double& sy, double& sx) const {
    double y = static_cast<double>(r), x = static_cast<double>(c);
    if (rotate) {
      const double dy = y - cy, dx = x - cx;
      y = cos_a * dy - sin_a * dx + cy;
      x = sin_a * dy + cos_a * dx + cx;
    }
    sy = y - ty;
    sx = x - tx;
  }
};

template <typename T>
Tensor<T> flip_lr(const Tensor<T>& t) {
  const auto w = t.dim(t.rank() - 1);
  const auto rows = t.numel() / std::max<std::int64_t>(w, 1);
  Tensor<T> out(t.shape());
  auto o = out.mutable_data();
  const auto in = t.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < w; ++c) o[r * w + c] = in[r * w + (w - 1 - c)];
  return out;
}

template <typename T>
void warp_plane(const T* src, T* dst, std::int64_t h, std::int64_t w, const InverseMap& map,
                Interp interp) {
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      double sy, sx;
      map(r, c, sy, sx);
      if (interp == Interp::Nearest) {
        const auto y = static_cast<std::int64_t>(std::lround(sy));
        const auto x = static_cast<std::int64_t>(std::lround(sx));
        dst[r * w + c] = (y >= 0 && y < h && x >= 0 && x < w) ? src[y * w + x] : T{0};
        continue;
      }
      const double fy0 = std::floor(sy), fx0 = std::floor(sx);
      const double fy = sy - fy0, fx = sx - fx0;
      const auto y0 = static_cast<std::int64_t>(fy0), x0 = static_cast<std::int64_t>(fx0);
      auto at = [&](std::int64_t y, std::int64_t x) -> double {
        return (y >= 0 && y < h && x >= 0 && x < w) ? static_cast<double>(src[y * w + x]) : 0.0;
      };
      double v = (1.0 - fy) * (1.0 - fx) * at(y0, x0);
      if (fx != 0.0) v += (1.0 - fy) * fx * at(y0, x0 + 1);
      if (fy != 0.0) v += fy * (1.0 - fx) * at(y0 + 1, x0);
      if (fy != 0.0 && fx != 0.0) v += fy * fx * at(y0 + 1, x0 + 1);
      dst[r * w + c] = static_cast<T>(v);
    }
}

}  // namespace

AugmentDraw draw_augmentation(const AugmentConfig& config, std::int64_t height, std::int64_t width,
                              double intensity_range, std::mt19937_64& rng) {
  config.validate();
  AugmentDraw d;
  // Every quantity is drawn unconditionally so the stream position does not
  // depend on earlier outcomes.
  d.flip = uniform(rng, 0.0, 1.0) < config.flip_prob;
  const double ty = config.max_translate_frac * static_cast<double>(height);
  const double tx = config.max_translate_frac * static_cast<double>(width);
  d.shift_x = uniform(rng, -tx, tx);
  d.shift_y = uniform(rng, -ty, ty);
  d.angle_deg = uniform(rng, -config.max_rotate_deg, config.max_rotate_deg);
  const double b = config.brightness_delta * intensity_range;
  d.brightness = uniform(rng, -b, b);
  d.contrast = uniform(rng, config.contrast_min, config.contrast_max);
  return d;
}

template <typename T>
Tensor<T> warp_image(const Tensor<T>& image, const AugmentDraw& draw, Interp interp) {
  if (image.rank() != 3) throw ConfigError("augmentation expects a [C,H,W] image, got " + shape_str(image.shape()));
  Tensor<T> src = draw.flip ? flip_lr(image) : image;
  if (draw.shift_x == 0.0 && draw.shift_y == 0.0 && draw.angle_deg == 0.0) return src;
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const InverseMap map(h, w, draw);
  Tensor<T> out(image.shape());
  T* o = out.mutable_data().data();
  const T* s = src.data().data();
  for (std::int64_t k = 0; k < c; ++k) warp_plane(s + k * h * w, o + k * h * w, h, w, map, interp);
  return out;
}

LabelMap warp_labels(const LabelMap& labels, const AugmentDraw& draw) {
  if (labels.rank() != 2) throw ConfigError("augmentation expects an [H,W] label map, got " + shape_str(labels.shape()));
  const auto h = labels.dim(0), w = labels.dim(1);
  return warp_image(labels.reshaped({1, h, w}), draw, Interp::Nearest).reshaped({h, w});
}

template <typename T>
std::pair<Tensor<T>, LabelMap> apply_augmentation(const Tensor<T>& image, const LabelMap& labels,
                                                  const AugmentDraw& draw) {
  if (image.rank() != 3 || labels.rank() != 2 || image.dim(1) != labels.dim(0) ||
      image.dim(2) != labels.dim(1)) {
    throw ConfigError("image " + shape_str(image.shape()) + " and labels " +
                      shape_str(labels.shape()) + " are not aligned");
  }
  Tensor<T> img = is_identity_geometry(draw) ? image : warp_image(image, draw, Interp::Bilinear);
  LabelMap lbl = is_identity_geometry(draw) ? labels : warp_labels(labels, draw);
  if (draw.brightness != 0.0 || draw.contrast != 1.0) {
    const auto c = img.dim(0), hw = img.dim(1) * img.dim(2);
    auto d = img.mutable_data();
    for (std::int64_t k = 0; k < c; ++k) {
      double mean = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) mean += d[k * hw + i];
      mean /= static_cast<double>(hw);
      for (std::int64_t i = 0; i < hw; ++i) {
        auto& v = d[k * hw + i];
        v = static_cast<T>((v - mean) * draw.contrast + mean + draw.brightness);
      }
    }
  }
  return {std::move(img), std::move(lbl)};
}

template <typename T>
std::pair<Tensor<T>, LabelMap> augment_pair(const Tensor<T>& image, const LabelMap& labels,
                                            const AugmentConfig& config, std::mt19937_64& rng) {
  const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
  const double range = image.numel() ? static_cast<double>(*hi) - static_cast<double>(*lo) : 0.0;
  const AugmentDraw draw = draw_augmentation(config, image.dim(1), image.dim(2), range, rng);
  return apply_augmentation(image, labels, draw);
}

template Tensor<float> warp_image(const Tensor<float>&, const AugmentDraw&, Interp);
template Tensor<double> warp_image(const Tensor<double>&, const AugmentDraw&, Interp);
template Tensor<std::int32_t> warp_image(const Tensor<std::int32_t>&, const AugmentDraw&, Interp);
template std::pair<Tensor<float>, LabelMap> apply_augmentation(const Tensor<float>&, const LabelMap&,
                                                               const AugmentDraw&);
template std::pair<Tensor<double>, LabelMap> apply_augmentation(const Tensor<double>&,
                                                                const LabelMap&, const AugmentDraw&);
template std::pair<Tensor<float>, LabelMap> augment_pair(const Tensor<float>&, const LabelMap&,
                                                         const AugmentConfig&, std::mt19937_64&);
template std::pair<Tensor<double>, LabelMap> augment_pair(const Tensor<double>&, const LabelMap&,
                                                          const AugmentConfig&, std::mt19937_64&);

}  // namespace dmrs
