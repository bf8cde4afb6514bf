#include "dmrs/slices.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmrs {

PadRecord make_pad(std::int64_t height, std::int64_t width, std::int64_t divisor) {
  if (divisor < 1) throw ConfigError("pad divisor must be positive");
  if (height < 1 || width < 1) throw ValidationError("cannot pad an empty plane");
  auto split = [divisor](std::int64_t n, std::int64_t& before, std::int64_t& after) {
    const std::int64_t total = (divisor - n % divisor) % divisor;
    before = total / 2;
    after = total - before;
  };
  PadRecord p;
  p.height = height;
  p.width = width;
  split(height, p.top, p.bottom);
  split(width, p.left, p.right);
  return p;
}

template <typename T>
Tensor<T> pad_planes(const Tensor<T>& t, const PadRecord& pad) {
  const auto r = t.rank();
  if (r < 2 || t.dim(r - 2) != pad.height || t.dim(r - 1) != pad.width) {
    throw ConfigError("pad record for " + std::to_string(pad.height) + "x" + std::to_string(pad.width) +
                      " does not match tensor " + shape_str(t.shape()));
  }
  Shape shape = t.shape();
  shape[r - 2] = pad.padded_height();
  shape[r - 1] = pad.padded_width();
  Tensor<T> out(shape);
  const auto planes = t.numel() / (pad.height * pad.width);
  const auto ph = pad.padded_height(), pw = pad.padded_width();
  auto o = out.mutable_data();
  const auto in = t.data();
  for (std::int64_t k = 0; k < planes; ++k)
    for (std::int64_t h = 0; h < pad.height; ++h)
      std::copy_n(in.begin() + (k * pad.height + h) * pad.width, pad.width,
                  o.begin() + (k * ph + h + pad.top) * pw + pad.left);
  return out;
}

template <typename T>
Tensor<T> unpad_planes(const Tensor<T>& t, const PadRecord& pad) {
  const auto r = t.rank();
  if (r < 2 || t.dim(r - 2) != pad.padded_height() || t.dim(r - 1) != pad.padded_width()) {
    throw ConfigError("pad record for padded " + std::to_string(pad.padded_height()) + "x" +
                      std::to_string(pad.padded_width()) + " does not match tensor " + shape_str(t.shape()));
  }
  Shape shape = t.shape();
  shape[r - 2] = pad.height;
  shape[r - 1] = pad.width;
  Tensor<T> out(shape);
  const auto ph = pad.padded_height(), pw = pad.padded_width();
  const auto planes = t.numel() / (ph * pw);
  auto o = out.mutable_data();
  const auto in = t.data();
  for (std::int64_t k = 0; k < planes; ++k)
    for (std::int64_t h = 0; h < pad.height; ++h)
      std::copy_n(in.begin() + (k * ph + h + pad.top) * pw + pad.left, pad.width,
                  o.begin() + (k * pad.height + h) * pad.width);
  return out;
}

std::int64_t SliceDataset::channels() const { return slices.empty() ? 0 : slices.front().image.dim(0); }
std::int64_t SliceDataset::height() const { return slices.empty() ? 0 : slices.front().image.dim(1); }
std::int64_t SliceDataset::width() const { return slices.empty() ? 0 : slices.front().image.dim(2); }
bool SliceDataset::has_labels() const {
  return !slices.empty() && std::all_of(slices.begin(), slices.end(), [](const Slice& s) { return !s.label.empty(); });
}

void SliceDataset::append(SliceDataset other) {
  if (!slices.empty() && !other.slices.empty() &&
      (other.channels() != channels() || other.height() != height() || other.width() != width())) {
    throw ValidationError("cannot mix slices of shape [" + std::to_string(other.channels()) + "," +
                          std::to_string(other.height()) + "," + std::to_string(other.width()) +
                          "] into a dataset of [" + std::to_string(channels()) + "," +
                          std::to_string(height()) + "," + std::to_string(width()) + "]");
  }
  for (auto& [name, g] : other.geometry) {
    if (!geometry.emplace(name, g).second) throw ValidationError("subject '" + name + "' added twice");
  }
  for (auto& s : other.slices) slices.push_back(std::move(s));
}

int default_slice_axis(const Volume& volume) {
  volume.validate();
  if (volume.dims.size() == 2) return 2;
  int best = 0;
  for (int a = 1; a < 3; ++a)
    if (volume.spacing[a] >= volume.spacing[best]) best = a;
  return best;
}

void normalize_channels(TensorF& image) {
  if (image.rank() != 3) throw ConfigError("normalize_channels expects [C,H,W]");
  const auto c = image.dim(0), hw = image.dim(1) * image.dim(2);
  auto d = image.mutable_data();
  for (std::int64_t k = 0; k < c; ++k) {
    auto plane = d.subspan(static_cast<std::size_t>(k * hw), static_cast<std::size_t>(hw));
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const double mn = *lo, range = static_cast<double>(*hi) - mn;
    for (auto& v : plane) v = range > 0.0 ? static_cast<float>((v - mn) / range) : 0.0f;
  }
}

SliceDataset extract_slices(const std::vector<Volume>& modalities, const Volume* labels,
                            std::optional<int> axis, std::int64_t divisor, const std::string& subject) {
  if (modalities.empty()) throw ValidationError("extract_slices needs at least one modality");
  const Volume& ref = modalities.front();
  ref.validate();
  for (std::size_t m = 1; m < modalities.size(); ++m) {
    modalities[m].validate();
    if (modalities[m].dims != ref.dims) {
      throw ValidationError("modality " + std::to_string(m) + " dims do not match modality 0");
    }
  }
  if (labels) {
    labels->validate();
    if (labels->dims != ref.dims) throw ValidationError("label volume dims do not match the image dims");
  }
  const int a = axis.value_or(default_slice_axis(ref));
  if (a < 0 || a > 2 || (ref.dims.size() == 2 && a != 2)) {
    throw ConfigError("slice axis " + std::to_string(a) + " is invalid for a " +
                      std::to_string(ref.dims.size()) + "D volume");
  }

  SliceGeometry g;
  g.volume_dims = ref.dims3();
  g.spacing = ref.spacing3();
  g.source_rank = ref.dims.size();
  g.axis = a;
  g.width_axis = a == 0 ? 1 : 0;
  g.height_axis = a == 2 ? 1 : 2;
  g.orientation = ref.orientation;
  const auto h = g.volume_dims[g.height_axis], w = g.volume_dims[g.width_axis];
  g.pad = make_pad(h, w, divisor);

  const auto channels = static_cast<std::int64_t>(modalities.size());
  SliceDataset out;
  const std::string id = subject.empty() ? ref.subject_id : subject;
  out.geometry.emplace(id, g);
  for (std::int64_t s = 0; s < g.volume_dims[a]; ++s) {
    TensorF image({channels, h, w});
    LabelMap label;
    if (labels) label = LabelMap({h, w});
    {
      auto img = image.mutable_data();
      std::span<std::int32_t> lbl;
      if (labels) lbl = label.mutable_data();
      std::array<std::int64_t, 3> c{};
      c[a] = s;
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t col = 0; col < w; ++col) {
          c[g.height_axis] = r;
          c[g.width_axis] = col;
          const auto vi = ref.index(c[0], c[1], c[2]);
          for (std::int64_t m = 0; m < channels; ++m)
            img[(m * h + r) * w + col] = static_cast<float>(modalities[m].data[vi]);
          if (labels) {
            const double v = labels->data[vi];
            if (!(v >= 0.0) || v != std::floor(v) || v > std::numeric_limits<std::int32_t>::max()) {
              throw ValidationError("label volume holds " + std::to_string(v) + " at voxel (" +
                                    std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                                    std::to_string(c[2]) + "); labels must be non-negative integers");
            }
            lbl[r * w + col] = static_cast<std::int32_t>(v);
          }
        }
    }
    normalize_channels(image);
    Slice sl;
    sl.image = pad_planes(image, g.pad);
    if (labels) sl.label = pad_planes(label, g.pad);
    sl.subject = id;
    sl.index = s;
    out.slices.push_back(std::move(sl));
  }
  return out;
}

Volume reassemble_labels(const std::vector<LabelMap>& slices, const SliceGeometry& g) {
  const auto n = g.volume_dims[g.axis];
  if (static_cast<std::int64_t>(slices.size()) != n) {
    throw ValidationError("expected " + std::to_string(n) + " prediction slices, got " +
                          std::to_string(slices.size()));
  }
  std::vector<std::int64_t> dims(g.volume_dims.begin(), g.volume_dims.begin() + g.source_rank);
  std::vector<double> spacing(g.spacing.begin(), g.spacing.begin() + g.source_rank);
  Volume v(dims, spacing);
  v.orientation = g.orientation;
  const auto h = g.pad.height, w = g.pad.width;
  for (std::int64_t s = 0; s < n; ++s) {
    const LabelMap plane = unpad_planes(slices[s], g.pad);
    const auto d = plane.data();
    std::array<std::int64_t, 3> c{};
    c[g.axis] = s;
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t col = 0; col < w; ++col) {
        c[g.height_axis] = r;
        c[g.width_axis] = col;
        v.at(c[0], c[1], c[2]) = d[r * w + col];
      }
  }
  return v;
}

template <typename T>
Tensor<T> one_hot(const LabelMap& labels, std::int64_t num_classes) {
  return one_hot_batch<T>({&labels}, num_classes).reshaped({num_classes, labels.dim(0), labels.dim(1)});
}

template <typename T>
Tensor<T> one_hot_batch(const std::vector<const LabelMap*>& labels, std::int64_t num_classes) {
  if (labels.empty()) throw ConfigError("one_hot_batch needs at least one label map");
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  const auto h = labels.front()->dim(0), w = labels.front()->dim(1);
  const auto n = static_cast<std::int64_t>(labels.size());
  Tensor<T> out({n, num_classes, h, w});
  auto o = out.mutable_data();
  for (std::int64_t b = 0; b < n; ++b) {
    const auto& l = *labels[b];
    if (l.rank() != 2 || l.dim(0) != h || l.dim(1) != w) {
      throw ConfigError("label map " + shape_str(l.shape()) + " does not match [" + std::to_string(h) +
                        "," + std::to_string(w) + "]");
    }
    const auto d = l.data();
    for (std::int64_t p = 0; p < h * w; ++p) {
      const auto v = d[p];
      if (v < 0 || v >= num_classes) {
        throw ValidationError("label " + std::to_string(v) + " at voxel (" + std::to_string(p / w) + "," +
                              std::to_string(p % w) + ") is outside [0, " + std::to_string(num_classes) + ")");
      }
      o[(b * num_classes + v) * h * w + p] = T{1};
    }
  }
  return out;
}

template <typename T>
std::vector<LabelMap> argmax_channels(const Tensor<T>& scores) {
  require_rank4(scores, "argmax_channels input");
  const auto n = scores.dim(0), c = scores.dim(1), h = scores.dim(2), w = scores.dim(3);
  const auto s = scores.data();
  std::vector<LabelMap> out;
  for (std::int64_t b = 0; b < n; ++b) {
    LabelMap l({h, w});
    auto d = l.mutable_data();
    for (std::int64_t p = 0; p < h * w; ++p) {
      std::int32_t best = 0;
      for (std::int64_t k = 1; k < c; ++k)
        if (s[(b * c + k) * h * w + p] > s[(b * c + best) * h * w + p]) best = static_cast<std::int32_t>(k);
      d[p] = best;
    }
    out.push_back(std::move(l));
  }
  return out;
}

template Tensor<float> pad_planes(const Tensor<float>&, const PadRecord&);
template Tensor<double> pad_planes(const Tensor<double>&, const PadRecord&);
template Tensor<std::int32_t> pad_planes(const Tensor<std::int32_t>&, const PadRecord&);
template Tensor<float> unpad_planes(const Tensor<float>&, const PadRecord&);
template Tensor<double> unpad_planes(const Tensor<double>&, const PadRecord&);
template Tensor<std::int32_t> unpad_planes(const Tensor<std::int32_t>&, const PadRecord&);
template Tensor<float> one_hot(const LabelMap&, std::int64_t);
template Tensor<double> one_hot(const LabelMap&, std::int64_t);
template Tensor<float> one_hot_batch(const std::vector<const LabelMap*>&, std::int64_t);
template Tensor<double> one_hot_batch(const std::vector<const LabelMap*>&, std::int64_t);
template std::vector<LabelMap> argmax_channels(const Tensor<float>&);
template std::vector<LabelMap> argmax_channels(const Tensor<double>&);

}  // namespace dmrs
