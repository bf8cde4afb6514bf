#pragma once

// Volume <-> 2D slice conversion, padding to a spatial divisor, and one-hot
// encoding of label slices.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmrs/nifti.hpp"
#include "dmrs/tensor.hpp"

namespace dmrs {

/// Zero padding applied to an (H,W) plane: `before` rows/cols go on the
/// top/left. The odd remainder goes after, so 61 -> 64 pads (1, 2).
struct PadRecord {
  std::int64_t height = 0, width = 0;  // unpadded
  std::int64_t top = 0, bottom = 0, left = 0, right = 0;

  std::int64_t padded_height() const { return height + top + bottom; }
  std::int64_t padded_width() const { return width + left + right; }
  friend bool operator==(const PadRecord&, const PadRecord&) = default;
};

PadRecord make_pad(std::int64_t height, std::int64_t width, std::int64_t divisor);

/// Pads the last two axes of `t` with zeros.
template <typename T>
Tensor<T> pad_planes(const Tensor<T>& t, const PadRecord& pad);
/// Crops the last two axes back to the unpadded extent.
template <typename T>
Tensor<T> unpad_planes(const Tensor<T>& t, const PadRecord& pad);

/// How one subject's volume was cut into slices.
struct SliceGeometry {
  std::array<std::int64_t, 3> volume_dims{1, 1, 1};
  std::array<double, 3> spacing{1, 1, 1};
  std::size_t source_rank = 3;
  int axis = 2;        // slicing axis
  int height_axis = 1;  // volume axis mapped to slice rows
  int width_axis = 0;   // volume axis mapped to slice columns
  PadRecord pad;
  Orientation orientation;
};

struct Slice {
  TensorF image;   // [C,H,W], per-channel min-max normalised, zero padded
  LabelMap label;  // [H,W]; empty tensor when no labels were given
  std::string subject;
  std::int64_t index = 0;  // position along the slicing axis
};

struct SliceDataset {
  std::vector<Slice> slices;
  std::map<std::string, SliceGeometry> geometry;  // per subject

  bool empty() const { return slices.empty(); }
  std::size_t size() const { return slices.size(); }
  std::int64_t channels() const;
  std::int64_t height() const;
  std::int64_t width() const;
  bool has_labels() const;

  /// Appends another subject's slices; all slices must share (C,H,W).
  void append(SliceDataset other);
};

/// Default slicing axis: the one with the coarsest spacing, ties broken
/// towards the highest axis index. 2D volumes always use the missing third
/// axis.
int default_slice_axis(const Volume& volume);

/// Slices aligned modality volumes (stacked as channels) and an optional
/// label volume along `axis` (default_slice_axis when unset), then pads
/// every plane to a multiple of `divisor`. Labels must be non-negative
/// integers.
SliceDataset extract_slices(const std::vector<Volume>& modalities, const Volume* labels,
                            std::optional<int> axis, std::int64_t divisor,
                            const std::string& subject = "");

/// Inverse of extract_slices for label predictions: `slices[i]` is the
/// padded prediction for slice index i.
Volume reassemble_labels(const std::vector<LabelMap>& slices, const SliceGeometry& geometry);

/// Min-max normalise each channel of a [C,H,W] tensor to [0, 1]; constant
/// channels become 0.
void normalize_channels(TensorF& image);

/// [H,W] labels -> [C,H,W] indicator planes.
template <typename T>
Tensor<T> one_hot(const LabelMap& labels, std::int64_t num_classes);

/// Stacks per-slice one-hot planes into [N,C,H,W].
template <typename T>
Tensor<T> one_hot_batch(const std::vector<const LabelMap*>& labels, std::int64_t num_classes);

/// Channel argmax of [N,C,H,W] scores (first maximum wins).
template <typename T>
std::vector<LabelMap> argmax_channels(const Tensor<T>& scores);

}  // namespace dmrs
