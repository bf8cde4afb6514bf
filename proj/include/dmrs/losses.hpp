#pragma once

// Segmentation loss terms. Each returns its value and the gradient with
// respect to its direct input (logits for cross-entropy, probabilities for
// MSE and soft IoU); total_loss chains everything back to the logits.

#include "dmrs/tensor.hpp"

namespace dmrs {

struct LossTerms {
  double ce = 0.0;
  double mse = 0.0;
  double iou = 0.0;
  double total = 0.0;
};

template <typename T>
struct LossValue {
  double value = 0.0;
  Tensor<T> grad;
};

template <typename T>
struct TotalLoss {
  LossTerms terms;
  Tensor<T> grad;  // d total / d logits
};

/// Throws ValidationError unless every voxel's channel vector lies in [0,1]
/// and sums to 1.
template <typename T>
void validate_onehot(const Tensor<T>& onehot);

/// Mean over voxels of -sum_c y_c log softmax(z)_c; gradient (p - y) / voxels.
template <typename T>
LossValue<T> cross_entropy_loss(const Tensor<T>& logits, const Tensor<T>& onehot);

/// Mean over all entries of (p - y)^2.
template <typename T>
LossValue<T> mse_loss(const Tensor<T>& probs, const Tensor<T>& onehot);

/// 1 - mean_c (I_c + eps) / (U_c + eps) with I_c = sum p*y and
/// U_c = sum (p + y - p*y), sums taken over the whole batch.
template <typename T>
LossValue<T> soft_iou_loss(const Tensor<T>& probs, const Tensor<T>& onehot, double eps = 1e-6);

/// Unit-weighted sum of the three terms.
template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& logits, const Tensor<T>& onehot);

}  // namespace dmrs
