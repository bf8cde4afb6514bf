#include "dmrs/losses.hpp"

#include <cmath>
#include <vector>

#include "dmrs/autodiff.hpp"

namespace dmrs {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(what) + ": prediction " + shape_str(a.shape()) +
                          " and labels " + shape_str(b.shape()) + " differ in shape");
  }
}

}  // namespace

template <typename T>
void validate_onehot(const Tensor<T>& onehot) {
  require_rank4(onehot, "one-hot labels");
  const auto n = onehot.dim(0), c = onehot.dim(1), hw = onehot.dim(2) * onehot.dim(3);
  const auto y = onehot.data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t p = 0; p < hw; ++p) {
      double sum = 0.0;
      for (std::int64_t k = 0; k < c; ++k) {
        const double v = y[(b * c + k) * hw + p];
        if (!(v >= 0.0 && v <= 1.0)) {
          throw ValidationError("one-hot labels hold " + std::to_string(v) + " at batch " +
                                std::to_string(b) + ", voxel " + std::to_string(p));
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        throw ValidationError("one-hot labels do not sum to 1 at batch " + std::to_string(b) +
                              ", voxel " + std::to_string(p) + " (sum " + std::to_string(sum) + ")");
      }
    }
}

template <typename T>
LossValue<T> cross_entropy_loss(const Tensor<T>& logits, const Tensor<T>& onehot) {
  require_same_shape(logits, onehot, "cross_entropy_loss");
  validate_onehot(onehot);
  const auto n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const double voxels = static_cast<double>(n * hw);
  LossValue<T> out{0.0, Tensor<T>(logits.shape())};
  auto g = out.grad.mutable_data();
  const auto z = logits.data();
  const auto y = onehot.data();
  std::vector<double> logp(static_cast<std::size_t>(c));
  double total = 0.0;
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t p = 0; p < hw; ++p) {
      const std::int64_t base = b * c * hw + p;
      double mx = z[base];
      for (std::int64_t k = 1; k < c; ++k) mx = std::max(mx, static_cast<double>(z[base + k * hw]));
      double sum = 0.0;
      for (std::int64_t k = 0; k < c; ++k) sum += std::exp(z[base + k * hw] - mx);
      const double lse = mx + std::log(sum);
      double voxel = 0.0;
      for (std::int64_t k = 0; k < c; ++k) {
        const auto i = base + k * hw;
        logp[k] = z[i] - lse;
        voxel -= y[i] * logp[k];
        g[i] = static_cast<T>((std::exp(logp[k]) - y[i]) / voxels);
      }
      total += voxel;
    }
  out.value = total / voxels;
  return out;
}

template <typename T>
LossValue<T> mse_loss(const Tensor<T>& probs, const Tensor<T>& onehot) {
  require_same_shape(probs, onehot, "mse_loss");
  const double count = static_cast<double>(probs.numel());
  LossValue<T> out{0.0, Tensor<T>(probs.shape())};
  auto g = out.grad.mutable_data();
  const auto p = probs.data();
  const auto y = onehot.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - y[i];
    sum += d * d;
    g[i] = static_cast<T>(2.0 * d / count);
  }
  out.value = sum / count;
  return out;
}

template <typename T>
LossValue<T> soft_iou_loss(const Tensor<T>& probs, const Tensor<T>& onehot, double eps) {
  require_same_shape(probs, onehot, "soft_iou_loss");
  require_rank4(probs, "soft_iou_loss probabilities");
  const auto n = probs.dim(0), c = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
  const auto p = probs.data();
  const auto y = onehot.data();
  std::vector<double> inter(c, 0.0), uni(c, 0.0);
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t k = 0; k < c; ++k)
      for (std::int64_t q = 0; q < hw; ++q) {
        const auto i = (b * c + k) * hw + q;
        const double pv = p[i], yv = y[i];
        inter[k] += pv * yv;
        uni[k] += pv + yv - pv * yv;
      }
  double ratio_sum = 0.0;
  for (std::int64_t k = 0; k < c; ++k) ratio_sum += (inter[k] + eps) / (uni[k] + eps);
  LossValue<T> out{1.0 - ratio_sum / static_cast<double>(c), Tensor<T>(probs.shape())};
  auto g = out.grad.mutable_data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t k = 0; k < c; ++k) {
      const double ie = inter[k] + eps, ue = uni[k] + eps;
      for (std::int64_t q = 0; q < hw; ++q) {
        const auto i = (b * c + k) * hw + q;
        const double yv = y[i];
        // d/dp of I/U: (y*U - I*(1 - y)) / U^2
        const double dratio = (yv * ue - ie * (1.0 - yv)) / (ue * ue);
        g[i] = static_cast<T>(-dratio / static_cast<double>(c));
      }
    }
  return out;
}

template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& logits, const Tensor<T>& onehot) {
  LossValue<T> ce = cross_entropy_loss(logits, onehot);
  const Tensor<T> probs = softmax_channel_forward(logits);
  LossValue<T> mse = mse_loss(probs, onehot);
  LossValue<T> iou = soft_iou_loss(probs, onehot);

  Tensor<T> dprobs(probs.shape());
  {
    auto d = dprobs.mutable_data();
    const auto a = mse.grad.data(), b = iou.grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] + b[i];
  }
  Tensor<T> grad = softmax_channel_backward(probs, dprobs);
  {
    auto d = grad.mutable_data();
    const auto a = ce.grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += a[i];
  }
  TotalLoss<T> out;
  out.terms.ce = ce.value;
  out.terms.mse = mse.value;
  out.terms.iou = iou.value;
  out.terms.total = ce.value + mse.value + iou.value;
  out.grad = std::move(grad);
  return out;
}

#define DMRS_INSTANTIATE(T)                                                           \
  template void validate_onehot(const Tensor<T>&);                                    \
  template LossValue<T> cross_entropy_loss(const Tensor<T>&, const Tensor<T>&);       \
  template LossValue<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                 \
  template LossValue<T> soft_iou_loss(const Tensor<T>&, const Tensor<T>&, double);    \
  template TotalLoss<T> total_loss(const Tensor<T>&, const Tensor<T>&);

DMRS_INSTANTIATE(float)
DMRS_INSTANTIATE(double)
#undef DMRS_INSTANTIATE

}  // namespace dmrs
