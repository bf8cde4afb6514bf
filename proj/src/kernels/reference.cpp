// Serial reference kernels: each output element is computed straight from its
// defining sum. Kept for cross-checking the parallel kernels and for
// benchmarking; not used on the hot path.

#include <cmath>

#include "dmrs/kernels/kernels.hpp"

namespace dmrs::kernels::reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias, int stride, int pad) {
  const auto g = conv2d_geometry(input.shape(), kernel.shape(), bias.shape(), stride, pad);
  Tensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
  auto o = out.mutable_data();
  const auto x = input.data();
  const auto w = kernel.data();
  std::size_t idx = 0;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t oy = 0; oy < g.out_h; ++oy)
        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
          double acc = bias[co];
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t iy = oy * g.stride - g.pad + ky;
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += static_cast<double>(
                           w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx]) *
                       x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
          o[idx++] = static_cast<T>(acc);
        }
  return out;
}

// Gather form: every input position collects the output positions whose
// receptive field covers it.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                                const Shape& input_shape, int stride, int pad) {
  const auto g = conv2d_geometry(input_shape, kernel.shape(), Shape{kernel.dim(0)}, stride, pad);
  if (grad_out.shape() != Shape{g.batch, g.out_channels, g.out_h, g.out_w}) {
    throw ConfigError("conv2d upstream gradient shape " + shape_str(grad_out.shape()) +
                      " does not match output geometry");
  }
  Tensor<T> gin(input_shape);
  auto gi = gin.mutable_data();
  const auto go = grad_out.data();
  const auto w = kernel.data();
  std::size_t idx = 0;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
      for (std::int64_t iy = 0; iy < g.in_h; ++iy)
        for (std::int64_t ix = 0; ix < g.in_w; ++ix) {
          double acc = 0.0;
          for (std::int64_t co = 0; co < g.out_channels; ++co)
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t ny = iy + g.pad - ky;
                const std::int64_t nx = ix + g.pad - kx;
                if (ny < 0 || nx < 0 || ny % g.stride || nx % g.stride) continue;
                const std::int64_t oy = ny / g.stride, ox = nx / g.stride;
                if (oy >= g.out_h || ox >= g.out_w) continue;
                acc += static_cast<double>(
                           w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx]) *
                       go[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
              }
          gi[idx++] = static_cast<T>(acc);
        }
  return gin;
}

template <typename T>
ParamGrads<T> conv2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& input,
                                     const Shape& kernel_shape, int stride, int pad) {
  const auto g = conv2d_geometry(input.shape(), kernel_shape, Shape{kernel_shape.at(0)}, stride, pad);
  ParamGrads<T> grads{Tensor<T>(kernel_shape), Tensor<T>(Shape{g.out_channels})};
  auto gw = grads.weight.mutable_data();
  auto gb = grads.bias.mutable_data();
  const auto go = grad_out.data();
  const auto x = input.data();
  for (std::int64_t co = 0; co < g.out_channels; ++co) {
    double bacc = 0.0;
    for (std::int64_t n = 0; n < g.batch; ++n)
      for (std::int64_t oy = 0; oy < g.out_h; ++oy)
        for (std::int64_t ox = 0; ox < g.out_w; ++ox)
          bacc += go[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
    gb[co] = static_cast<T>(bacc);
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
      for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
          double acc = 0.0;
          for (std::int64_t n = 0; n < g.batch; ++n)
            for (std::int64_t oy = 0; oy < g.out_h; ++oy)
              for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                const std::int64_t iy = oy * g.stride - g.pad + ky;
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += static_cast<double>(
                           go[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox]) *
                       x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
          gw[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] =
              static_cast<T>(acc);
        }
  }
  return grads;
}

template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                                   const Tensor<T>& bias, int stride) {
  const auto g = conv_transpose_geometry(input.shape(), kernel.shape(), bias.shape(), stride);
  Tensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
  auto o = out.mutable_data();
  const auto x = input.data();
  const auto w = kernel.data();
  std::size_t idx = 0;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t oy = 0; oy < g.out_h; ++oy)
        for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
          double acc = bias[co];
          const std::int64_t a = oy % g.stride, b = ox % g.stride;
          if (a < g.kernel && b < g.kernel) {
            const std::int64_t iy = oy / g.stride, ix = ox / g.stride;
            for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
              acc += static_cast<double>(
                         x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix]) *
                     w[((ci * g.out_channels + co) * g.kernel + a) * g.kernel + b];
          }
          o[idx++] = static_cast<T>(acc);
        }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                                          const Shape& input_shape, int stride) {
  const auto g = conv_transpose_geometry(input_shape, kernel.shape(), Shape{kernel.dim(1)}, stride);
  Tensor<T> gin(input_shape);
  auto gi = gin.mutable_data();
  const auto go = grad_out.data();
  const auto w = kernel.data();
  std::size_t idx = 0;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
      for (std::int64_t iy = 0; iy < g.in_h; ++iy)
        for (std::int64_t ix = 0; ix < g.in_w; ++ix) {
          double acc = 0.0;
          for (std::int64_t co = 0; co < g.out_channels; ++co)
            for (std::int64_t a = 0; a < g.kernel; ++a)
              for (std::int64_t b = 0; b < g.kernel; ++b) {
                const std::int64_t oy = iy * g.stride + a, ox = ix * g.stride + b;
                acc += static_cast<double>(
                           go[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox]) *
                       w[((ci * g.out_channels + co) * g.kernel + a) * g.kernel + b];
              }
          gi[idx++] = static_cast<T>(acc);
        }
  return gin;
}

template <typename T>
ParamGrads<T> conv_transpose2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& input,
                                               const Shape& kernel_shape, int stride) {
  const auto g = conv_transpose_geometry(input.shape(), kernel_shape, Shape{kernel_shape.at(1)}, stride);
  ParamGrads<T> grads{Tensor<T>(kernel_shape), Tensor<T>(Shape{g.out_channels})};
  auto gw = grads.weight.mutable_data();
  auto gb = grads.bias.mutable_data();
  const auto go = grad_out.data();
  const auto x = input.data();
  for (std::int64_t co = 0; co < g.out_channels; ++co) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < g.batch; ++n)
      for (std::int64_t p = 0; p < g.out_h * g.out_w; ++p)
        acc += go[(n * g.out_channels + co) * g.out_h * g.out_w + p];
    gb[co] = static_cast<T>(acc);
  }
  for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t a = 0; a < g.kernel; ++a)
        for (std::int64_t b = 0; b < g.kernel; ++b) {
          double acc = 0.0;
          for (std::int64_t n = 0; n < g.batch; ++n)
            for (std::int64_t iy = 0; iy < g.in_h; ++iy)
              for (std::int64_t ix = 0; ix < g.in_w; ++ix) {
                const std::int64_t oy = iy * g.stride + a, ox = ix * g.stride + b;
                acc += static_cast<double>(
                           x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix]) *
                       go[((n * g.out_channels + co) * g.out_h + oy) * g.out_w + ox];
              }
          gw[((ci * g.out_channels + co) * g.kernel + a) * g.kernel + b] = static_cast<T>(acc);
        }
  return grads;
}

template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, double eps, BatchNormSaved& saved) {
  const auto c = batchnorm_channels(input.shape(), gamma.shape(), beta.shape());
  const auto n = input.dim(0), hw = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(n * hw);
  saved.mean.assign(c, 0.0);
  saved.var.assign(c, 0.0);
  saved.invstd.assign(c, 0.0);
  const auto x = input.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t p = 0; p < hw; ++p) sum += x[(b * c + ch) * hw + p];
    const double mean = sum / count;
    double sq = 0.0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t p = 0; p < hw; ++p) {
        const double d = x[(b * c + ch) * hw + p] - mean;
        sq += d * d;
      }
    saved.mean[ch] = mean;
    saved.var[ch] = sq / count;
    saved.invstd[ch] = 1.0 / std::sqrt(saved.var[ch] + eps);
  }
  Tensor<T> out(input.shape());
  auto o = out.mutable_data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t p = 0; p < hw; ++p) {
        const auto i = (b * c + ch) * hw + p;
        o[i] = static_cast<T>(gamma[ch] * (x[i] - saved.mean[ch]) * saved.invstd[ch] + beta[ch]);
      }
  return out;
}

template <typename T>
Tensor<T> batchnorm_forward_infer(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, const Tensor<T>& running_mean,
                                  const Tensor<T>& running_var, double eps,
                                  BatchNormSaved& saved) {
  const auto c = batchnorm_channels(input.shape(), gamma.shape(), beta.shape());
  batchnorm_channels(input.shape(), running_mean.shape(), running_var.shape());
  const auto n = input.dim(0), hw = input.dim(2) * input.dim(3);
  saved.mean.assign(c, 0.0);
  saved.var.assign(c, 0.0);
  saved.invstd.assign(c, 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    saved.mean[ch] = running_mean[ch];
    saved.var[ch] = running_var[ch];
    saved.invstd[ch] = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps);
  }
  Tensor<T> out(input.shape());
  auto o = out.mutable_data();
  const auto x = input.data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t p = 0; p < hw; ++p) {
        const auto i = (b * c + ch) * hw + p;
        o[i] = static_cast<T>(gamma[ch] * (x[i] - saved.mean[ch]) * saved.invstd[ch] + beta[ch]);
      }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                                     const Tensor<T>& gamma, const BatchNormSaved& saved,
                                     bool train_mode) {
  const auto c = input.dim(1);
  const auto n = input.dim(0), hw = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(n * hw);
  BatchNormGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(Shape{c}), Tensor<T>(Shape{c})};
  auto gx = grads.input.mutable_data();
  auto gg = grads.gamma.mutable_data();
  auto gbt = grads.beta.mutable_data();
  const auto x = input.data();
  const auto go = grad_out.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double mean = saved.mean[ch], invstd = saved.invstd[ch];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t p = 0; p < hw; ++p) {
        const auto i = (b * c + ch) * hw + p;
        sum_dy += go[i];
        sum_dy_xhat += go[i] * (x[i] - mean) * invstd;
      }
    gg[ch] = static_cast<T>(sum_dy_xhat);
    gbt[ch] = static_cast<T>(sum_dy);
    const double scale = gamma[ch] * invstd;
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t p = 0; p < hw; ++p) {
        const auto i = (b * c + ch) * hw + p;
        if (train_mode) {
          const double xhat = (x[i] - mean) * invstd;
          gx[i] = static_cast<T>(scale * (go[i] - sum_dy / count - xhat * sum_dy_xhat / count));
        } else {
          gx[i] = static_cast<T>(scale * go[i]);
        }
      }
  }
  return grads;
}

#include "instantiate.inc"

}  // namespace dmrs::kernels::reference
