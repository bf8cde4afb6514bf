// OpenMP kernels. Work is split over whole output planes (or whole parameter
// slices) with static scheduling; inside a plane the loops run over contiguous
// rows so the innermost loop vectorises. Reductions use fixed lane buffers
// rather than OpenMP reduction clauses, keeping the summation order fixed.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "dmrs/kernels/kernels.hpp"

namespace dmrs::kernels::parallel {

namespace {

struct Range {
  std::int64_t lo, hi;
};

// Output indices o in [0, out) whose input index o*stride + offset lies in
// [0, in).
Range valid_range(std::int64_t offset, std::int64_t stride, std::int64_t in,
                  std::int64_t out) {
  std::int64_t lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  const std::int64_t last = in - 1 - offset;
  std::int64_t hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

constexpr int kLanes = 8;

template <typename T>
double lane_sum(const T* p, std::int64_t len) {
  std::array<double, kLanes> acc{};
  std::int64_t i = 0;
  for (; i + kLanes <= len; i += kLanes)
    for (int j = 0; j < kLanes; ++j) acc[j] += p[i + j];
  double tail = 0.0;
  for (; i < len; ++i) tail += p[i];
  double s = 0.0;
  for (double a : acc) s += a;
  return s + tail;
}

template <typename T>
void store_plane(const std::vector<double>& acc, T* dst) {
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias, int stride, int pad) {
  const auto g = conv2d_geometry(input.shape(), kernel.shape(), bias.shape(), stride, pad);
  Tensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
  T* o = out.mutable_data().data();
  const T* x = input.data().data();
  const T* w = kernel.data().data();
  const T* b = bias.data().data();
  const std::int64_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::int64_t ksize = g.kernel_h * g.kernel_w;
  const std::int64_t jobs = g.batch * g.out_channels;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(out_plane));
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < jobs; ++job) {
      const std::int64_t n = job / g.out_channels, co = job % g.out_channels;
      std::fill(acc.begin(), acc.end(), static_cast<double>(b[co]));
      for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
        const T* xp = x + (n * g.in_channels + ci) * in_plane;
        const T* wp = w + (co * g.in_channels + ci) * ksize;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
          const Range ry = valid_range(ky - g.pad, g.stride, g.in_h, g.out_h);
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            const Range rx = valid_range(kx - g.pad, g.stride, g.in_w, g.out_w);
            const double wv = wp[ky * g.kernel_w + kx];
            for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
              double* arow = acc.data() + oy * g.out_w;
              const T* xrow = xp + (oy * g.stride - g.pad + ky) * g.in_w - g.pad + kx;
              if (g.stride == 1) {
                for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) arow[ox] += wv * xrow[ox];
              } else {
                for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox)
                  arow[ox] += wv * xrow[ox * g.stride];
              }
            }
          }
        }
      }
      store_plane(acc, o + job * out_plane);
    }
  }
  return out;
}

// Scatter form: each (n, ci) input plane accumulates contributions from every
// output channel.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                                const Shape& input_shape, int stride, int pad) {
  const auto g = conv2d_geometry(input_shape, kernel.shape(), Shape{kernel.dim(0)}, stride, pad);
  if (grad_out.shape() != Shape{g.batch, g.out_channels, g.out_h, g.out_w}) {
    throw ConfigError("conv2d upstream gradient shape " + shape_str(grad_out.shape()) +
                      " does not match output geometry");
  }
  Tensor<T> gin(input_shape);
  T* gi = gin.mutable_data().data();
  const T* go = grad_out.data().data();
  const T* w = kernel.data().data();
  const std::int64_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::int64_t ksize = g.kernel_h * g.kernel_w;
  const std::int64_t jobs = g.batch * g.in_channels;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(in_plane));
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < jobs; ++job) {
      const std::int64_t n = job / g.in_channels, ci = job % g.in_channels;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::int64_t co = 0; co < g.out_channels; ++co) {
        const T* gp = go + (n * g.out_channels + co) * out_plane;
        const T* wp = w + (co * g.in_channels + ci) * ksize;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
          const Range ry = valid_range(ky - g.pad, g.stride, g.in_h, g.out_h);
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            const Range rx = valid_range(kx - g.pad, g.stride, g.in_w, g.out_w);
            const double wv = wp[ky * g.kernel_w + kx];
            for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
              double* arow = acc.data() + (oy * g.stride - g.pad + ky) * g.in_w - g.pad + kx;
              const T* grow = gp + oy * g.out_w;
              if (g.stride == 1) {
                for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) arow[ox] += wv * grow[ox];
              } else {
                for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox)
                  arow[ox * g.stride] += wv * grow[ox];
              }
            }
          }
        }
      }
      store_plane(acc, gi + job * in_plane);
    }
  }
  return gin;
}

template <typename T>
ParamGrads<T> conv2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& input,
                                     const Shape& kernel_shape, int stride, int pad) {
  const auto g = conv2d_geometry(input.shape(), kernel_shape, Shape{kernel_shape.at(0)}, stride, pad);
  ParamGrads<T> grads{Tensor<T>(kernel_shape), Tensor<T>(Shape{g.out_channels})};
  T* gw = grads.weight.mutable_data().data();
  T* gb = grads.bias.mutable_data().data();
  const T* go = grad_out.data().data();
  const T* x = input.data().data();
  const std::int64_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::int64_t ksize = g.kernel_h * g.kernel_w;
  const std::int64_t jobs = g.out_channels * g.in_channels;

#pragma omp parallel
  {
    // One lane row per kernel tap; lanes are summed at the end in index order.
    std::vector<double> lanes(static_cast<std::size_t>(ksize * g.out_w));
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < jobs; ++job) {
      const std::int64_t co = job / g.in_channels, ci = job % g.in_channels;
      std::fill(lanes.begin(), lanes.end(), 0.0);
      for (std::int64_t n = 0; n < g.batch; ++n) {
        const T* gp = go + (n * g.out_channels + co) * out_plane;
        const T* xp = x + (n * g.in_channels + ci) * in_plane;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
          const Range ry = valid_range(ky - g.pad, g.stride, g.in_h, g.out_h);
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            const Range rx = valid_range(kx - g.pad, g.stride, g.in_w, g.out_w);
            double* lane = lanes.data() + (ky * g.kernel_w + kx) * g.out_w;
            for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
              const T* grow = gp + oy * g.out_w;
              const T* xrow = xp + (oy * g.stride - g.pad + ky) * g.in_w - g.pad + kx;
              if (g.stride == 1) {
                for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox)
                  lane[ox] += static_cast<double>(grow[ox]) * xrow[ox];
              } else {
                for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox)
                  lane[ox] += static_cast<double>(grow[ox]) * xrow[ox * g.stride];
              }
            }
          }
        }
      }
      for (std::int64_t k = 0; k < ksize; ++k)
        gw[job * ksize + k] = static_cast<T>(lane_sum(lanes.data() + k * g.out_w, g.out_w));
    }

#pragma omp for schedule(static)
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      double s = 0.0;
      for (std::int64_t n = 0; n < g.batch; ++n)
        s += lane_sum(go + (n * g.out_channels + co) * out_plane, out_plane);
      gb[co] = static_cast<T>(s);
    }
  }
  return grads;
}

template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                                   const Tensor<T>& bias, int stride) {
  const auto g = conv_transpose_geometry(input.shape(), kernel.shape(), bias.shape(), stride);
  Tensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
  T* o = out.mutable_data().data();
  const T* x = input.data().data();
  const T* w = kernel.data().data();
  const T* b = bias.data().data();
  const std::int64_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::int64_t k = g.kernel, s = g.stride;
  const std::int64_t jobs = g.batch * g.out_channels;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(out_plane));
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < jobs; ++job) {
      const std::int64_t n = job / g.out_channels, co = job % g.out_channels;
      std::fill(acc.begin(), acc.end(), static_cast<double>(b[co]));
      for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
        const T* xp = x + (n * g.in_channels + ci) * in_plane;
        for (std::int64_t a = 0; a < k; ++a)
          for (std::int64_t bb = 0; bb < k; ++bb) {
            const double wv = w[((ci * g.out_channels + co) * k + a) * k + bb];
            for (std::int64_t iy = 0; iy < g.in_h; ++iy) {
              double* orow = acc.data() + (iy * s + a) * g.out_w + bb;
              const T* xrow = xp + iy * g.in_w;
              for (std::int64_t ix = 0; ix < g.in_w; ++ix) orow[ix * s] += wv * xrow[ix];
            }
          }
      }
      store_plane(acc, o + job * out_plane);
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                                          const Shape& input_shape, int stride) {
  const auto g = conv_transpose_geometry(input_shape, kernel.shape(), Shape{kernel.dim(1)}, stride);
  Tensor<T> gin(input_shape);
  T* gi = gin.mutable_data().data();
  const T* go = grad_out.data().data();
  const T* w = kernel.data().data();
  const std::int64_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::int64_t k = g.kernel, s = g.stride;
  const std::int64_t jobs = g.batch * g.in_channels;

#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(in_plane));
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < jobs; ++job) {
      const std::int64_t n = job / g.in_channels, ci = job % g.in_channels;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::int64_t co = 0; co < g.out_channels; ++co) {
        const T* gp = go + (n * g.out_channels + co) * out_plane;
        for (std::int64_t a = 0; a < k; ++a)
          for (std::int64_t bb = 0; bb < k; ++bb) {
            const double wv = w[((ci * g.out_channels + co) * k + a) * k + bb];
            for (std::int64_t iy = 0; iy < g.in_h; ++iy) {
              double* arow = acc.data() + iy * g.in_w;
              const T* grow = gp + (iy * s + a) * g.out_w + bb;
              for (std::int64_t ix = 0; ix < g.in_w; ++ix) arow[ix] += wv * grow[ix * s];
            }
          }
      }
      store_plane(acc, gi + job * in_plane);
    }
  }
  return gin;
}

template <typename T>
ParamGrads<T> conv_transpose2d_backward_params(const Tensor<T>& grad_out, const Tensor<T>& input,
                                               const Shape& kernel_shape, int stride) {
  const auto g = conv_transpose_geometry(input.shape(), kernel_shape, Shape{kernel_shape.at(1)}, stride);
  ParamGrads<T> grads{Tensor<T>(kernel_shape), Tensor<T>(Shape{g.out_channels})};
  T* gw = grads.weight.mutable_data().data();
  T* gb = grads.bias.mutable_data().data();
  const T* go = grad_out.data().data();
  const T* x = input.data().data();
  const std::int64_t in_plane = g.in_h * g.in_w, out_plane = g.out_h * g.out_w;
  const std::int64_t k = g.kernel, s = g.stride;
  const std::int64_t jobs = g.in_channels * g.out_channels;

#pragma omp parallel
  {
    std::vector<double> lanes(static_cast<std::size_t>(k * k * g.in_w));
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < jobs; ++job) {
      const std::int64_t ci = job / g.out_channels, co = job % g.out_channels;
      std::fill(lanes.begin(), lanes.end(), 0.0);
      for (std::int64_t n = 0; n < g.batch; ++n) {
        const T* xp = x + (n * g.in_channels + ci) * in_plane;
        const T* gp = go + (n * g.out_channels + co) * out_plane;
        for (std::int64_t a = 0; a < k; ++a)
          for (std::int64_t bb = 0; bb < k; ++bb) {
            double* lane = lanes.data() + (a * k + bb) * g.in_w;
            for (std::int64_t iy = 0; iy < g.in_h; ++iy) {
              const T* xrow = xp + iy * g.in_w;
              const T* grow = gp + (iy * s + a) * g.out_w + bb;
              for (std::int64_t ix = 0; ix < g.in_w; ++ix)
                lane[ix] += static_cast<double>(xrow[ix]) * grow[ix * s];
            }
          }
      }
      for (std::int64_t t = 0; t < k * k; ++t)
        gw[job * k * k + t] = static_cast<T>(lane_sum(lanes.data() + t * g.in_w, g.in_w));
    }

#pragma omp for schedule(static)
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      double sum = 0.0;
      for (std::int64_t n = 0; n < g.batch; ++n)
        sum += lane_sum(go + (n * g.out_channels + co) * out_plane, out_plane);
      gb[co] = static_cast<T>(sum);
    }
  }
  return grads;
}

namespace {

template <typename T>
Tensor<T> batchnorm_apply(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const BatchNormSaved& saved) {
  const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor<T> out(input.shape());
  T* o = out.mutable_data().data();
  const T* x = input.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < n * c; ++job) {
    const std::int64_t ch = job % c;
    const double scale = gamma[ch] * saved.invstd[ch];
    const double shift = beta[ch] - saved.mean[ch] * scale;
    const T* xp = x + job * hw;
    T* op = o + job * hw;
    for (std::int64_t p = 0; p < hw; ++p) op[p] = static_cast<T>(xp[p] * scale + shift);
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, double eps, BatchNormSaved& saved) {
  const auto c = batchnorm_channels(input.shape(), gamma.shape(), beta.shape());
  const auto n = input.dim(0), hw = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(n * hw);
  saved.mean.assign(c, 0.0);
  saved.var.assign(c, 0.0);
  saved.invstd.assign(c, 0.0);
  const T* x = input.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::int64_t b = 0; b < n; ++b) sum += lane_sum(x + (b * c + ch) * hw, hw);
    const double mean = sum / count;
    double sq = 0.0;
    for (std::int64_t b = 0; b < n; ++b) {
      const T* xp = x + (b * c + ch) * hw;
      std::array<double, kLanes> acc{};
      std::int64_t p = 0;
      for (; p + kLanes <= hw; p += kLanes)
        for (int j = 0; j < kLanes; ++j) {
          const double d = xp[p + j] - mean;
          acc[j] += d * d;
        }
      for (; p < hw; ++p) {
        const double d = xp[p] - mean;
        sq += d * d;
      }
      for (double a : acc) sq += a;
    }
    saved.mean[ch] = mean;
    saved.var[ch] = sq / count;
    saved.invstd[ch] = 1.0 / std::sqrt(saved.var[ch] + eps);
  }
  return batchnorm_apply(input, gamma, beta, saved);
}

template <typename T>
Tensor<T> batchnorm_forward_infer(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, const Tensor<T>& running_mean,
                                  const Tensor<T>& running_var, double eps,
                                  BatchNormSaved& saved) {
  const auto c = batchnorm_channels(input.shape(), gamma.shape(), beta.shape());
  batchnorm_channels(input.shape(), running_mean.shape(), running_var.shape());
  saved.mean.assign(c, 0.0);
  saved.var.assign(c, 0.0);
  saved.invstd.assign(c, 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    saved.mean[ch] = running_mean[ch];
    saved.var[ch] = running_var[ch];
    saved.invstd[ch] = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps);
  }
  return batchnorm_apply(input, gamma, beta, saved);
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                                     const Tensor<T>& gamma, const BatchNormSaved& saved,
                                     bool train_mode) {
  const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(n * hw);
  BatchNormGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(Shape{c}), Tensor<T>(Shape{c})};
  T* gx = grads.input.mutable_data().data();
  T* gg = grads.gamma.mutable_data().data();
  T* gbt = grads.beta.mutable_data().data();
  const T* x = input.data().data();
  const T* go = grad_out.data().data();
  std::vector<double> sum_dy(c), sum_dy_xhat(c);

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double mean = saved.mean[ch], invstd = saved.invstd[ch];
      double sdy = 0.0, sdx = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* gp = go + (b * c + ch) * hw;
        const T* xp = x + (b * c + ch) * hw;
        std::array<double, kLanes> a1{}, a2{};
        std::int64_t p = 0;
        for (; p + kLanes <= hw; p += kLanes)
          for (int j = 0; j < kLanes; ++j) {
            a1[j] += gp[p + j];
            a2[j] += gp[p + j] * (xp[p + j] - mean);
          }
        for (; p < hw; ++p) {
          sdy += gp[p];
          sdx += gp[p] * (xp[p] - mean);
        }
        for (int j = 0; j < kLanes; ++j) {
          sdy += a1[j];
          sdx += a2[j];
        }
      }
      sum_dy[ch] = sdy;
      sum_dy_xhat[ch] = sdx * invstd;
      gg[ch] = static_cast<T>(sum_dy_xhat[ch]);
      gbt[ch] = static_cast<T>(sdy);
    }

#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < n * c; ++job) {
      const std::int64_t ch = job % c;
      const double mean = saved.mean[ch], invstd = saved.invstd[ch];
      const double scale = gamma[ch] * invstd;
      const T* gp = go + job * hw;
      const T* xp = x + job * hw;
      T* dst = gx + job * hw;
      if (train_mode) {
        const double mdy = sum_dy[ch] / count, mdx = sum_dy_xhat[ch] / count;
        for (std::int64_t p = 0; p < hw; ++p)
          dst[p] = static_cast<T>(scale * (gp[p] - mdy - (xp[p] - mean) * invstd * mdx));
      } else {
        for (std::int64_t p = 0; p < hw; ++p) dst[p] = static_cast<T>(scale * gp[p]);
      }
    }
  }
  return grads;
}

#include "instantiate.inc"

}  // namespace dmrs::kernels::parallel
