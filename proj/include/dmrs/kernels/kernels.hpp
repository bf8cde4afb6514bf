#pragma once

// Convolution and batch-normalisation kernels.
//
// Two implementations share one interface: `reference` is a direct serial
// transcription of each definition (one accumulator per output element),
// `parallel` is restructured for vectorisation and split over OpenMP threads.
// Parallel kernels give each output element to exactly one loop iteration and
// reduce in a fixed order, so results do not depend on the thread count.
// Both accumulate in double regardless of the tensor element type.

#include <cstdint>
#include <vector>

#include "dmrs/tensor.hpp"

namespace dmrs::kernels {

struct Conv2dGeometry {
  std::int64_t batch, in_channels, in_h, in_w;
  std::int64_t out_channels, kernel_h, kernel_w;
  std::int64_t stride, pad;
  std::int64_t out_h, out_w;
};

/// Validates shapes (input NCHW, kernel OIHW, bias [O]) and derives output dims.
Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernel,
                               const Shape& bias, int stride, int pad);

struct ConvTransposeGeometry {
  std::int64_t batch, in_channels, in_h, in_w;
  std::int64_t out_channels, kernel;
  std::int64_t stride;
  std::int64_t out_h, out_w;
};

/// Kernel is [Cin, Cout, k, k]; only stride 2 with k in {1, 2} is supported,
/// and the output is always exactly (2H, 2W).
ConvTransposeGeometry conv_transpose_geometry(const Shape& input,
                                              const Shape& kernel,
                                              const Shape& bias, int stride);

template <typename T>
struct ParamGrads {
  Tensor<T> weight;
  Tensor<T> bias;
};

/// Per-channel statistics a batch-norm forward pass leaves for its backward.
struct BatchNormSaved {
  std::vector<double> mean;
  std::vector<double> var;     // biased batch variance (train) or running var
  std::vector<double> invstd;  // 1 / sqrt(var + eps)
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

enum class Backend { Reference, Parallel };

/// Process-wide backend selection used by the autodiff ops. Defaults to
/// Parallel; tests switch to Reference to cross-check whole networks.
void set_backend(Backend backend);
Backend backend();

/// Caps OpenMP parallelism at DEEPMRSEG_THREADS when that variable is set.
/// Returns the thread count in effect.
int configure_threads_from_env();

#define DMRS_KERNEL_DECLS                                                      \
  template <typename T>                                                        \
  Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel,    \
                           const Tensor<T>& bias, int stride, int pad);        \
  template <typename T>                                                        \
  Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out,                   \
                                  const Tensor<T>& kernel,                     \
                                  const Shape& input_shape, int stride,        \
                                  int pad);                                    \
  template <typename T>                                                        \
  ParamGrads<T> conv2d_backward_params(const Tensor<T>& grad_out,              \
                                       const Tensor<T>& input,                 \
                                       const Shape& kernel_shape, int stride,  \
                                       int pad);                               \
  template <typename T>                                                        \
  Tensor<T> conv_transpose2d_forward(const Tensor<T>& input,                   \
                                     const Tensor<T>& kernel,                  \
                                     const Tensor<T>& bias, int stride);       \
  template <typename T>                                                        \
  Tensor<T> conv_transpose2d_backward_input(const Tensor<T>& grad_out,         \
                                            const Tensor<T>& kernel,           \
                                            const Shape& input_shape,          \
                                            int stride);                       \
  template <typename T>                                                        \
  ParamGrads<T> conv_transpose2d_backward_params(const Tensor<T>& grad_out,    \
                                                 const Tensor<T>& input,       \
                                                 const Shape& kernel_shape,    \
                                                 int stride);                  \
  template <typename T>                                                        \
  Tensor<T> batchnorm_forward_train(const Tensor<T>& input,                    \
                                    const Tensor<T>& gamma,                    \
                                    const Tensor<T>& beta, double eps,         \
                                    BatchNormSaved& saved);                    \
  template <typename T>                                                        \
  Tensor<T> batchnorm_forward_infer(                                           \
      const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,   \
      const Tensor<T>& running_mean, const Tensor<T>& running_var, double eps, \
      BatchNormSaved& saved);                                                  \
  template <typename T>                                                        \
  BatchNormGrads<T> batchnorm_backward(                                        \
      const Tensor<T>& grad_out, const Tensor<T>& input,                       \
      const Tensor<T>& gamma, const BatchNormSaved& saved, bool train_mode);

namespace reference {
DMRS_KERNEL_DECLS
}  // namespace reference

namespace parallel {
DMRS_KERNEL_DECLS
}  // namespace parallel

#undef DMRS_KERNEL_DECLS

// Backend-dispatching entry points used by the autodiff layer.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& bias, int stride, int pad) {
  return backend() == Backend::Reference
             ? reference::conv2d_forward(input, kernel, bias, stride, pad)
             : parallel::conv2d_forward(input, kernel, bias, stride, pad);
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out,
                                const Tensor<T>& kernel,
                                const Shape& input_shape, int stride, int pad) {
  return backend() == Backend::Reference
             ? reference::conv2d_backward_input(grad_out, kernel, input_shape,
                                                stride, pad)
             : parallel::conv2d_backward_input(grad_out, kernel, input_shape,
                                               stride, pad);
}

template <typename T>
ParamGrads<T> conv2d_backward_params(const Tensor<T>& grad_out,
                                     const Tensor<T>& input,
                                     const Shape& kernel_shape, int stride,
                                     int pad) {
  return backend() == Backend::Reference
             ? reference::conv2d_backward_params(grad_out, input, kernel_shape,
                                                 stride, pad)
             : parallel::conv2d_backward_params(grad_out, input, kernel_shape,
                                                stride, pad);
}

template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& input,
                                   const Tensor<T>& kernel,
                                   const Tensor<T>& bias, int stride) {
  return backend() == Backend::Reference
             ? reference::conv_transpose2d_forward(input, kernel, bias, stride)
             : parallel::conv_transpose2d_forward(input, kernel, bias, stride);
}

template <typename T>
Tensor<T> conv_transpose2d_backward_input(const Tensor<T>& grad_out,
                                          const Tensor<T>& kernel,
                                          const Shape& input_shape,
                                          int stride) {
  return backend() == Backend::Reference
             ? reference::conv_transpose2d_backward_input(grad_out, kernel,
                                                          input_shape, stride)
             : parallel::conv_transpose2d_backward_input(grad_out, kernel,
                                                         input_shape, stride);
}

template <typename T>
ParamGrads<T> conv_transpose2d_backward_params(const Tensor<T>& grad_out,
                                               const Tensor<T>& input,
                                               const Shape& kernel_shape,
                                               int stride) {
  return backend() == Backend::Reference
             ? reference::conv_transpose2d_backward_params(
                   grad_out, input, kernel_shape, stride)
             : parallel::conv_transpose2d_backward_params(
                   grad_out, input, kernel_shape, stride);
}

template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& input,
                                  const Tensor<T>& gamma,
                                  const Tensor<T>& beta, double eps,
                                  BatchNormSaved& saved) {
  return backend() == Backend::Reference
             ? reference::batchnorm_forward_train(input, gamma, beta, eps, saved)
             : parallel::batchnorm_forward_train(input, gamma, beta, eps, saved);
}

template <typename T>
Tensor<T> batchnorm_forward_infer(const Tensor<T>& input,
                                  const Tensor<T>& gamma, const Tensor<T>& beta,
                                  const Tensor<T>& running_mean,
                                  const Tensor<T>& running_var, double eps,
                                  BatchNormSaved& saved) {
  return backend() == Backend::Reference
             ? reference::batchnorm_forward_infer(input, gamma, beta,
                                                  running_mean, running_var,
                                                  eps, saved)
             : parallel::batchnorm_forward_infer(input, gamma, beta,
                                                 running_mean, running_var,
                                                 eps, saved);
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out,
                                     const Tensor<T>& input,
                                     const Tensor<T>& gamma,
                                     const BatchNormSaved& saved,
                                     bool train_mode) {
  return backend() == Backend::Reference
             ? reference::batchnorm_backward(grad_out, input, gamma, saved,
                                             train_mode)
             : parallel::batchnorm_backward(grad_out, input, gamma, saved,
                                            train_mode);
}

/// Validates a batch-norm call; returns the channel count.
std::int64_t batchnorm_channels(const Shape& input, const Shape& gamma,
                                const Shape& beta);

}  // namespace dmrs::kernels
