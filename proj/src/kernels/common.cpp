#include <atomic>
#include <cstdlib>
#include <string>

#include <omp.h>

#include "dmrs/kernels/kernels.hpp"

namespace dmrs::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};

std::string dims_msg(const Shape& input, const Shape& kernel) {
  return "input " + shape_str(input) + ", kernel " + shape_str(kernel);
}
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

int configure_threads_from_env() {
  if (const char* env = std::getenv("DEEPMRSEG_THREADS")) {
    try {
      int n = std::stoi(env);
      if (n >= 1) omp_set_num_threads(n);
    } catch (const std::exception&) {
      throw ConfigError(std::string("DEEPMRSEG_THREADS must be a positive integer, got '") +
                        env + "'");
    }
  }
  return omp_get_max_threads();
}

Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernel,
                               const Shape& bias, int stride, int pad) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw ConfigError("conv2d expects rank-4 tensors: " + dims_msg(input, kernel));
  }
  if (kernel[1] != input[1]) {
    throw ConfigError("conv2d channel mismatch: input has " +
                      std::to_string(input[1]) + " channels, kernel expects " +
                      std::to_string(kernel[1]) + " (" + dims_msg(input, kernel) + ")");
  }
  auto k_ok = [](std::int64_t k) { return k == 1 || k == 3; };
  if (!k_ok(kernel[2]) || !k_ok(kernel[3])) {
    throw ConfigError("conv2d kernel extent must be 1 or 3: " + dims_msg(input, kernel));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv2d stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (pad < 0) throw ConfigError("conv2d padding must be non-negative");
  if (bias.size() != 1 || bias[0] != kernel[0]) {
    throw ConfigError("conv2d bias shape " + shape_str(bias) + " does not match " +
                      std::to_string(kernel[0]) + " output channels");
  }
  Conv2dGeometry g{};
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = kernel[0];
  g.kernel_h = kernel[2];
  g.kernel_w = kernel[3];
  g.stride = stride;
  g.pad = pad;
  const std::int64_t span_h = g.in_h + 2 * pad - g.kernel_h;
  const std::int64_t span_w = g.in_w + 2 * pad - g.kernel_w;
  if (span_h < 0 || span_w < 0) {
    throw ConfigError("conv2d kernel larger than padded input: " + dims_msg(input, kernel));
  }
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

ConvTransposeGeometry conv_transpose_geometry(const Shape& input,
                                              const Shape& kernel,
                                              const Shape& bias, int stride) {
  if (input.size() != 4 || kernel.size() != 4) {
    throw ConfigError("conv_transpose2d expects rank-4 tensors: " + dims_msg(input, kernel));
  }
  if (kernel[0] != input[1]) {
    throw ConfigError("conv_transpose2d channel mismatch: input has " +
                      std::to_string(input[1]) + " channels, kernel expects " +
                      std::to_string(kernel[0]));
  }
  if (stride != 2 || kernel[2] != kernel[3] || (kernel[2] != 1 && kernel[2] != 2)) {
    throw ConfigError("conv_transpose2d supports stride 2 with a 1x1 or 2x2 kernel only, got stride " +
                      std::to_string(stride) + " and kernel " + shape_str(kernel));
  }
  if (bias.size() != 1 || bias[0] != kernel[1]) {
    throw ConfigError("conv_transpose2d bias shape " + shape_str(bias) +
                      " does not match " + std::to_string(kernel[1]) + " output channels");
  }
  ConvTransposeGeometry g{};
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = kernel[1];
  g.kernel = kernel[2];
  g.stride = stride;
  g.out_h = input[2] * stride;
  g.out_w = input[3] * stride;
  return g;
}

std::int64_t batchnorm_channels(const Shape& input, const Shape& gamma,
                                const Shape& beta) {
  if (input.size() != 4) {
    throw ConfigError("batchnorm2d expects NCHW input, got " + shape_str(input));
  }
  const auto c = input[1];
  if (gamma.size() != 1 || beta.size() != 1 || gamma[0] != c || beta[0] != c) {
    throw ConfigError("batchnorm2d channel mismatch: input has " + std::to_string(c) +
                      " channels, gamma " + shape_str(gamma) + ", beta " + shape_str(beta));
  }
  return c;
}

}  // namespace dmrs::kernels
