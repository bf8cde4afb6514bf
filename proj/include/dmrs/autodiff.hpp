#pragma once

// Tape-based reverse-mode differentiation.
//
// A forward pass appends one node per operation to a Tape. Parameters are
// recorded by reference together with their version counter; replaying the
// tape after such a tensor was mutated raises IntegrityError. backward()
// walks the tape in reverse, summing gradients for values with several
// consumers.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dmrs/kernels/kernels.hpp"
#include "dmrs/tensor.hpp"

namespace dmrs {

enum class OpKind {
  Input,
  Parameter,
  Conv2d,
  ConvTranspose2d,
  BatchNorm,
  Relu,
  Softmax,
  Concat,
  Add,
  MaxPool,
};

const char* op_name(OpKind kind);

/// Handle to a value recorded on a tape.
struct Var {
  std::uint32_t index = 0;
  friend bool operator==(Var, Var) = default;
};

template <typename T>
class Tape {
 public:
  /// Computes one gradient per input (empty tensors where `needs[i]` is
  /// false) from the upstream gradient of the node's output.
  using BackwardFn = std::function<std::vector<Tensor<T>>(
      const Tape&, const Tensor<T>& upstream, const std::vector<bool>& needs)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant leaf; receives a gradient only if `requires_grad` is set.
  Var input(Tensor<T> value, bool requires_grad = false);

  /// Leaf referring to an externally owned parameter tensor, which must
  /// outlive the tape and stay unmodified until backward() completes.
  Var parameter(std::string name, const Tensor<T>& tensor);

  Var record(OpKind kind, Tensor<T> value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor<T>& value(Var v) const;
  OpKind kind(Var v) const { return node(v).kind; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from `output` seeded with `seed` (same shape as output).
  void backward(Var output, const Tensor<T>& seed);

  /// Gradient reaching `v` in the last backward(); empty if none.
  const Tensor<T>& grad(Var v) const;

  /// Parameter gradients in registration order. Parameters that did not
  /// influence the output get zeros of their own shape.
  std::vector<std::pair<std::string, Tensor<T>>> parameter_grads() const;

  /// Rejects non-finite forward values with NumericError when enabled.
  void set_debug_checks(bool on) { debug_checks_ = on; }

 private:
  struct Node {
    OpKind kind;
    std::vector<Var> inputs;
    std::optional<Tensor<T>> owned;
    const Tensor<T>* external = nullptr;
    std::uint64_t version = 0;
    std::string name;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;

  std::deque<Node> nodes_;  // stable addresses for value() references
  std::vector<Tensor<T>> grads_;
  bool debug_checks_ = false;
};

// --- differentiable operations ---------------------------------------------

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var kernel, Var bias, int stride, int pad);

/// Kernel [Cin, Cout, k, k], k in {1, 2}, stride 2; output is (2H, 2W).
template <typename T>
Var conv_transpose2d(Tape<T>& tape, Var input, Var kernel, Var bias, int stride);

enum class Mode { Train, Infer };

template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Train mode normalises with batch statistics and, when `running` is
/// non-null, folds them into the running statistics. Infer mode normalises
/// with `running`, which is then required.
template <typename T>
Var batchnorm2d(Tape<T>& tape, Var input, Var gamma, Var beta, RunningStats<T>* running,
                Mode mode, BatchNormOptions options = {});

template <typename T>
Var relu(Tape<T>& tape, Var input);

/// Softmax over the channel axis of an NCHW tensor.
template <typename T>
Var softmax_channel(Tape<T>& tape, Var input);

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// 2x2 max over non-overlapping windows; ties go to the first element in
/// row-major window order.
template <typename T>
Var maxpool2x2(Tape<T>& tape, Var input);

// --- plain tensor helpers (no tape) ------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax_channel_forward(const Tensor<T>& logits);

/// Vector-Jacobian product of the channel softmax given its output.
template <typename T>
Tensor<T> softmax_channel_backward(const Tensor<T>& probs, const Tensor<T>& upstream);

template <typename T>
Tensor<T> concat_channels_forward(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& x);

}  // namespace dmrs
