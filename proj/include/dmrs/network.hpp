#pragma once

// DeepMRSeg and the batch-normalised UNet baseline, assembled from blocks
// that both declare their parameters (names, shapes) and run forward passes.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dmrs/autodiff.hpp"
#include "dmrs/params.hpp"

namespace dmrs {

struct NetworkConfig {
  std::int64_t in_channels = 1;  // modalities (m)
  std::int64_t features = 8;     // base feature maps (f)
  int depth = 2;
  std::int64_t num_classes = 2;
  std::vector<int> resinc_branch_depths{0, 1, 2, 3};
  int pre_encode_blocks = 2;

  /// Throws ConfigError on f % 4 != 0, f < 8, depth < 1, classes < 2, ...
  void validate() const;
  /// Channel count at encoder level L: f * 2^L.
  std::int64_t channels_at(int level) const { return features << level; }
  /// Spatial dims must be multiples of 2^depth.
  std::int64_t spatial_divisor() const { return std::int64_t{1} << depth; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class Arch { DeepMRSeg, UNet };

std::string arch_name(Arch arch);
Arch parse_arch(const std::string& name);

enum class BlockKind {
  Projection,
  ResNetBlock,
  ResIncBlock,
  TransitionDown,
  TransitionUp,
  SoftmaxHead,
  FusionProjection,
  DoubleConv,  // UNet: two conv3x3-BN-ReLU
  Upsample,    // UNet: 2x2 stride-2 transposed conv halving channels
};

const char* block_kind_name(BlockKind kind);

enum class ParamRole { Weight, Bias, Gamma, Beta };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role;
  std::int64_t fan_in;
};

struct StatsSpec {
  std::string name;
  std::int64_t channels;
};

struct LayerSpecs {
  std::vector<ParamSpec> params;
  std::vector<StatsSpec> stats;

  std::int64_t parameter_count() const;
  std::int64_t running_count() const;
};

/// Binds a tape to a parameter store for one forward pass.
template <typename T>
class ForwardContext {
 public:
  ForwardContext(Tape<T>& tape, ParamStore<T>& params, Mode mode, bool update_running = true)
      : tape_(tape), params_(params), mode_(mode), update_running_(update_running) {}

  Tape<T>& tape() { return tape_; }
  Mode mode() const { return mode_; }

  /// Registers the named parameter on the tape on first use.
  Var param(const std::string& name);

  /// Statistics to read (infer) or update (train); nullptr when a train-mode
  /// pass must leave them untouched.
  RunningStats<T>* running(const std::string& name);

 private:
  Tape<T>& tape_;
  ParamStore<T>& params_;
  Mode mode_;
  bool update_running_;
  std::vector<std::pair<std::string, Var>> bound_;
};

/// conv (or transposed conv) -> optional batch norm -> optional ReLU.
struct ConvUnit {
  std::string name;
  std::int64_t in = 0, out = 0;
  int kernel = 1;
  int stride = 1;
  bool transpose = false;
  bool batchnorm = true;
  bool relu = true;

  int pad() const { return transpose ? 0 : kernel / 2; }
  void declare(LayerSpecs& specs) const;
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const;
};

/// 1x1 conv m -> f, BN, ReLU.
struct Projection {
  std::string name;
  ConvUnit conv;
  Projection(std::string name, std::int64_t in, std::int64_t features);
  BlockKind kind() const { return BlockKind::Projection; }
  void declare(LayerSpecs& specs) const { conv.declare(specs); }
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const { return conv.forward(ctx, x); }
};

/// conv3x3-BN-ReLU, conv3x3-BN, + identity, ReLU.
struct ResNetBlock {
  std::string name;
  std::int64_t channels;
  ConvUnit conv1, conv2;
  ResNetBlock(std::string name, std::int64_t channels);
  BlockKind kind() const { return BlockKind::ResNetBlock; }
  void declare(LayerSpecs& specs) const;
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const;
};

/// Four branches, each a 1x1 reduction to c/4 followed by a branch-specific
/// number of 3x3 convs; concatenated, linearly mixed by a 1x1 conv with BN
/// and no activation, added to the identity, then ReLU.
struct ResIncBlock {
  std::string name;
  std::int64_t channels;
  std::vector<std::vector<ConvUnit>> branches;
  ConvUnit mix;
  ResIncBlock(std::string name, std::int64_t channels, const std::vector<int>& branch_depths);
  BlockKind kind() const { return BlockKind::ResIncBlock; }
  void declare(LayerSpecs& specs) const;
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const;
};

/// 1x1 stride-2 conv c -> 2c, BN, ReLU.
struct TransitionDown {
  std::string name;
  ConvUnit conv;
  TransitionDown(std::string name, std::int64_t channels);
  BlockKind kind() const { return BlockKind::TransitionDown; }
  void declare(LayerSpecs& specs) const { conv.declare(specs); }
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const;
};

/// 1x1 stride-2 transposed conv c -> c/4 (BN, ReLU), concatenated with the
/// c/2-channel skip, fused back to c/2 channels by a 1x1 conv (BN, ReLU).
struct TransitionUp {
  std::string name;
  std::int64_t channels;
  ConvUnit upsample;
  ConvUnit fuse;  // the FusionProjection
  TransitionUp(std::string name, std::int64_t channels);
  BlockKind kind() const { return BlockKind::TransitionUp; }
  void declare(LayerSpecs& specs) const;
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x, Var skip) const;
};

/// 1x1 conv to class logits (softmax is applied by consumers).
struct SoftmaxHead {
  std::string name;
  ConvUnit conv;
  SoftmaxHead(std::string name, std::int64_t channels, std::int64_t classes);
  BlockKind kind() const { return BlockKind::SoftmaxHead; }
  void declare(LayerSpecs& specs) const { conv.declare(specs); }
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const { return conv.forward(ctx, x); }
};

struct DoubleConv {
  std::string name;
  ConvUnit conv1, conv2;
  DoubleConv(std::string name, std::int64_t in, std::int64_t out);
  BlockKind kind() const { return BlockKind::DoubleConv; }
  void declare(LayerSpecs& specs) const;
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const;
};

struct Upsample {
  std::string name;
  ConvUnit conv;
  Upsample(std::string name, std::int64_t channels);
  BlockKind kind() const { return BlockKind::Upsample; }
  void declare(LayerSpecs& specs) const { conv.declare(specs); }
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const { return conv.forward(ctx, x); }
};

struct BlockCount {
  std::string name;
  BlockKind kind;
  std::int64_t channels;  // block width (input channels for transitions)
  std::int64_t parameters;
};

/// Learnable parameters (conv weights/biases, BN gamma/beta) of one block.
std::int64_t count_block(BlockKind kind, std::int64_t channels,
                         const std::vector<int>& branch_depths = {0, 1, 2, 3});

class DeepMRSegNet {
 public:
  explicit DeepMRSegNet(const NetworkConfig& config);
  LayerSpecs specs() const;
  std::vector<BlockCount> block_counts() const;
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const;

  /// Channel counts after projection and after each encoder/decoder level.
  std::vector<std::int64_t> channel_progression() const;

 private:
  NetworkConfig config_;
  Projection projection_;
  std::vector<ResNetBlock> pre_encode_;
  std::vector<TransitionDown> downs_;
  std::vector<ResIncBlock> encoders_;
  std::vector<TransitionUp> ups_;      // ups_[i] serves level depth - i
  std::vector<ResIncBlock> decoders_;
  SoftmaxHead head_;
};

class UNetNet {
 public:
  explicit UNetNet(const NetworkConfig& config);
  LayerSpecs specs() const;
  std::vector<BlockCount> block_counts() const;
  template <typename T>
  Var forward(ForwardContext<T>& ctx, Var x) const;

 private:
  NetworkConfig config_;
  std::vector<DoubleConv> encoders_;  // level 0..depth
  std::vector<Upsample> ups_;
  std::vector<DoubleConv> decoders_;
  SoftmaxHead head_;
};

/// Per-block parameter counts in forward order.
std::vector<BlockCount> count_parameters(Arch arch, const NetworkConfig& config);

template <typename T>
class Model {
 public:
  /// All weights zero, gamma 1, running variance 1.
  Model(Arch arch, NetworkConfig config);

  /// He-scaled normal conv weights from `seed`, zero biases and betas.
  static Model initialized(Arch arch, const NetworkConfig& config, std::uint64_t seed);

  Arch arch() const { return arch_; }
  const NetworkConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  LayerSpecs specs() const;
  std::vector<BlockCount> block_counts() const;

  /// Records the network on `tape`; returns logits [N, classes, H, W].
  Var forward(Tape<T>& tape, Var input, Mode mode, bool update_running = true);

  /// Forward pass without keeping a tape around.
  Tensor<T> logits(const Tensor<T>& input, Mode mode = Mode::Infer);

  /// Checks input rank, channel count, and spatial divisibility.
  void validate_input(const Shape& shape) const;

 private:
  Arch arch_;
  NetworkConfig config_;
  std::variant<DeepMRSegNet, UNetNet> net_;
  ParamStore<T> params_;
};

}  // namespace dmrs
