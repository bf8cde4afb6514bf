#include "dmrs/network.hpp"

#include <cmath>
#include <random>

namespace dmrs {

void NetworkConfig::validate() const {
  if (in_channels < 1) throw ConfigError("input channel count m must be >= 1");
  if (features < 8 || features % 4 != 0) {
    throw ConfigError("feature count f must be a multiple of 4 and >= 8, got " +
                      std::to_string(features));
  }
  if (depth < 1 || depth > 8) throw ConfigError("depth must be in [1, 8], got " + std::to_string(depth));
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (resinc_branch_depths.size() != 4) {
    throw ConfigError("ResInc needs exactly 4 branch depths, got " +
                      std::to_string(resinc_branch_depths.size()));
  }
  for (int d : resinc_branch_depths) {
    if (d < 0) throw ConfigError("ResInc branch depth must be non-negative");
  }
  if (pre_encode_blocks < 0) throw ConfigError("pre_encode_blocks must be non-negative");
}

std::string arch_name(Arch arch) { return arch == Arch::DeepMRSeg ? "deepmrseg" : "unet"; }

Arch parse_arch(const std::string& name) {
  if (name == "deepmrseg") return Arch::DeepMRSeg;
  if (name == "unet") return Arch::UNet;
  throw ConfigError("unknown architecture '" + name + "' (expected deepmrseg or unet)");
}

const char* block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::Projection: return "Projection";
    case BlockKind::ResNetBlock: return "ResNetBlock";
    case BlockKind::ResIncBlock: return "ResIncBlock";
    case BlockKind::TransitionDown: return "TransitionDown";
    case BlockKind::TransitionUp: return "TransitionUp";
    case BlockKind::SoftmaxHead: return "SoftmaxHead";
    case BlockKind::FusionProjection: return "FusionProjection";
    case BlockKind::DoubleConv: return "DoubleConv";
    case BlockKind::Upsample: return "Upsample";
  }
  return "?";
}

std::int64_t LayerSpecs::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params) n += shape_numel(p.shape);
  return n;
}

std::int64_t LayerSpecs::running_count() const {
  std::int64_t n = 0;
  for (const auto& s : stats) n += 2 * s.channels;
  return n;
}

// --- ForwardContext --------------------------------------------------------------

template <typename T>
Var ForwardContext<T>::param(const std::string& name) {
  for (const auto& [n, v] : bound_)
    if (n == name) return v;
  Var v = tape_.parameter(name, params_.get(name));
  bound_.emplace_back(name, v);
  return v;
}

template <typename T>
RunningStats<T>* ForwardContext<T>::running(const std::string& name) {
  if (mode_ == Mode::Train && !update_running_) return nullptr;
  return &params_.running(name);
}

// --- ConvUnit --------------------------------------------------------------------

void ConvUnit::declare(LayerSpecs& specs) const {
  const Shape wshape = transpose ? Shape{in, out, kernel, kernel} : Shape{out, in, kernel, kernel};
  const std::int64_t fan_in = transpose ? in : in * kernel * kernel;
  specs.params.push_back({name + ".weight", wshape, ParamRole::Weight, fan_in});
  specs.params.push_back({name + ".bias", {out}, ParamRole::Bias, fan_in});
  if (batchnorm) {
    specs.params.push_back({name + ".bn.gamma", {out}, ParamRole::Gamma, 0});
    specs.params.push_back({name + ".bn.beta", {out}, ParamRole::Beta, 0});
    specs.stats.push_back({name + ".bn", out});
  }
}

template <typename T>
Var ConvUnit::forward(ForwardContext<T>& ctx, Var x) const {
  auto& tape = ctx.tape();
  const Var w = ctx.param(name + ".weight");
  const Var b = ctx.param(name + ".bias");
  Var y = transpose ? conv_transpose2d(tape, x, w, b, stride) : conv2d(tape, x, w, b, stride, pad());
  if (batchnorm) {
    y = batchnorm2d(tape, y, ctx.param(name + ".bn.gamma"), ctx.param(name + ".bn.beta"),
                    ctx.running(name + ".bn"), ctx.mode());
  }
  if (relu) y = dmrs::relu(tape, y);
  return y;
}

// --- blocks --------------------------------------------------------------------------

Projection::Projection(std::string n, std::int64_t in, std::int64_t features)
    : name(n), conv{n, in, features, 1, 1, false, true, true} {}

ResNetBlock::ResNetBlock(std::string n, std::int64_t c)
    : name(n),
      channels(c),
      conv1{n + ".conv1", c, c, 3, 1, false, true, true},
      conv2{n + ".conv2", c, c, 3, 1, false, true, false} {}

void ResNetBlock::declare(LayerSpecs& specs) const {
  conv1.declare(specs);
  conv2.declare(specs);
}

template <typename T>
Var ResNetBlock::forward(ForwardContext<T>& ctx, Var x) const {
  Var y = conv2.forward(ctx, conv1.forward(ctx, x));
  return relu(ctx.tape(), add(ctx.tape(), y, x));
}

ResIncBlock::ResIncBlock(std::string n, std::int64_t c, const std::vector<int>& branch_depths)
    : name(n), channels(c), mix{n + ".mix", c, c, 1, 1, false, true, false} {
  if (c % 4 != 0) {
    throw ConfigError("ResInc block '" + n + "' needs channels divisible by 4, got " +
                      std::to_string(c));
  }
  if (branch_depths.size() != 4) throw ConfigError("ResInc block needs exactly 4 branches");
  const std::int64_t q = c / 4;
  for (std::size_t b = 0; b < branch_depths.size(); ++b) {
    const std::string prefix = n + ".b" + std::to_string(b);
    std::vector<ConvUnit> branch;
    branch.push_back({prefix + ".reduce", c, q, 1, 1, false, true, true});
    for (int j = 0; j < branch_depths[b]; ++j)
      branch.push_back({prefix + ".conv" + std::to_string(j), q, q, 3, 1, false, true, true});
    branches.push_back(std::move(branch));
  }
}

void ResIncBlock::declare(LayerSpecs& specs) const {
  for (const auto& branch : branches)
    for (const auto& unit : branch) unit.declare(specs);
  mix.declare(specs);
}

template <typename T>
Var ResIncBlock::forward(ForwardContext<T>& ctx, Var x) const {
  if (ctx.tape().value(x).dim(1) != channels) {
    throw ConfigError("ResInc block '" + name + "' expects " + std::to_string(channels) +
                      " channels, got " + shape_str(ctx.tape().value(x).shape()));
  }
  Var merged{};
  bool first = true;
  for (const auto& branch : branches) {
    Var y = x;
    for (const auto& unit : branch) y = unit.forward(ctx, y);
    merged = first ? y : concat_channels(ctx.tape(), merged, y);
    first = false;
  }
  Var mixed = mix.forward(ctx, merged);
  return relu(ctx.tape(), add(ctx.tape(), mixed, x));
}

TransitionDown::TransitionDown(std::string n, std::int64_t c)
    : name(n), conv{n, c, 2 * c, 1, 2, false, true, true} {}

template <typename T>
Var TransitionDown::forward(ForwardContext<T>& ctx, Var x) const {
  const auto& s = ctx.tape().value(x).shape();
  if (s.size() != 4 || s[2] % 2 || s[3] % 2) {
    throw ConfigError("transition down '" + name + "' needs even spatial dims, got " + shape_str(s));
  }
  return conv.forward(ctx, x);
}

TransitionUp::TransitionUp(std::string n, std::int64_t c)
    : name(n),
      channels(c),
      upsample{n + ".upsample", c, c / 4, 1, 2, true, true, true},
      fuse{n + ".fuse", c / 4 + c / 2, c / 2, 1, 1, false, true, true} {
  if (c % 4 != 0) {
    throw ConfigError("transition up '" + n + "' needs channels divisible by 4, got " +
                      std::to_string(c));
  }
}

void TransitionUp::declare(LayerSpecs& specs) const {
  upsample.declare(specs);
  fuse.declare(specs);
}

template <typename T>
Var TransitionUp::forward(ForwardContext<T>& ctx, Var x, Var skip) const {
  const auto& xs = ctx.tape().value(x).shape();
  const auto& ss = ctx.tape().value(skip).shape();
  const Shape expected{xs.at(0), channels / 2, 2 * xs.at(2), 2 * xs.at(3)};
  if (ss != expected) {
    throw ConfigError("transition up '" + name + "' skip shape " + shape_str(ss) +
                      " does not match expected " + shape_str(expected));
  }
  Var up = upsample.forward(ctx, x);
  return fuse.forward(ctx, concat_channels(ctx.tape(), up, skip));
}

SoftmaxHead::SoftmaxHead(std::string n, std::int64_t c, std::int64_t classes)
    : name(n), conv{n, c, classes, 1, 1, false, false, false} {}

DoubleConv::DoubleConv(std::string n, std::int64_t in, std::int64_t out)
    : name(n),
      conv1{n + ".conv1", in, out, 3, 1, false, true, true},
      conv2{n + ".conv2", out, out, 3, 1, false, true, true} {}

void DoubleConv::declare(LayerSpecs& specs) const {
  conv1.declare(specs);
  conv2.declare(specs);
}

template <typename T>
Var DoubleConv::forward(ForwardContext<T>& ctx, Var x) const {
  return conv2.forward(ctx, conv1.forward(ctx, x));
}

Upsample::Upsample(std::string n, std::int64_t c)
    : name(n), conv{n, c, c / 2, 2, 2, true, false, false} {}

// --- parameter counting ----------------------------------------------------------------

namespace {

template <typename Block>
BlockCount count_of(const Block& block, std::int64_t channels) {
  LayerSpecs specs;
  block.declare(specs);
  return {block.name, block.kind(), channels, specs.parameter_count()};
}

}  // namespace

std::int64_t count_block(BlockKind kind, std::int64_t c, const std::vector<int>& branch_depths) {
  LayerSpecs specs;
  switch (kind) {
    case BlockKind::ResNetBlock: ResNetBlock("b", c).declare(specs); break;
    case BlockKind::ResIncBlock: ResIncBlock("b", c, branch_depths).declare(specs); break;
    case BlockKind::TransitionDown: TransitionDown("b", c).declare(specs); break;
    case BlockKind::TransitionUp: TransitionUp("b", c).declare(specs); break;
    case BlockKind::FusionProjection: TransitionUp("b", c).fuse.declare(specs); break;
    case BlockKind::DoubleConv: DoubleConv("b", c, c).declare(specs); break;
    case BlockKind::Upsample: Upsample("b", c).declare(specs); break;
    case BlockKind::Projection:
    case BlockKind::SoftmaxHead:
      throw ConfigError(std::string(block_kind_name(kind)) +
                        " depends on two channel counts; count it through a NetworkConfig");
  }
  return specs.parameter_count();
}

// --- DeepMRSeg -----------------------------------------------------------------------

DeepMRSegNet::DeepMRSegNet(const NetworkConfig& config)
    : config_((config.validate(), config)),
      projection_("proj", config.in_channels, config.features),
      head_("head", config.features, config.num_classes) {
  for (int i = 0; i < config.pre_encode_blocks; ++i)
    pre_encode_.emplace_back("pre" + std::to_string(i), config.features);
  for (int level = 1; level <= config.depth; ++level) {
    const std::string p = "enc" + std::to_string(level);
    downs_.emplace_back(p + ".down", config.channels_at(level - 1));
    encoders_.emplace_back(p + ".resinc", config.channels_at(level), config.resinc_branch_depths);
  }
  for (int level = config.depth; level >= 1; --level) {
    const std::string p = "dec" + std::to_string(level);
    ups_.emplace_back(p + ".up", config.channels_at(level));
    decoders_.emplace_back(p + ".resinc", config.channels_at(level - 1),
                           config.resinc_branch_depths);
  }
}

LayerSpecs DeepMRSegNet::specs() const {
  LayerSpecs s;
  projection_.declare(s);
  for (const auto& b : pre_encode_) b.declare(s);
  for (std::size_t i = 0; i < downs_.size(); ++i) {
    downs_[i].declare(s);
    encoders_[i].declare(s);
  }
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    ups_[i].declare(s);
    decoders_[i].declare(s);
  }
  head_.declare(s);
  return s;
}

std::vector<BlockCount> DeepMRSegNet::block_counts() const {
  std::vector<BlockCount> out;
  out.push_back(count_of(projection_, config_.in_channels));
  for (const auto& b : pre_encode_) out.push_back(count_of(b, b.channels));
  for (std::size_t i = 0; i < downs_.size(); ++i) {
    out.push_back(count_of(downs_[i], downs_[i].conv.in));
    out.push_back(count_of(encoders_[i], encoders_[i].channels));
  }
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    out.push_back(count_of(ups_[i], ups_[i].channels));
    out.push_back(count_of(decoders_[i], decoders_[i].channels));
  }
  out.push_back(count_of(head_, config_.features));
  return out;
}

std::vector<std::int64_t> DeepMRSegNet::channel_progression() const {
  std::vector<std::int64_t> out{projection_.conv.out};
  for (const auto& e : encoders_) out.push_back(e.channels);
  for (const auto& d : decoders_) out.push_back(d.channels);
  return out;
}

template <typename T>
Var DeepMRSegNet::forward(ForwardContext<T>& ctx, Var x) const {
  Var y = projection_.forward(ctx, x);
  for (const auto& b : pre_encode_) y = b.forward(ctx, y);
  std::vector<Var> skips;
  for (std::size_t i = 0; i < downs_.size(); ++i) {
    skips.push_back(y);
    y = encoders_[i].forward(ctx, downs_[i].forward(ctx, y));
  }
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    y = ups_[i].forward(ctx, y, skips[skips.size() - 1 - i]);
    y = decoders_[i].forward(ctx, y);
  }
  return head_.forward(ctx, y);
}

// --- UNet ----------------------------------------------------------------------------

UNetNet::UNetNet(const NetworkConfig& config)
    : config_((config.validate(), config)), head_("head", config.features, config.num_classes) {
  encoders_.emplace_back("inc", config.in_channels, config.features);
  for (int level = 1; level <= config.depth; ++level)
    encoders_.emplace_back("down" + std::to_string(level), config.channels_at(level - 1),
                           config.channels_at(level));
  for (int level = config.depth; level >= 1; --level) {
    const std::string p = "up" + std::to_string(level);
    ups_.emplace_back(p + ".upsample", config.channels_at(level));
    decoders_.emplace_back(p, config.channels_at(level), config.channels_at(level - 1));
  }
}

LayerSpecs UNetNet::specs() const {
  LayerSpecs s;
  for (const auto& e : encoders_) e.declare(s);
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    ups_[i].declare(s);
    decoders_[i].declare(s);
  }
  head_.declare(s);
  return s;
}

std::vector<BlockCount> UNetNet::block_counts() const {
  std::vector<BlockCount> out;
  for (const auto& e : encoders_) out.push_back(count_of(e, e.conv1.in));
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    out.push_back(count_of(ups_[i], ups_[i].conv.in));
    out.push_back(count_of(decoders_[i], decoders_[i].conv1.in));
  }
  out.push_back(count_of(head_, config_.features));
  return out;
}

template <typename T>
Var UNetNet::forward(ForwardContext<T>& ctx, Var x) const {
  std::vector<Var> skips;
  Var y = encoders_[0].forward(ctx, x);
  for (std::size_t level = 1; level < encoders_.size(); ++level) {
    skips.push_back(y);
    y = encoders_[level].forward(ctx, maxpool2x2(ctx.tape(), y));
  }
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    Var up = ups_[i].forward(ctx, y);
    y = decoders_[i].forward(ctx, concat_channels(ctx.tape(), skips[skips.size() - 1 - i], up));
  }
  return head_.forward(ctx, y);
}

std::vector<BlockCount> count_parameters(Arch arch, const NetworkConfig& config) {
  return arch == Arch::DeepMRSeg ? DeepMRSegNet(config).block_counts()
                                 : UNetNet(config).block_counts();
}

// --- Model -----------------------------------------------------------------------------

namespace {

std::variant<DeepMRSegNet, UNetNet> make_net(Arch arch, const NetworkConfig& config) {
  if (arch == Arch::DeepMRSeg) return DeepMRSegNet(config);
  return UNetNet(config);
}

}  // namespace

template <typename T>
Model<T>::Model(Arch arch, NetworkConfig config)
    : arch_(arch), config_(std::move(config)), net_(make_net(arch, config_)) {
  const LayerSpecs s = specs();
  for (const auto& p : s.params) {
    const T fill = p.role == ParamRole::Gamma ? T{1} : T{0};
    params_.add(p.name, Tensor<T>(p.shape, fill));
  }
  for (const auto& st : s.stats) params_.add_running(st.name, st.channels);
}

template <typename T>
Model<T> Model<T>::initialized(Arch arch, const NetworkConfig& config, std::uint64_t seed) {
  Model model(arch, config);
  std::mt19937_64 rng(seed);
  for (const auto& p : model.specs().params) {
    if (p.role != ParamRole::Weight) continue;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(p.fan_in)));
    auto data = model.params_.get(p.name).mutable_data();
    for (auto& v : data) v = static_cast<T>(dist(rng));
  }
  return model;
}

template <typename T>
LayerSpecs Model<T>::specs() const {
  return std::visit([](const auto& net) { return net.specs(); }, net_);
}

template <typename T>
std::vector<BlockCount> Model<T>::block_counts() const {
  return std::visit([](const auto& net) { return net.block_counts(); }, net_);
}

template <typename T>
void Model<T>::validate_input(const Shape& s) const {
  if (s.size() != 4) throw ConfigError("network input must be NCHW, got " + shape_str(s));
  if (s[1] != config_.in_channels) {
    throw ConfigError("network expects " + std::to_string(config_.in_channels) +
                      " input channels, got " + shape_str(s));
  }
  const auto div = config_.spatial_divisor();
  if (s[2] % div || s[3] % div) {
    throw ConfigError("spatial dims " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                      " are not divisible by 2^depth = " + std::to_string(div));
  }
}

template <typename T>
Var Model<T>::forward(Tape<T>& tape, Var input, Mode mode, bool update_running) {
  validate_input(tape.value(input).shape());
  ForwardContext<T> ctx(tape, params_, mode, update_running);
  return std::visit([&](const auto& net) { return net.forward(ctx, input); }, net_);
}

template <typename T>
Tensor<T> Model<T>::logits(const Tensor<T>& input, Mode mode) {
  Tape<T> tape;
  Var out = forward(tape, tape.input(input), mode);
  return tape.value(out);
}

#define DMRS_INSTANTIATE(T)                                                         \
  template class ForwardContext<T>;                                                 \
  template class Model<T>;                                                          \
  template Var ConvUnit::forward(ForwardContext<T>&, Var) const;                    \
  template Var ResNetBlock::forward(ForwardContext<T>&, Var) const;                 \
  template Var ResIncBlock::forward(ForwardContext<T>&, Var) const;                 \
  template Var TransitionDown::forward(ForwardContext<T>&, Var) const;              \
  template Var TransitionUp::forward(ForwardContext<T>&, Var, Var) const;           \
  template Var DoubleConv::forward(ForwardContext<T>&, Var) const;                  \
  template Var DeepMRSegNet::forward(ForwardContext<T>&, Var) const;                \
  template Var UNetNet::forward(ForwardContext<T>&, Var) const;

DMRS_INSTANTIATE(float)
DMRS_INSTANTIATE(double)
#undef DMRS_INSTANTIATE

}  // namespace dmrs
