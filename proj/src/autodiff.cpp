#include "dmrs/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace dmrs {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::ConvTranspose2d: return "conv_transpose2d";
    case OpKind::BatchNorm: return "batchnorm2d";
    case OpKind::Relu: return "relu";
    case OpKind::Softmax: return "softmax_channel";
    case OpKind::Concat: return "concat_channels";
    case OpKind::Add: return "add";
    case OpKind::MaxPool: return "maxpool2x2";
  }
  return "unknown";
}

// --- Tape ----------------------------------------------------------------------

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.index >= nodes_.size()) {
    throw IntegrityError("variable " + std::to_string(v.index) + " is not on this tape");
  }
  return nodes_[v.index];
}

template <typename T>
Var Tape<T>::input(Tensor<T> value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Input;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::parameter(std::string name, const Tensor<T>& tensor) {
  Node n;
  n.kind = OpKind::Parameter;
  n.external = &tensor;
  n.version = tensor.version();
  n.name = std::move(name);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::record(OpKind kind, Tensor<T> value, std::vector<Var> inputs, BackwardFn backward) {
  if (debug_checks_ && !value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(kind) +
                       " (node " + std::to_string(nodes_.size()) + ")");
  }
  Node n;
  n.kind = kind;
  n.owned = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](Var v) { return node(v).requires_grad; });
  n.inputs = std::move(inputs);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : *n.owned;
}

template <typename T>
void Tape<T>::backward(Var output, const Tensor<T>& seed) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.external && n.external->version() != n.version) {
      throw IntegrityError("parameter '" + n.name +
                           "' was modified after being recorded on the tape");
    }
  }
  if (seed.shape() != value(output).shape()) {
    throw IntegrityError("backward seed shape " + shape_str(seed.shape()) +
                         " does not match output " + shape_str(value(output).shape()));
  }
  grads_.assign(nodes_.size(), Tensor<T>{});
  grads_[output.index] = seed;

  for (std::int64_t i = output.index; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    Tensor<T>& upstream = grads_[static_cast<std::size_t>(i)];
    if (upstream.empty() || !n.backward || !n.requires_grad) continue;
    std::vector<bool> needs(n.inputs.size());
    for (std::size_t k = 0; k < n.inputs.size(); ++k) needs[k] = node(n.inputs[k]).requires_grad;
    std::vector<Tensor<T>> gin = n.backward(*this, upstream, needs);
    if (gin.size() != n.inputs.size()) {
      throw IntegrityError(std::string(op_name(n.kind)) + " backward returned " +
                           std::to_string(gin.size()) + " gradients for " +
                           std::to_string(n.inputs.size()) + " inputs");
    }
    for (std::size_t k = 0; k < gin.size(); ++k) {
      if (!needs[k]) continue;
      const Var in = n.inputs[k];
      if (gin[k].shape() != value(in).shape()) {
        throw IntegrityError(std::string(op_name(n.kind)) + " gradient shape " +
                             shape_str(gin[k].shape()) + " does not match input " +
                             shape_str(value(in).shape()));
      }
      Tensor<T>& acc = grads_[in.index];
      if (acc.empty()) {
        acc = std::move(gin[k]);
      } else {
        auto dst = acc.mutable_data();
        const auto src = gin[k].data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
  }
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  node(v);
  static const Tensor<T> kEmpty;
  if (v.index >= grads_.size()) return kEmpty;
  return grads_[v.index];
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Tape<T>::parameter_grads() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != OpKind::Parameter) continue;
    if (i < grads_.size() && !grads_[i].empty()) {
      out.emplace_back(n.name, grads_[i]);
    } else {
      out.emplace_back(n.name, Tensor<T>(n.external->shape()));
    }
  }
  return out;
}

// --- plain helpers -------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T{0} ? in[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> softmax_channel_forward(const Tensor<T>& logits) {
  require_rank4(logits, "softmax_channel input");
  const auto n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (c < 2) throw ConfigError("softmax_channel needs at least 2 channels");
  Tensor<T> out(logits.shape());
  T* o = out.mutable_data().data();
  const T* z = logits.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < n * hw; ++job) {
    const std::int64_t b = job / hw, p = job % hw;
    const T* zp = z + b * c * hw + p;
    T* op = o + b * c * hw + p;
    double mx = zp[0];
    for (std::int64_t k = 1; k < c; ++k) mx = std::max(mx, static_cast<double>(zp[k * hw]));
    double sum = 0.0;
    for (std::int64_t k = 0; k < c; ++k) sum += std::exp(zp[k * hw] - mx);
    for (std::int64_t k = 0; k < c; ++k)
      op[k * hw] = static_cast<T>(std::exp(zp[k * hw] - mx) / sum);
  }
  return out;
}

template <typename T>
Tensor<T> softmax_channel_backward(const Tensor<T>& probs, const Tensor<T>& upstream) {
  const auto n = probs.dim(0), c = probs.dim(1), hw = probs.dim(2) * probs.dim(3);
  Tensor<T> out(probs.shape());
  T* o = out.mutable_data().data();
  const T* p = probs.data().data();
  const T* g = upstream.data().data();
#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < n * hw; ++job) {
    const std::int64_t base = (job / hw) * c * hw + job % hw;
    double dot = 0.0;
    for (std::int64_t k = 0; k < c; ++k)
      dot += static_cast<double>(p[base + k * hw]) * g[base + k * hw];
    for (std::int64_t k = 0; k < c; ++k) {
      const auto i = base + k * hw;
      o[i] = static_cast<T>(p[i] * (g[i] - dot));
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels_forward(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a, "concat_channels lhs");
  require_rank4(b, "concat_channels rhs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ConfigError("concat_channels spatial/batch mismatch: " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
  }
  const auto n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  auto o = out.mutable_data();
  const auto pa = a.data(), pb = b.data();
  for (std::int64_t k = 0; k < n; ++k) {
    std::copy_n(pa.begin() + k * ca * hw, ca * hw, o.begin() + k * (ca + cb) * hw);
    std::copy_n(pb.begin() + k * cb * hw, cb * hw, o.begin() + (k * (ca + cb) + ca) * hw);
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& x) {
  require_rank4(x, "maxpool2x2 input");
  if (x.dim(2) % 2 || x.dim(3) % 2) {
    throw ConfigError("maxpool2x2 needs even spatial dims, got " + shape_str(x.shape()));
  }
  const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1), h / 2, w / 2});
  T* o = out.mutable_data().data();
  const T* in = x.data().data();
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t i = 0; i < h / 2; ++i)
      for (std::int64_t j = 0; j < w / 2; ++j) {
        const T* src = in + p * h * w + 2 * i * w + 2 * j;
        o[(p * (h / 2) + i) * (w / 2) + j] = std::max({src[0], src[1], src[w], src[w + 1]});
      }
  return out;
}

// --- ops -----------------------------------------------------------------------

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var kernel, Var bias, int stride, int pad) {
  Tensor<T> out = kernels::conv2d_forward(tape.value(input), tape.value(kernel), tape.value(bias),
                                          stride, pad);
  return tape.record(
      OpKind::Conv2d, std::move(out), {input, kernel, bias},
      [input, kernel, stride, pad](const Tape<T>& t, const Tensor<T>& up,
                                   const std::vector<bool>& needs) {
        std::vector<Tensor<T>> g(3);
        const Tensor<T>& x = t.value(input);
        const Tensor<T>& w = t.value(kernel);
        if (needs[0]) g[0] = kernels::conv2d_backward_input(up, w, x.shape(), stride, pad);
        if (needs[1] || needs[2]) {
          auto pg = kernels::conv2d_backward_params(up, x, w.shape(), stride, pad);
          g[1] = std::move(pg.weight);
          g[2] = std::move(pg.bias);
        }
        return g;
      });
}

template <typename T>
Var conv_transpose2d(Tape<T>& tape, Var input, Var kernel, Var bias, int stride) {
  Tensor<T> out = kernels::conv_transpose2d_forward(tape.value(input), tape.value(kernel),
                                                    tape.value(bias), stride);
  return tape.record(
      OpKind::ConvTranspose2d, std::move(out), {input, kernel, bias},
      [input, kernel, stride](const Tape<T>& t, const Tensor<T>& up,
                              const std::vector<bool>& needs) {
        std::vector<Tensor<T>> g(3);
        const Tensor<T>& x = t.value(input);
        const Tensor<T>& w = t.value(kernel);
        if (needs[0]) g[0] = kernels::conv_transpose2d_backward_input(up, w, x.shape(), stride);
        if (needs[1] || needs[2]) {
          auto pg = kernels::conv_transpose2d_backward_params(up, x, w.shape(), stride);
          g[1] = std::move(pg.weight);
          g[2] = std::move(pg.bias);
        }
        return g;
      });
}

template <typename T>
Var batchnorm2d(Tape<T>& tape, Var input, Var gamma, Var beta, RunningStats<T>* running,
                Mode mode, BatchNormOptions options) {
  const Tensor<T>& x = tape.value(input);
  auto saved = std::make_shared<kernels::BatchNormSaved>();
  Tensor<T> out;
  if (mode == Mode::Train) {
    out = kernels::batchnorm_forward_train(x, tape.value(gamma), tape.value(beta), options.eps,
                                           *saved);
    if (running) {
      auto m = running->mean.mutable_data();
      auto v = running->var.mutable_data();
      if (static_cast<std::int64_t>(m.size()) != x.dim(1) ||
          static_cast<std::int64_t>(v.size()) != x.dim(1)) {
        throw ConfigError("batchnorm2d running statistics do not match " +
                          std::to_string(x.dim(1)) + " channels");
      }
      const double mom = options.momentum;
      for (std::size_t c = 0; c < m.size(); ++c) {
        m[c] = static_cast<T>((1.0 - mom) * m[c] + mom * saved->mean[c]);
        v[c] = static_cast<T>((1.0 - mom) * v[c] + mom * saved->var[c]);
      }
    }
  } else {
    if (!running) throw ConfigError("batchnorm2d inference mode requires running statistics");
    out = kernels::batchnorm_forward_infer(x, tape.value(gamma), tape.value(beta), running->mean,
                                           running->var, options.eps, *saved);
  }
  const bool train = mode == Mode::Train;
  return tape.record(
      OpKind::BatchNorm, std::move(out), {input, gamma, beta},
      [input, gamma, saved, train](const Tape<T>& t, const Tensor<T>& up,
                                   const std::vector<bool>&) {
        auto bg = kernels::batchnorm_backward(up, t.value(input), t.value(gamma), *saved, train);
        std::vector<Tensor<T>> g;
        g.push_back(std::move(bg.input));
        g.push_back(std::move(bg.gamma));
        g.push_back(std::move(bg.beta));
        return g;
      });
}

template <typename T>
Var relu(Tape<T>& tape, Var input) {
  return tape.record(OpKind::Relu, relu_forward(tape.value(input)), {input},
                     [input](const Tape<T>& t, const Tensor<T>& up, const std::vector<bool>&) {
                       const auto x = t.value(input).data();
                       const auto u = up.data();
                       Tensor<T> g(up.shape());
                       auto gd = g.mutable_data();
                       for (std::size_t i = 0; i < gd.size(); ++i)
                         gd[i] = x[i] > T{0} ? u[i] : T{0};
                       return std::vector<Tensor<T>>{std::move(g)};
                     });
}

template <typename T>
Var softmax_channel(Tape<T>& tape, Var input) {
  Tensor<T> probs = softmax_channel_forward(tape.value(input));
  const auto self = Var{static_cast<std::uint32_t>(tape.size())};
  return tape.record(OpKind::Softmax, std::move(probs), {input},
                     [self](const Tape<T>& t, const Tensor<T>& up, const std::vector<bool>&) {
                       return std::vector<Tensor<T>>{softmax_channel_backward(t.value(self), up)};
                     });
}

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const Shape sa = tape.value(a).shape(), sb = tape.value(b).shape();
  return tape.record(
      OpKind::Concat, concat_channels_forward(tape.value(a), tape.value(b)), {a, b},
      [sa, sb](const Tape<T>&, const Tensor<T>& up, const std::vector<bool>&) {
        const auto n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
        Tensor<T> ga(sa), gb(sb);
        auto da = ga.mutable_data(), db = gb.mutable_data();
        const auto u = up.data();
        for (std::int64_t k = 0; k < n; ++k) {
          std::copy_n(u.begin() + k * (ca + cb) * hw, ca * hw, da.begin() + k * ca * hw);
          std::copy_n(u.begin() + (k * (ca + cb) + ca) * hw, cb * hw, db.begin() + k * cb * hw);
        }
        std::vector<Tensor<T>> g;
        g.push_back(std::move(ga));
        g.push_back(std::move(gb));
        return g;
      });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& x = tape.value(a);
  const Tensor<T>& y = tape.value(b);
  if (x.shape() != y.shape()) {
    throw ConfigError("add shape mismatch: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto px = x.data(), py = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = px[i] + py[i];
  return tape.record(OpKind::Add, std::move(out), {a, b},
                     [](const Tape<T>&, const Tensor<T>& up, const std::vector<bool>&) {
                       return std::vector<Tensor<T>>{up, up};
                     });
}

template <typename T>
Var maxpool2x2(Tape<T>& tape, Var input) {
  return tape.record(
      OpKind::MaxPool, maxpool2x2_forward(tape.value(input)), {input},
      [input](const Tape<T>& t, const Tensor<T>& up, const std::vector<bool>&) {
        const Tensor<T>& x = t.value(input);
        const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> g(x.shape());
        T* gd = g.mutable_data().data();
        const T* in = x.data().data();
        const T* u = up.data().data();
        for (std::int64_t p = 0; p < planes; ++p)
          for (std::int64_t i = 0; i < h / 2; ++i)
            for (std::int64_t j = 0; j < w / 2; ++j) {
              const std::int64_t base = p * h * w + 2 * i * w + 2 * j;
              const std::int64_t cand[4] = {base, base + 1, base + w, base + w + 1};
              std::int64_t best = cand[0];
              for (int k = 1; k < 4; ++k)
                if (in[cand[k]] > in[best]) best = cand[k];
              gd[best] += u[(p * (h / 2) + i) * (w / 2) + j];
            }
        return std::vector<Tensor<T>>{std::move(g)};
      });
}

#define DMRS_INSTANTIATE(T)                                                                   \
  template class Tape<T>;                                                                     \
  template Var conv2d(Tape<T>&, Var, Var, Var, int, int);                                     \
  template Var conv_transpose2d(Tape<T>&, Var, Var, Var, int);                                \
  template Var batchnorm2d(Tape<T>&, Var, Var, Var, RunningStats<T>*, Mode, BatchNormOptions); \
  template Var relu(Tape<T>&, Var);                                                           \
  template Var softmax_channel(Tape<T>&, Var);                                                \
  template Var concat_channels(Tape<T>&, Var, Var);                                           \
  template Var add(Tape<T>&, Var, Var);                                                       \
  template Var maxpool2x2(Tape<T>&, Var);                                                     \
  template Tensor<T> relu_forward(const Tensor<T>&);                                          \
  template Tensor<T> softmax_channel_forward(const Tensor<T>&);                               \
  template Tensor<T> softmax_channel_backward(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> concat_channels_forward(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> maxpool2x2_forward(const Tensor<T>&);

DMRS_INSTANTIATE(float)
DMRS_INSTANTIATE(double)
#undef DMRS_INSTANTIATE

}  // namespace dmrs
