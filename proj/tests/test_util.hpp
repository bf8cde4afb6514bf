#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dmrs/autodiff.hpp"
#include "dmrs/gradcheck.hpp"
#include "dmrs/network.hpp"
#include "dmrs/params.hpp"
#include "dmrs/tensor.hpp"

namespace dmrs::testing {

inline TensorD random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(shape);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.mutable_data()) v = d(rng);
  return t;
}

inline TensorF random_tensor_f(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return random_tensor(shape, rng, lo, hi).cast<float>();
}

inline double max_abs_diff(const TensorD& a, const TensorD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) s += a[i] * b[i];
  return s;
}

using Leaves = std::vector<std::pair<std::string, TensorD>>;
using GraphBuilder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// Finite-difference check of sum(w * build(leaves)) for a fixed random w.
inline GradCheckResult check_graph(const Leaves& leaves, const GraphBuilder& build, std::uint64_t seed = 1,
                                   GradCheckOptions options = {}) {
  ParamStore<double> store;
  for (const auto& [name, t] : leaves) store.add(name, t);
  auto weights = std::make_shared<TensorD>();
  Objective objective = [&, weights](ParamStore<double>& params, GradList<double>* grads) {
    Tape<double> tape;
    std::vector<Var> vars;
    for (const auto& e : params.entries()) vars.push_back(tape.parameter(e.name, e.tensor));
    const Var out = build(tape, vars);
    const TensorD& y = tape.value(out);
    if (weights->empty() || weights->shape() != y.shape()) {
      std::mt19937_64 rng(seed * 7919 + 13);
      *weights = random_tensor(y.shape(), rng);
    }
    if (grads) {
      tape.backward(out, *weights);
      *grads = tape.parameter_grads();
    }
    return dot(y, *weights);
  };
  options.seed = seed;
  return gradient_check(objective, store, options);
}

/// Parameters declared by one network block, drawn at random (gammas near
/// 1), plus default running statistics.
template <typename Block>
ParamStore<double> block_store(const Block& block, std::mt19937_64& rng) {
  LayerSpecs specs;
  block.declare(specs);
  ParamStore<double> store;
  for (const auto& p : specs.params) {
    TensorD t = random_tensor(p.shape, rng, -0.5, 0.5);
    if (p.role == ParamRole::Gamma)
      for (auto& v : t.mutable_data()) v += 1.0;
    store.add(p.name, t);
  }
  for (const auto& s : specs.stats) store.add_running(s.name, s.channels);
  return store;
}

/// Gradient check of a single-input block on a [2,c,4,4] input that is
/// itself checked as a parameter named "x".
template <typename Block>
GradCheckResult check_block(const Block& block, std::int64_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore<double> store = block_store(block, rng);
  store.add("x", random_tensor({2, c, 4, 4}, rng));
  TensorD w;
  Objective obj = [&](ParamStore<double>& params, GradList<double>* grads) {
    Tape<double> tape;
    ForwardContext<double> ctx(tape, params, Mode::Train, false);
    const Var out = block.forward(ctx, ctx.param("x"));
    if (w.empty()) w = random_tensor(tape.value(out).shape(), rng);
    if (grads) {
      tape.backward(out, w);
      *grads = tape.parameter_grads();
    }
    return dot(tape.value(out), w);
  };
  GradCheckOptions opt;
  opt.seed = seed;
  return gradient_check(obj, store, opt);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dmrs_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dmrs::testing
