#include "dmrs/model_gradcheck.hpp"

#include <random>

#include "dmrs/losses.hpp"
#include "dmrs/rng.hpp"
#include "dmrs/slices.hpp"

namespace dmrs {

GradCheckResult check_model_gradients(Arch arch, const NetworkConfig& config, std::uint64_t seed,
                                      const ModelCheckOptions& options) {
  config.validate();
  const std::int64_t size = options.size > 0 ? options.size : 2 * config.spatial_divisor();
  auto model = Model<double>::initialized(arch, config, stream_seed(seed, 0));

  std::mt19937_64 rng(stream_seed(seed, 1));
  std::uniform_real_distribution<double> value(0.0, 1.0);
  std::uniform_int_distribution<std::int32_t> label(0, static_cast<std::int32_t>(config.num_classes - 1));
  TensorD input({options.batch, config.in_channels, size, size});
  for (auto& v : input.mutable_data()) v = value(rng);
  std::vector<LabelMap> labels;
  for (std::int64_t b = 0; b < options.batch; ++b) {
    LabelMap l({size, size});
    for (auto& v : l.mutable_data()) v = label(rng);
    labels.push_back(std::move(l));
  }
  std::vector<const LabelMap*> ptrs;
  for (const auto& l : labels) ptrs.push_back(&l);
  const TensorD onehot = one_hot_batch<double>(ptrs, config.num_classes);

  const Objective objective = [&](ParamStore<double>&, GradList<double>* grads) {
    Tape<double> tape;
    const Var x = tape.input(input);
    const Var logits = model.forward(tape, x, Mode::Train, /*update_running=*/false);
    const TotalLoss<double> loss = total_loss(tape.value(logits), onehot);
    if (grads) {
      tape.backward(logits, loss.grad);
      *grads = tape.parameter_grads();
    }
    return loss.terms.total;
  };
  GradCheckOptions check = options.check;
  check.seed = stream_seed(seed, 2);
  return gradient_check(objective, model.params(), check);
}

}  // namespace dmrs
