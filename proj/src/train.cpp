#include "dmrs/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "dmrs/rng.hpp"

namespace dmrs {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("base learning rate must be finite and non-negative");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must be in (0, 1]");
  if (checkpoint_every < 0) throw ConfigError("checkpoint cadence must be non-negative");
}

std::string TrainLog::csv() const {
  std::ostringstream os;
  os << "epoch,lr,l_ce,l_mse,l_iou,l_tot\n" << std::setprecision(17);
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.lr << ',' << e.terms.ce << ',' << e.terms.mse << ',' << e.terms.iou << ','
       << e.terms.total << '\n';
  }
  return os.str();
}

namespace {

void check_dataset(const Model<float>& model, const SliceDataset& data, bool need_labels) {
  if (data.empty()) throw ValidationError("dataset has no slices");
  if (need_labels && !data.has_labels()) throw ValidationError("training needs a label for every slice");
  model.validate_input({1, data.channels(), data.height(), data.width()});
}

TensorF stack_images(const std::vector<TensorF>& images) {
  const auto& f = images.front();
  const auto per = f.numel();
  TensorF out({static_cast<std::int64_t>(images.size()), f.dim(0), f.dim(1), f.dim(2)});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < images.size(); ++i)
    std::copy(images[i].data().begin(), images[i].data().end(), o.begin() + static_cast<std::ptrdiff_t>(i * per));
  return out;
}

}  // namespace

TrainLog train_epochs(Model<float>& model, const SliceDataset& data, const TrainConfig& config,
                      const AugmentConfig& augment, const TrainHooks& hooks) {
  config.validate();
  augment.validate();
  check_dataset(model, data, true);
  for (const auto& s : data.slices) {
    for (auto v : s.label.data())
      if (v < 0 || v >= model.config().num_classes) {
        throw ValidationError("slice " + std::to_string(s.index) + " of '" + s.subject + "' has label " +
                              std::to_string(v) + " outside [0, " + std::to_string(model.config().num_classes) +
                              ")");
      }
  }

  OptimizerState state;
  state.options = config.adam;
  TrainLog log;
  const auto n = static_cast<std::int64_t>(data.size());
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, config.base_lr, config.decay);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(stream_seed(config.seed, {0, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossTerms sum;
    int batch_index = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const auto count = std::min<std::int64_t>(config.batch_size, n - start);
      std::vector<TensorF> images(static_cast<std::size_t>(count));
      std::vector<LabelMap> labels(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < count; ++i) {
        const auto idx = order[static_cast<std::size_t>(start + i)];
        const Slice& s = data.slices[static_cast<std::size_t>(idx)];
        std::mt19937_64 rng(stream_seed(config.seed, {1, augment.seed, static_cast<std::uint64_t>(epoch),
                                                      static_cast<std::uint64_t>(idx)}));
        auto [img, lbl] = augment_pair(s.image, s.label, augment, rng);
        images[static_cast<std::size_t>(i)] = std::move(img);
        labels[static_cast<std::size_t>(i)] = std::move(lbl);
      }
      std::vector<const LabelMap*> label_ptrs;
      for (const auto& l : labels) label_ptrs.push_back(&l);
      const TensorF onehot = one_hot_batch<float>(label_ptrs, model.config().num_classes);

      Tape<float> tape;
      const Var x = tape.input(stack_images(images));
      const Var logits = model.forward(tape, x, Mode::Train);
      const TotalLoss<float> loss = total_loss(tape.value(logits), onehot);
      if (!std::isfinite(loss.terms.total) || !loss.grad.all_finite()) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + " (l_ce " + std::to_string(loss.terms.ce) + ", l_mse " +
                           std::to_string(loss.terms.mse) + ", l_iou " + std::to_string(loss.terms.iou) + ")");
      }
      tape.backward(logits, loss.grad);
      adam_step(model.params(), tape.parameter_grads(), state, lr);

      const double w = static_cast<double>(count);
      sum.ce += loss.terms.ce * w;
      sum.mse += loss.terms.mse * w;
      sum.iou += loss.terms.iou * w;
    }

    EpochLog e;
    e.epoch = epoch;
    e.lr = lr;
    e.terms.ce = sum.ce / static_cast<double>(n);
    e.terms.mse = sum.mse / static_cast<double>(n);
    e.terms.iou = sum.iou / static_cast<double>(n);
    e.terms.total = e.terms.ce + e.terms.mse + e.terms.iou;
    log.epochs.push_back(e);
    if (hooks.on_epoch) hooks.on_epoch(e);
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      hooks.on_checkpoint(epoch, model);
    }
  }
  return log;
}

std::vector<LabelMap> predict_slices(Model<float>& model, const SliceDataset& data, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  check_dataset(model, data, false);
  std::vector<LabelMap> out;
  out.reserve(data.size());
  const auto n = static_cast<std::int64_t>(data.size());
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const auto count = std::min<std::int64_t>(batch_size, n - start);
    std::vector<TensorF> images;
    for (std::int64_t i = 0; i < count; ++i) images.push_back(data.slices[static_cast<std::size_t>(start + i)].image);
    auto labels = argmax_channels(model.logits(stack_images(images), Mode::Infer));
    for (auto& l : labels) out.push_back(std::move(l));
  }
  return out;
}

}  // namespace dmrs
