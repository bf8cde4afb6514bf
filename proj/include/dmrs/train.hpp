#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dmrs/augment.hpp"
#include "dmrs/losses.hpp"
#include "dmrs/network.hpp"
#include "dmrs/optim.hpp"
#include "dmrs/slices.hpp"

namespace dmrs {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double base_lr = 0.05;
  double decay = 0.98;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoint hooks; 0 disables
  AdamOptions adam;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 0-based, the exponent used by lr_at_epoch
  double lr = 0.0;
  LossTerms terms;  // slice-weighted means over the epoch
};

struct TrainLog {
  std::vector<EpochLog> epochs;

  /// "epoch,lr,l_ce,l_mse,l_iou,l_tot" header plus one row per epoch, with
  /// round-trip precision.
  std::string csv() const;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(int epoch, const Model<float>&)> on_checkpoint;
};

/// Per epoch: seeded shuffle, then mini-batches of augment -> forward ->
/// total_loss -> backward -> Adam at lr_at_epoch(epoch). Every pair's
/// augmentation stream is derived from (seed, epoch, slice index), so the
/// run is a pure function of its inputs. A non-finite loss raises
/// NumericError naming the epoch and batch.
TrainLog train_epochs(Model<float>& model, const SliceDataset& data, const TrainConfig& config,
                      const AugmentConfig& augment, const TrainHooks& hooks = {});

/// Infer-mode argmax labels for every slice, in dataset order.
std::vector<LabelMap> predict_slices(Model<float>& model, const SliceDataset& data, int batch_size = 8);

}  // namespace dmrs
