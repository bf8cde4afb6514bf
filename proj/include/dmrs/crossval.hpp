#pragma once

// Repeated k-fold cross-validation comparing segmentation models, with
// per-subject and aggregate CSV reports.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmrs/augment.hpp"
#include "dmrs/metrics.hpp"
#include "dmrs/network.hpp"
#include "dmrs/nifti.hpp"
#include "dmrs/train.hpp"

namespace dmrs {

struct CrossValPlan {
  int n_folds = 4;
  int n_repeats = 2;
  std::uint64_t seed = 0;
  std::vector<std::string> subjects;  // run_crossval: empty means every subject given
};

struct FoldSplit {
  int repeat = 0, fold = 0;
  std::vector<std::string> train, test;
};

/// Per repeat, a seeded shuffle dealt into n_folds test sets whose sizes
/// differ by at most one; ValidationError when subjects < folds.
std::vector<FoldSplit> make_crossval_plan(const CrossValPlan& plan);

struct SubjectData {
  std::string id;
  std::vector<Volume> modalities;
  Volume label;
};

struct ModelSpec {
  std::string name;
  Arch arch;
  NetworkConfig config;
};

struct ScoreRow {
  int repeat = 0, fold = 0;
  std::string subject, model;
  RoiScore score;
};

struct AggregateRow {
  std::string roi;  // label value, or "Average"
  std::string model;
  double bacc_mean = 0, bacc_sd = 0, f1_mean = 0, f1_sd = 0, f2_mean = 0, f2_sd = 0, ccc = 0;
};

struct EvalReport {
  std::vector<ScoreRow> scores;
  std::vector<AggregateRow> aggregate;

  /// repeat,fold,subject,model,roi,bacc,f1,f2,volume_pred,volume_true,empty_both
  std::string scores_csv() const;
  /// roi,model,bacc_mean,bacc_sd,f1_mean,f1_sd,f2_mean,f2_sd,ccc
  std::string aggregate_csv() const;
};

/// Sample (n-1) standard deviation; 0 for fewer than two values.
double sample_sd(const std::vector<double>& v);

/// Per ROI and model (in first-seen order): score means and sample SDs, and
/// concordance of predicted vs true volumes pooled over every row; then an
/// "Average" row per model holding the mean over ROIs of each column.
std::vector<AggregateRow> aggregate_scores(const std::vector<ScoreRow>& scores);

struct CrossValOptions {
  int jobs = 1;
  std::optional<int> slice_axis;
  std::function<void(const std::string&)> progress;
};

/// Trains every model on each split's training subjects, predicts the test
/// subjects and scores ROIs 1..num_classes-1. Folds may run on `jobs`
/// threads; rows are merged in (repeat, fold, subject, model, roi) order.
EvalReport run_crossval(const std::vector<SubjectData>& subjects, const std::vector<ModelSpec>& models,
                        const TrainConfig& train, const AugmentConfig& augment, const CrossValPlan& plan,
                        const CrossValOptions& options = {});

}  // namespace dmrs
