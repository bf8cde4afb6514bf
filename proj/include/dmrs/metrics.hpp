#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmrs/nifti.hpp"
#include "dmrs/tensor.hpp"

namespace dmrs {

struct ConfusionCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
  /// The ROI is absent from both prediction and truth.
  bool empty_both() const { return tp + fp + fn == 0; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// One-vs-rest counts for label `roi`; ValidationError on length mismatch.
ConfusionCounts confusion_counts(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                                 std::int32_t roi);
ConfusionCounts confusion_counts(const Volume& pred, const Volume& truth, std::int32_t roi);
/// Summed over paired label maps.
ConfusionCounts confusion_counts(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& truth,
                                 std::int32_t roi);

/// (1+b^2)TP / ((1+b^2)TP + b^2 FN + FP); 1 when TP = FP = FN = 0.
double f_beta(const ConfusionCounts& c, double beta);

/// (TPR + TNR) / 2, a ratio with zero denominator counting as 1.
double balanced_accuracy(const ConfusionCounts& c);

/// Lin's concordance correlation with population variances. Both variances
/// zero: 1 when the means agree, else 0. Exactly one zero: 0.
double concordance_ccc(std::span<const double> x, std::span<const double> y);

struct RoiScore {
  std::int32_t roi = 0;
  double bacc = 0, f1 = 0, f2 = 0;
  double volume_pred = 0, volume_true = 0;  // mm^3
  bool empty_both = false;
};

struct SubjectScores {
  std::string subject;
  std::vector<RoiScore> rois;
};

SubjectScores evaluate_subject(const Volume& pred, const Volume& truth, const std::vector<std::int32_t>& rois,
                               double voxel_volume, const std::string& subject = "");

}  // namespace dmrs
