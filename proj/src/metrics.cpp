#include "dmrs/metrics.hpp"

#include <cmath>

namespace dmrs {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion_counts(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                                 std::int32_t roi) {
  if (pred.size() != truth.size()) {
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " voxels, truth has " +
                          std::to_string(truth.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == roi, t = truth[i] == roi;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ConfusionCounts confusion_counts(const Volume& pred, const Volume& truth, std::int32_t roi) {
  if (pred.dims != truth.dims) throw ValidationError("prediction and truth volumes differ in dims");
  ConfusionCounts c;
  const double r = roi;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] == r, t = truth.data[i] == r;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ConfusionCounts confusion_counts(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& truth,
                                 std::int32_t roi) {
  if (pred.size() != truth.size()) {
    throw ValidationError(std::to_string(pred.size()) + " predicted slices vs " + std::to_string(truth.size()) +
                          " truth slices");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].shape() != truth[i].shape()) {
      throw ValidationError("slice " + std::to_string(i) + " shapes differ: " + shape_str(pred[i].shape()) +
                            " vs " + shape_str(truth[i].shape()));
    }
    c += confusion_counts(pred[i].data(), truth[i].data(), roi);
  }
  return c;
}

double f_beta(const ConfusionCounts& c, double beta) {
  if (c.empty_both()) return 1.0;
  const double b2 = beta * beta;
  const double num = (1.0 + b2) * static_cast<double>(c.tp);
  return num / (num + b2 * static_cast<double>(c.fn) + static_cast<double>(c.fp));
}

double balanced_accuracy(const ConfusionCounts& c) {
  const auto ratio = [](std::int64_t a, std::int64_t b) {
    return a + b == 0 ? 1.0 : static_cast<double>(a) / static_cast<double>(a + b);
  };
  return (ratio(c.tp, c.fn) + ratio(c.tn, c.fp)) / 2.0;
}

double concordance_ccc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError("concordance needs equal lengths, got " + std::to_string(x.size()) + " and " +
                          std::to_string(y.size()));
  }
  if (x.size() < 2) throw ValidationError("concordance needs at least two pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cov = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cov += dx * dy;
  }
  vx /= n;
  vy /= n;
  cov /= n;
  if (vx == 0.0 && vy == 0.0) return mx == my ? 1.0 : 0.0;
  if (vx == 0.0 || vy == 0.0) return 0.0;
  // 2 rho sx sy == 2 cov
  return 2.0 * cov / (vx + vy + (mx - my) * (mx - my));
}

SubjectScores evaluate_subject(const Volume& pred, const Volume& truth, const std::vector<std::int32_t>& rois,
                               double voxel_volume, const std::string& subject) {
  SubjectScores out;
  out.subject = subject.empty() ? truth.subject_id : subject;
  for (auto roi : rois) {
    const ConfusionCounts c = confusion_counts(pred, truth, roi);
    RoiScore s;
    s.roi = roi;
    s.bacc = balanced_accuracy(c);
    s.f1 = f_beta(c, 1.0);
    s.f2 = f_beta(c, 2.0);
    s.volume_pred = static_cast<double>(c.tp + c.fp) * voxel_volume;
    s.volume_true = static_cast<double>(c.tp + c.fn) * voxel_volume;
    s.empty_both = c.empty_both();
    out.rois.push_back(s);
  }
  return out;
}

}  // namespace dmrs
