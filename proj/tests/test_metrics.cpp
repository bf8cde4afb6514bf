#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmrs/metrics.hpp"

using namespace dmrs;

namespace {

struct Brute {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

Brute brute(const std::vector<std::int32_t>& p, const std::vector<std::int32_t>& t, std::int32_t roi) {
  Brute b;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pp = p[i] == roi, tt = t[i] == roi;
    if (pp && tt) ++b.tp;
    else if (pp) ++b.fp;
    else if (tt) ++b.fn;
    else ++b.tn;
  }
  return b;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Metrics, HandCases) {
  ConfusionCounts c{.tp = 2, .tn = 10, .fp = 1, .fn = 1};
  EXPECT_NEAR(f_beta(c, 1.0), 2.0 / 3.0, 1e-12);
  ConfusionCounts d{.tp = 1, .tn = 3, .fp = 0, .fn = 1};
  EXPECT_NEAR(f_beta(d, 2.0), 5.0 / 9.0, 1e-12);
  EXPECT_NEAR(balanced_accuracy(d), (0.5 + 1.0) / 2, 1e-12);
}

TEST(Metrics, EmptyRoiConventions) {
  ConfusionCounts none{.tp = 0, .tn = 5, .fp = 0, .fn = 0};
  EXPECT_TRUE(none.empty_both());
  EXPECT_EQ(f_beta(none, 1.0), 1.0);
  EXPECT_EQ(f_beta(none, 2.0), 1.0);
  EXPECT_EQ(balanced_accuracy(none), 1.0);
  ConfusionCounts missed{.tp = 0, .tn = 5, .fp = 0, .fn = 3};
  EXPECT_EQ(f_beta(missed, 1.0), 0.0);
  EXPECT_EQ(balanced_accuracy(missed), 0.5);
}

TEST(Metrics, CountsMatchBruteForceOnRandomPairs) {
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<int> len(1, 300), labels(2, 5);
  for (int trial = 0; trial < 150; ++trial) {
    const int n = len(rng), k = labels(rng);
    std::uniform_int_distribution<std::int32_t> pick(0, k - 1);
    std::vector<std::int32_t> p(n), t(n);
    for (int i = 0; i < n; ++i) p[i] = pick(rng), t[i] = pick(rng);
    for (std::int32_t roi = 0; roi < k; ++roi) {
      const Brute b = brute(p, t, roi);
      const ConfusionCounts c = confusion_counts(p, t, roi);
      ASSERT_EQ(c.tp, b.tp);
      ASSERT_EQ(c.tn, b.tn);
      ASSERT_EQ(c.fp, b.fp);
      ASSERT_EQ(c.fn, b.fn);
      if (b.tp + b.fp + b.fn == 0) continue;
      const double tp = static_cast<double>(b.tp), fp = static_cast<double>(b.fp), fn = static_cast<double>(b.fn),
                   tn = static_cast<double>(b.tn);
      EXPECT_EQ(f_beta(c, 1.0), 2 * tp / (2 * tp + fp + fn));
      EXPECT_EQ(f_beta(c, 2.0), 5 * tp / (5 * tp + 4 * fn + fp));
      const double tpr = b.tp + b.fn ? tp / (tp + fn) : 1.0;
      const double tnr = b.tn + b.fp ? tn / (tn + fp) : 1.0;
      EXPECT_EQ(balanced_accuracy(c), (tpr + tnr) / 2);
      // Set form: 2|P n T| / (|P| + |T|).
      EXPECT_EQ(f_beta(c, 1.0), 2 * tp / ((tp + fp) + (tp + fn)));
    }
  }
}

TEST(Metrics, OverloadsAgree) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int32_t> pick(0, 2);
  Volume a({5, 4, 3}, {1, 1, 2}), b({5, 4, 3}, {1, 1, 2});
  std::vector<std::int32_t> pa, pb;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    pa.push_back(pick(rng));
    pb.push_back(pick(rng));
    a.data[i] = pa.back();
    b.data[i] = pb.back();
  }
  std::vector<LabelMap> ma, mb;
  for (int z = 0; z < 3; ++z) {
    ma.emplace_back(Shape{4, 5}, std::vector<std::int32_t>(pa.begin() + 20 * z, pa.begin() + 20 * (z + 1)));
    mb.emplace_back(Shape{4, 5}, std::vector<std::int32_t>(pb.begin() + 20 * z, pb.begin() + 20 * (z + 1)));
  }
  for (std::int32_t roi = 0; roi < 3; ++roi) {
    EXPECT_EQ(confusion_counts(a, b, roi), confusion_counts(pa, pb, roi));
    EXPECT_EQ(confusion_counts(ma, mb, roi), confusion_counts(pa, pb, roi));
  }
  EXPECT_THROW(confusion_counts(std::vector<std::int32_t>{1, 2}, std::vector<std::int32_t>{1}, 1), ValidationError);
}

TEST(Concordance, HandCases) {
  const std::vector<double> x{0, 1, 2}, y{1, 2, 3};
  EXPECT_NEAR(concordance_ccc(x, y), 4.0 / 7.0, 1e-12);
  EXPECT_EQ(concordance_ccc(x, x), 1.0);
  const std::vector<double> c{2, 2, 2}, c2{3, 3, 3};
  EXPECT_EQ(concordance_ccc(c, c), 1.0);
  EXPECT_EQ(concordance_ccc(c, c2), 0.0);
  EXPECT_EQ(concordance_ccc(x, c), 0.0);
  EXPECT_THROW(concordance_ccc(std::vector<double>{1.0}, std::vector<double>{1.0}), ValidationError);
  EXPECT_THROW(concordance_ccc(x, std::vector<double>{1, 2}), ValidationError);
}

TEST(Concordance, BoundedByPearsonAndSymmetric) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> d(0, 1);
  std::uniform_int_distribution<int> len(2, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = len(rng);
    std::vector<double> x(n), y(n);
    const double shift = d(rng), scale = 1 + std::abs(d(rng));
    for (int i = 0; i < n; ++i) {
      x[i] = d(rng);
      y[i] = scale * (x[i] + 0.5 * d(rng)) + shift;
    }
    const double ccc = concordance_ccc(x, y);
    EXPECT_LE(std::abs(ccc), std::abs(pearson(x, y)) + 1e-12);
    EXPECT_NEAR(ccc, concordance_ccc(y, x), 1e-15);
    EXPECT_LE(std::abs(ccc), 1.0 + 1e-12);
  }
}

TEST(Metrics, EvaluateSubjectScalesVolumes) {
  Volume t({4, 1, 1}, {1, 1, 1}), p({4, 1, 1}, {1, 1, 1});
  t.data = {1, 1, 0, 2};
  p.data = {1, 0, 0, 2};
  const auto s = evaluate_subject(p, t, {1, 2, 3}, 2.5, "s");
  ASSERT_EQ(s.rois.size(), 3u);
  EXPECT_EQ(s.rois[0].volume_true, 5.0);
  EXPECT_EQ(s.rois[0].volume_pred, 2.5);
  EXPECT_NEAR(s.rois[0].f1, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(s.rois[1].f1, 1.0);
  EXPECT_TRUE(s.rois[2].empty_both);
  EXPECT_EQ(s.rois[2].f1, 1.0);
}
