#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dmrs/crossval.hpp"
#include "dmrs/synthetic.hpp"

using namespace dmrs;

namespace {

std::vector<std::string> names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(subject_name(i));
  return out;
}

std::vector<SubjectData> tiny_subjects(int n) {
  SynthSpec spec;
  spec.n_subjects = n;
  spec.dims = {16, 16, 2};
  spec.num_classes = 3;
  spec.seed = 3;
  std::vector<SubjectData> out;
  for (auto& s : generate_synthetic(spec)) out.push_back({s.image.subject_id, {s.image}, s.label});
  return out;
}

std::vector<ModelSpec> tiny_models() {
  NetworkConfig cfg;
  cfg.features = 8;
  cfg.depth = 1;
  cfg.num_classes = 3;
  return {{"unet", Arch::UNet, cfg}, {"deepmrseg", Arch::DeepMRSeg, cfg}};
}

}  // namespace

TEST(CrossValPlan, FoldsPartitionSubjects) {
  for (int n : {4, 5, 7, 10, 13}) {
    for (int k : {2, 3, 4}) {
      CrossValPlan plan{k, 3, 17, names(n)};
      const auto splits = make_crossval_plan(plan);
      ASSERT_EQ(splits.size(), static_cast<std::size_t>(3 * k));
      for (int r = 0; r < 3; ++r) {
        std::multiset<std::string> covered;
        std::size_t smallest = n, largest = 0;
        for (const auto& s : splits) {
          if (s.repeat != r) continue;
          covered.insert(s.test.begin(), s.test.end());
          smallest = std::min(smallest, s.test.size());
          largest = std::max(largest, s.test.size());
          EXPECT_EQ(s.train.size() + s.test.size(), static_cast<std::size_t>(n));
          for (const auto& t : s.test) EXPECT_EQ(std::count(s.train.begin(), s.train.end(), t), 0);
        }
        EXPECT_EQ(covered, std::multiset<std::string>(plan.subjects.begin(), plan.subjects.end()));
        EXPECT_LE(largest - smallest, 1u);
      }
    }
  }
}

TEST(CrossValPlan, SeededAndRepeatsDiffer) {
  CrossValPlan plan{4, 2, 5, names(12)};
  const auto a = make_crossval_plan(plan);
  const auto b = make_crossval_plan(plan);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].test, b[i].test);
  EXPECT_NE(a[0].test, a[4].test);
  plan.subjects = names(3);
  EXPECT_THROW(make_crossval_plan(plan), ValidationError);
}

TEST(Aggregate, MeansSdsAndPooledConcordance) {
  std::vector<ScoreRow> rows;
  auto add = [&](const std::string& subject, std::int32_t roi, double f1, double vp, double vt) {
    ScoreRow r;
    r.subject = subject;
    r.model = "m";
    r.score.roi = roi;
    r.score.f1 = f1;
    r.score.f2 = f1 / 2;
    r.score.bacc = 1 - f1 / 4;
    r.score.volume_pred = vp;
    r.score.volume_true = vt;
    rows.push_back(r);
  };
  add("a", 1, 0.5, 0, 1);
  add("b", 1, 0.7, 1, 2);
  add("c", 1, 0.9, 2, 3);
  add("a", 2, 1.0, 5, 5);
  const auto agg = aggregate_scores(rows);
  ASSERT_EQ(agg.size(), 3u);
  EXPECT_EQ(agg[0].roi, "1");
  EXPECT_NEAR(agg[0].f1_mean, 0.7, 1e-15);
  EXPECT_NEAR(agg[0].f1_sd, 0.2, 1e-15);
  EXPECT_NEAR(agg[0].f2_sd, 0.1, 1e-15);
  EXPECT_NEAR(agg[0].ccc, 4.0 / 7.0, 1e-12);
  EXPECT_EQ(agg[1].f1_sd, 0.0);
  EXPECT_TRUE(std::isnan(agg[1].ccc));
  EXPECT_EQ(agg[2].roi, "Average");
  EXPECT_NEAR(agg[2].f1_mean, 0.85, 1e-15);
  EXPECT_EQ(sample_sd({}), 0.0);
  EXPECT_EQ(sample_sd({3.0}), 0.0);
  EXPECT_NEAR(sample_sd({1, 2, 3, 4}), std::sqrt(5.0 / 3.0), 1e-15);
}

TEST(CrossVal, ZeroEpochRunIsWellFormed) {
  const auto subjects = tiny_subjects(4);
  TrainConfig train;
  train.epochs = 0;
  CrossValPlan plan{4, 2, 1, {}};
  const auto report = run_crossval(subjects, tiny_models(), train, AugmentConfig{}, plan);
  // repeats x subjects x models x foreground ROIs.
  ASSERT_EQ(report.scores.size(), 2u * 4 * 2 * 2);
  EXPECT_EQ(report.aggregate.size(), 2u * 3);
  const std::string csv = report.aggregate_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "roi,model,bacc_mean,bacc_sd,f1_mean,f1_sd,f2_mean,f2_sd,ccc");
  std::set<std::pair<int, std::string>> seen;
  for (const auto& r : report.scores) {
    seen.insert({r.repeat, r.subject});
    EXPECT_GE(r.score.f1, 0.0);
    EXPECT_LE(r.score.f1, 1.0);
  }
  EXPECT_EQ(seen.size(), 8u);
  const std::string scores = report.scores_csv();
  EXPECT_EQ(scores.substr(0, scores.find('\n')),
            "repeat,fold,subject,model,roi,bacc,f1,f2,volume_pred,volume_true,empty_both");
}

TEST(CrossVal, ParallelFoldsMatchSerial) {
  const auto subjects = tiny_subjects(4);
  TrainConfig train;
  train.epochs = 1;
  train.batch_size = 4;
  CrossValPlan plan{2, 1, 2, {}};
  CrossValOptions serial, parallel;
  parallel.jobs = 2;
  const auto a = run_crossval(subjects, tiny_models(), train, AugmentConfig{}, plan, serial);
  const auto b = run_crossval(subjects, tiny_models(), train, AugmentConfig{}, plan, parallel);
  EXPECT_EQ(a.scores_csv(), b.scores_csv());
  EXPECT_EQ(a.aggregate_csv(), b.aggregate_csv());
}
