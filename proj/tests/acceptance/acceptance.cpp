// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; the exit code is 1 when any selected
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../test_util.hpp"
#include "dmrs/augment.hpp"
#include "dmrs/checkpoint.hpp"
#include "dmrs/crossval.hpp"
#include "dmrs/losses.hpp"
#include "dmrs/metrics.hpp"
#include "dmrs/model_gradcheck.hpp"
#include "dmrs/nifti.hpp"
#include "dmrs/optim.hpp"
#include "dmrs/synthetic.hpp"
#include "dmrs/train.hpp"

using namespace dmrs;
using dmrs::testing::check_graph;
using dmrs::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TensorD random_onehot(const Shape& shape, std::mt19937_64& rng) {
  TensorD y(shape, 0.0);
  const std::int64_t n = shape[0], c = shape[1], plane = shape[2] * shape[3];
  std::uniform_int_distribution<std::int64_t> pick(0, c - 1);
  auto data = y.mutable_data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t i = 0; i < plane; ++i) data[(b * c + pick(rng)) * plane + i] = 1.0;
  return y;
}

// --- 1 ----------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  double worst = 0;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    worst = std::max(worst, r.max_relative_error);
    o.check(r.pass && r.max_relative_error <= 1e-4,
            name + " max rel err " + fmt(r.max_relative_error) + " at " + r.worst_parameter);
  };

  for (int k : {1, 3})
    for (int s : {1, 2}) {
      record("conv2d k=" + std::to_string(k) + " s=" + std::to_string(s),
             check_graph({{"x", random_tensor({2, 3, 6, 6}, rng)},
                          {"w", random_tensor({4, 3, k, k}, rng)},
                          {"b", random_tensor({4}, rng)}},
                         [k, s](Tape<double>& t, const std::vector<Var>& v) {
                           return conv2d(t, v[0], v[1], v[2], s, k / 2);
                         }));
    }
  for (int k : {1, 2}) {
    record("conv_transpose2d k=" + std::to_string(k),
           check_graph({{"x", random_tensor({2, 4, 3, 3}, rng)},
                        {"w", random_tensor({4, 2, k, k}, rng)},
                        {"b", random_tensor({2}, rng)}},
                       [](Tape<double>& t, const std::vector<Var>& v) {
                         return conv_transpose2d(t, v[0], v[1], v[2], 2);
                       }));
  }
  const dmrs::testing::Leaves bn_leaves{{"x", random_tensor({3, 2, 3, 3}, rng)},
                                        {"gamma", random_tensor({2}, rng, 0.5, 1.5)},
                                        {"beta", random_tensor({2}, rng)}};
  record("batchnorm train", check_graph(bn_leaves, [](Tape<double>& t, const std::vector<Var>& v) {
           return batchnorm2d<double>(t, v[0], v[1], v[2], nullptr, Mode::Train);
         }));
  RunningStats<double> stats{random_tensor({2}, rng), random_tensor({2}, rng, 0.5, 2.0)};
  record("batchnorm infer", check_graph(bn_leaves, [&stats](Tape<double>& t, const std::vector<Var>& v) {
           return batchnorm2d<double>(t, v[0], v[1], v[2], &stats, Mode::Infer);
         }));
  record("relu", check_graph({{"x", random_tensor({2, 3, 4, 4}, rng)}},
                             [](Tape<double>& t, const std::vector<Var>& v) { return relu(t, v[0]); }));
  record("softmax", check_graph({{"x", random_tensor({2, 3, 4, 4}, rng, -2, 2)}},
                                [](Tape<double>& t, const std::vector<Var>& v) { return softmax_channel(t, v[0]); }));

  // Softmax followed by each loss term, checked against the logits.
  const TensorD y = random_onehot({2, 3, 3, 3}, rng);
  const std::vector<std::pair<std::string, std::function<double(const TensorD&, TensorD*)>>> terms{
      {"cross-entropy",
       [&](const TensorD& z, TensorD* g) {
         auto l = cross_entropy_loss(z, y);
         if (g) *g = l.grad;
         return l.value;
       }},
      {"mse",
       [&](const TensorD& z, TensorD* g) {
         const TensorD p = softmax_channel_forward(z);
         auto l = mse_loss(p, y);
         if (g) *g = softmax_channel_backward(p, l.grad);
         return l.value;
       }},
      {"soft-iou",
       [&](const TensorD& z, TensorD* g) {
         const TensorD p = softmax_channel_forward(z);
         auto l = soft_iou_loss(p, y);
         if (g) *g = softmax_channel_backward(p, l.grad);
         return l.value;
       }},
      {"total",
       [&](const TensorD& z, TensorD* g) {
         auto l = total_loss(z, y);
         if (g) *g = l.grad;
         return l.terms.total;
       }},
  };
  for (const auto& [name, fn] : terms) {
    ParamStore<double> store;
    store.add("z", random_tensor({2, 3, 3, 3}, rng, -2, 2));
    Objective obj = [&fn = fn](ParamStore<double>& p, GradList<double>* grads) {
      TensorD g;
      const double v = fn(p.get("z"), grads ? &g : nullptr);
      if (grads) *grads = {{"z", g}};
      return v;
    };
    record("softmax+" + name, gradient_check(obj, store));
  }

  record("ResNet block", dmrs::testing::check_block(ResNetBlock("res", 8), 8, 2));
  record("ResInc block", dmrs::testing::check_block(ResIncBlock("inc", 8, {0, 1, 2, 3}), 8, 3));

  NetworkConfig cfg;
  cfg.features = 8;
  cfg.depth = 1;
  cfg.num_classes = 3;
  record("DeepMRSeg f=8 depth=1", check_model_gradients(Arch::DeepMRSeg, cfg, 7));

  const double secs = seconds_since(t0);
  o.check(secs < 120, "runtime " + fmt(secs) + " s exceeds 2 minutes");
  o.note("max relative error " + fmt(worst) + ", " + fmt(secs, "%.1f") + " s");
  return o;
}

// --- 2 ----------------------------------------------------------------------------

Outcome parameter_ratio() {
  Outcome o;
  for (std::int64_t c : {16, 32, 64}) {
    const std::int64_t q = c / 4;
    const std::int64_t resnet_oracle = 2 * (9 * c * c + 3 * c);
    const std::int64_t resinc_oracle = 4 * (c * q + 3 * q) + 6 * (9 * q * q + 3 * q) + (c * c + 3 * c);
    const auto inc = count_block(BlockKind::ResIncBlock, c);
    const auto res = count_block(BlockKind::ResNetBlock, c);
    o.check(inc == resinc_oracle, "ResInc count at c=" + std::to_string(c));
    o.check(res == resnet_oracle, "ResNet count at c=" + std::to_string(c));
    o.check(3 * inc < res, "ratio below 1/3 at c=" + std::to_string(c));
    o.note("c=" + std::to_string(c) + ": " + std::to_string(inc) + "/" + std::to_string(res) + " = " +
           fmt(static_cast<double>(inc) / static_cast<double>(res), "%.4f"));
  }
  o.check(count_block(BlockKind::ResIncBlock, 16) == 1544 && count_block(BlockKind::ResNetBlock, 16) == 4704,
          "c=16 counts 1544 vs 4704");
  return o;
}

// --- 3 ----------------------------------------------------------------------------

Outcome shape_laws() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> quarter(2, 8), half(1, 4), batch(1, 2);
  int blocks = 0, nets = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::int64_t c = 4 * quarter(rng), n = batch(rng), h = 2 * half(rng), w = 2 * half(rng);
    TransitionDown down("down", c);
    auto ds = dmrs::testing::block_store(down, rng);
    Tape<double> t1;
    ForwardContext<double> c1(t1, ds, Mode::Train);
    const Var y = down.forward(c1, t1.input(random_tensor({n, c, h, w}, rng)));
    o.check(t1.value(y).shape() == Shape{n, 2 * c, h / 2, w / 2}, "transition down shape " +
                                                                       shape_str(t1.value(y).shape()));

    TransitionUp up("up", c);
    auto us = dmrs::testing::block_store(up, rng);
    Tape<double> t2;
    ForwardContext<double> c2(t2, us, Mode::Train);
    const Var coarse = t2.input(random_tensor({n, c, h, w}, rng));
    const Var skip = t2.input(random_tensor({n, c / 2, 2 * h, 2 * w}, rng));
    const Var upsampled = up.upsample.forward(c2, coarse);
    o.check(t2.value(upsampled).dim(2) == 2 * h && t2.value(upsampled).dim(3) == 2 * w,
            "transition up doubles spatial dims");
    const Var fused = up.forward(c2, coarse, skip);
    o.check(t2.value(fused).shape() == Shape{n, c / 2, 2 * h, 2 * w}, "transition up fused shape");
    ++blocks;
  }

  std::uniform_int_distribution<int> fq(2, 5), depth(1, 3), m(1, 3), classes(2, 5), mult(1, 2);
  std::bernoulli_distribution pick_unet(0.5);
  for (int trial = 0; trial < 60; ++trial) {
    NetworkConfig cfg;
    cfg.features = 4 * fq(rng);
    cfg.depth = depth(rng);
    cfg.in_channels = m(rng);
    cfg.num_classes = classes(rng);
    const Arch arch = pick_unet(rng) ? Arch::UNet : Arch::DeepMRSeg;
    const std::int64_t div = cfg.spatial_divisor(), h = div * mult(rng), w = div * mult(rng), n = batch(rng);
    auto model = Model<float>::initialized(arch, cfg, rng());
    const TensorF out = model.logits(random_tensor({n, cfg.in_channels, h, w}, rng).cast<float>());
    o.check(out.shape() == Shape{n, cfg.num_classes, h, w},
            arch_name(arch) + " f=" + std::to_string(cfg.features) + " depth=" + std::to_string(cfg.depth));
    ++nets;
  }
  const double secs = seconds_since(t0);
  o.check(secs < 60, "runtime " + fmt(secs) + " s exceeds 1 minute");
  o.note(std::to_string(blocks) + " block configs, " + std::to_string(nets) + " network configs, " +
         fmt(secs, "%.1f") + " s");
  return o;
}

// --- 4 ----------------------------------------------------------------------------

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> extent(2, 12), classes(2, 4);
  int pairs = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const std::int64_t x = extent(rng), y = extent(rng), z = extent(rng);
    const int k = classes(rng);
    std::uniform_int_distribution<int> pick(0, k - 1);
    Volume pred({x, y, z}, {1, 1, 1}), truth({x, y, z}, {1, 1, 1});
    for (std::size_t i = 0; i < pred.data.size(); ++i) pred.data[i] = pick(rng), truth.data[i] = pick(rng);
    for (int roi = 1; roi < k; ++roi) {
      std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
      for (std::int64_t zz = 0; zz < z; ++zz)
        for (std::int64_t yy = 0; yy < y; ++yy)
          for (std::int64_t xx = 0; xx < x; ++xx) {
            const bool p = pred.at(xx, yy, zz) == roi, t = truth.at(xx, yy, zz) == roi;
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
            tn += !p && !t;
          }
      const ConfusionCounts c = confusion_counts(pred, truth, roi);
      o.check(c.tp == tp && c.tn == tn && c.fp == fp && c.fn == fn, "confusion counts");
      if (tp + fp + fn == 0) continue;
      const double dtp = static_cast<double>(tp), dfp = static_cast<double>(fp), dfn = static_cast<double>(fn),
                   dtn = static_cast<double>(tn);
      o.check(f_beta(c, 1) == 2 * dtp / (2 * dtp + dfp + dfn), "F1 brute force");
      o.check(f_beta(c, 2) == 5 * dtp / (5 * dtp + 4 * dfn + dfp), "F2 brute force");
      const double tpr = tp + fn ? dtp / (dtp + dfn) : 1.0, tnr = tn + fp ? dtn / (dtn + dfp) : 1.0;
      o.check(balanced_accuracy(c) == (tpr + tnr) / 2, "BACC brute force");
    }
    ++pairs;
  }
  o.check(std::abs(f_beta({.tp = 2, .tn = 0, .fp = 1, .fn = 1}, 1) - 2.0 / 3.0) <= 1e-12, "F1 hand case");
  o.check(std::abs(f_beta({.tp = 1, .tn = 0, .fp = 0, .fn = 1}, 2) - 5.0 / 9.0) <= 1e-12, "F2 hand case");
  const std::vector<double> a{0, 1, 2}, b{1, 2, 3};
  const double ccc = concordance_ccc(a, b);
  o.check(std::abs(ccc - 4.0 / 7.0) <= 1e-12, "ccc hand case " + fmt(ccc, "%.17g"));
  o.check(concordance_ccc(a, a) == 1.0, "ccc(x, x) = 1");
  o.note(std::to_string(pairs) + " random volume pairs, ccc([0,1,2],[1,2,3]) = " + fmt(ccc, "%.15f"));
  return o;
}

// --- 5 ----------------------------------------------------------------------------

Outcome loss_identities() {
  Outcome o;
  std::mt19937_64 rng(5);
  const TensorD y = random_onehot({2, 3, 4, 4}, rng);
  o.check(mse_loss(y, y).value == 0.0, "perfect prediction mse = 0");
  o.check(std::abs(soft_iou_loss(y, y).value) <= 1e-12, "perfect prediction soft IoU = 0");
  TensorD saturated = y;
  for (auto& v : saturated.mutable_data()) v *= 40.0;
  const double ce_sat = cross_entropy_loss(saturated, y).value;
  o.check(ce_sat <= 1e-6, "saturating logits ce " + fmt(ce_sat));
  const TensorD p_sat = softmax_channel_forward(saturated);
  o.check(mse_loss(p_sat, y).value <= 1e-12 && soft_iou_loss(p_sat, y).value <= 1e-12,
          "saturating logits mse and soft IoU");

  double worst_uniform = 0;
  for (std::int64_t c : {2, 3, 4, 7}) {
    const TensorD yc = random_onehot({1, c, 3, 3}, rng);
    const double ce = cross_entropy_loss(TensorD({1, c, 3, 3}, 0.25), yc).value;
    worst_uniform = std::max(worst_uniform, std::abs(ce - std::log(static_cast<double>(c))));
  }
  o.check(worst_uniform <= 1e-9, "uniform logits give ln C (" + fmt(worst_uniform) + ")");

  // Single class, p = [0.5, 0.5, 0.5, 0.5] against y = [1, 1, 0, 0].
  const TensorD p({1, 1, 1, 4}, 0.5), t({1, 1, 1, 4}, std::vector<double>{1, 1, 0, 0});
  const double iou = soft_iou_loss(p, t).value;
  double inter = 0, uni = 0;
  for (int i = 0; i < 4; ++i) {
    inter += p[i] * t[i];
    uni += p[i] + t[i] - p[i] * t[i];
  }
  const double by_formula = 1.0 - (inter + 1e-6) / (uni + 1e-6);
  o.check(std::abs(iou - by_formula) <= 1e-12, "soft IoU disagrees with I/U substitution");
  o.check(std::abs(iou - 0.6) <= 1e-9, "soft IoU hand case pinned at 0.6, got " + fmt(iou, "%.9f") + " (I=" +
                                           fmt(inter) + ", U=" + fmt(uni) + ")");
  o.note("soft IoU hand case " + fmt(iou, "%.9f"));

  for (int trial = 0; trial < 20; ++trial) {
    const TensorD z = random_tensor({2, 3, 4, 4}, rng, -4, 4);
    const auto l = total_loss(z, y);
    o.check(l.terms.total == l.terms.ce + l.terms.mse + l.terms.iou, "total equals the sum of terms");
  }
  return o;
}

// --- 6 ----------------------------------------------------------------------------

double foreground_f1(Model<float>& model, const SliceDataset& data, std::int64_t classes) {
  const auto preds = predict_slices(model, data);
  std::vector<LabelMap> truth;
  for (const auto& s : data.slices) truth.push_back(s.label);
  double sum = 0;
  for (std::int32_t k = 1; k < classes; ++k) sum += f_beta(confusion_counts(preds, truth, k), 1.0);
  return sum / static_cast<double>(classes - 1);
}

Outcome desk_scale_learning() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;
  spec.n_subjects = 10;
  spec.dims = {64, 64, 20};
  spec.num_classes = 3;
  spec.seed = 2024;
  SliceDataset data;
  for (const auto& s : generate_synthetic(spec))
    data.append(extract_slices({s.image}, &s.label, std::nullopt, 4, s.image.subject_id));
  o.check(data.size() == 200, "dataset has " + std::to_string(data.size()) + " slices");

  NetworkConfig net;
  net.features = 8;
  net.depth = 2;
  net.num_classes = 3;
  TrainConfig train;
  train.epochs = 30;
  train.base_lr = 0.05;
  train.decay = 0.98;
  train.seed = 6;

  for (const auto& [arch, floor] : std::vector<std::pair<Arch, double>>{{Arch::DeepMRSeg, 0.90}, {Arch::UNet, 0.85}}) {
    const auto start = std::chrono::steady_clock::now();
    auto model = Model<float>::initialized(arch, net, 11);
    const auto log = train_epochs(model, data, train, AugmentConfig{});
    const double f1 = foreground_f1(model, data, net.num_classes);
    o.check(f1 >= floor, arch_name(arch) + " F1 " + fmt(f1, "%.4f") + " below " + fmt(floor));
    o.note(arch_name(arch) + " F1 " + fmt(f1, "%.4f") + " (floor " + fmt(floor, "%.2f") + "), final loss " +
           fmt(log.epochs.back().terms.total, "%.4f") + ", " + fmt(seconds_since(start), "%.0f") + " s");
  }
  const double secs = seconds_since(t0);
  o.check(secs <= 15 * 60, "runtime " + fmt(secs, "%.0f") + " s exceeds 15 minutes");
  o.note("total " + fmt(secs, "%.0f") + " s");
  return o;
}

// --- 7 ----------------------------------------------------------------------------

Outcome protocol_fidelity() {
  Outcome o;
  SynthSpec spec;
  spec.n_subjects = 9;
  spec.dims = {16, 16, 2};
  spec.num_classes = 3;
  spec.seed = 7;
  std::vector<SubjectData> subjects;
  std::vector<std::string> ids;
  for (auto& s : generate_synthetic(spec)) {
    ids.push_back(s.image.subject_id);
    subjects.push_back({s.image.subject_id, {s.image}, s.label});
  }
  CrossValPlan plan{4, 2, 8, ids};
  const auto splits = make_crossval_plan(plan);
  o.check(splits.size() == 8, "4 folds x 2 repeats");
  for (int r = 0; r < plan.n_repeats; ++r) {
    std::multiset<std::string> covered;
    for (const auto& s : splits) {
      if (s.repeat != r) continue;
      covered.insert(s.test.begin(), s.test.end());
      for (const auto& t : s.test)
        o.check(std::find(s.train.begin(), s.train.end(), t) == s.train.end(), "test subject in training set");
    }
    o.check(covered == std::multiset<std::string>(ids.begin(), ids.end()),
            "repeat " + std::to_string(r) + " test sets partition the subjects");
  }

  NetworkConfig cfg;
  cfg.features = 8;
  cfg.depth = 1;
  cfg.num_classes = 3;
  TrainConfig train;
  train.epochs = 1;
  train.batch_size = 4;
  const auto report = run_crossval(subjects, {{"unet", Arch::UNet, cfg}, {"deepmrseg", Arch::DeepMRSeg, cfg}}, train,
                                   AugmentConfig{}, plan);
  std::map<std::pair<int, std::string>, std::set<int>> folds_seen;
  for (const auto& row : report.scores) folds_seen[{row.repeat, row.subject}].insert(row.fold);
  o.check(folds_seen.size() == 2 * ids.size(), "every subject scored once per repeat");
  for (const auto& [key, folds] : folds_seen) o.check(folds.size() == 1, "subject tested in one fold per repeat");

  std::istringstream csv(report.aggregate_csv());
  std::string header, line;
  std::getline(csv, header);
  o.check(header == "roi,model,bacc_mean,bacc_sd,f1_mean,f1_sd,f2_mean,f2_sd,ccc", "aggregate header " + header);
  std::set<std::pair<std::string, std::string>> cells;
  while (std::getline(csv, line)) {
    const auto roi = line.substr(0, line.find(','));
    const auto rest = line.substr(line.find(',') + 1);
    cells.insert({roi, rest.substr(0, rest.find(','))});
    o.check(std::count(line.begin(), line.end(), ',') == 8, "row has 9 columns");
  }
  const std::set<std::pair<std::string, std::string>> expected{
      {"1", "unet"}, {"1", "deepmrseg"}, {"2", "unet"}, {"2", "deepmrseg"}, {"Average", "unet"}, {"Average", "deepmrseg"}};
  o.check(cells == expected, "aggregate rows are ROI x model plus averages");
  o.note(std::to_string(splits.size()) + " splits, " + std::to_string(report.scores.size()) + " score rows, " +
         std::to_string(cells.size()) + " aggregate rows");
  return o;
}

// --- 8 ----------------------------------------------------------------------------

Outcome schedule() {
  Outcome o;
  const double e0 = lr_at_epoch(0, 0.05, 0.98), e1 = lr_at_epoch(1, 0.05, 0.98), e10 = lr_at_epoch(10, 0.05, 0.98);
  o.check(std::abs(e0 - 0.05) <= 1e-12, "epoch 0");
  o.check(std::abs(e1 - 0.049) <= 1e-12, "epoch 1");
  o.check(std::abs(e10 - 0.05 * std::pow(0.98, 10)) <= 1e-12, "epoch 10");
  o.note(fmt(e0, "%.12g") + ", " + fmt(e1, "%.12g") + ", " + fmt(e10, "%.12g"));
  return o;
}

// --- 9 ----------------------------------------------------------------------------

Outcome determinism_and_round_trips() {
  Outcome o;
  const auto dir = dmrs::testing::temp_dir("acceptance_9");
  SynthSpec spec;
  spec.n_subjects = 2;
  spec.dims = {16, 16, 4};
  spec.num_classes = 3;
  spec.seed = 9;
  const auto subjects = generate_synthetic(spec);
  SliceDataset data;
  for (const auto& s : subjects) data.append(extract_slices({s.image}, &s.label, std::nullopt, 4, s.image.subject_id));

  NetworkConfig cfg;
  cfg.features = 8;
  cfg.depth = 1;
  cfg.num_classes = 3;
  TrainConfig train;
  train.epochs = 3;
  train.batch_size = 4;
  train.seed = 12;
  std::vector<std::string> logs;
  for (int run = 0; run < 2; ++run) {
    auto model = Model<float>::initialized(Arch::DeepMRSeg, cfg, 13);
    logs.push_back(train_epochs(model, data, train, AugmentConfig{}).csv());
    save_checkpoint(model, dir / ("run" + std::to_string(run) + ".ckpt"));
  }
  o.check(logs[0] == logs[1], "training logs identical");
  o.check(slurp(dir / "run0.ckpt") == slurp(dir / "run1.ckpt"), "checkpoints identical");

  auto loaded = load_checkpoint(dir / "run0.ckpt");
  save_checkpoint(loaded, dir / "again.ckpt");
  o.check(slurp(dir / "run0.ckpt") == slurp(dir / "again.ckpt"), "checkpoint round trip");

  for (const auto& [name, vol, type] : std::vector<std::tuple<std::string, Volume, NiftiType>>{
           {"img", subjects[0].image, NiftiType::Float32}, {"lbl", subjects[0].label, NiftiType::UInt8}}) {
    write_nifti(vol, dir / (name + ".nii"), type);
    const Volume back = read_nifti(dir / (name + ".nii"));
    o.check(back.data == vol.data && back.dims == vol.dims && back.spacing == vol.spacing, name + " NIfTI values");
    write_nifti(back, dir / (name + "2.nii"), type);
    o.check(slurp(dir / (name + ".nii")) == slurp(dir / (name + "2.nii")), name + " NIfTI bytes");
  }

  const TensorF& img = data.slices[0].image;
  const LabelMap& lbl = data.slices[0].label;
  AugmentDraw flip;
  flip.flip = true;
  o.check(warp_image(warp_image(img, flip, Interp::Bilinear), flip, Interp::Bilinear) == img, "image flip twice");
  o.check(warp_labels(warp_labels(lbl, flip), flip) == lbl, "label flip twice");
  std::mt19937_64 rng(1);
  const auto [same_img, same_lbl] = augment_pair(img, lbl, AugmentConfig::identity(), rng);
  o.check(same_img == img && same_lbl == lbl, "zero-magnitude augmentation");
  o.note("3-epoch logs and checkpoints compared byte for byte");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"parameter ratio", parameter_ratio},
      {"shape laws", shape_laws},
      {"metric oracles", metric_oracles},
      {"loss identities", loss_identities},
      {"desk-scale learning", desk_scale_learning},
      {"cross-validation protocol", protocol_fidelity},
      {"learning-rate schedule", schedule},
      {"determinism and round trips", determinism_and_round_trips},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion numbers 1-" << criteria.size() << "]\n";
      return 2;
    }
    selected.insert(n);
  }

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << number << " " << criteria[i].first;
    for (const auto& n : o.notes) std::cout << " | " << n;
    std::cout << std::endl;
  }
  return all ? 0 : 1;
}
