#include "dmrs/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dmrs/rng.hpp"
#include "dmrs/slices.hpp"

namespace dmrs {

std::vector<FoldSplit> make_crossval_plan(const CrossValPlan& plan) {
  if (plan.n_folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (plan.n_repeats < 1) throw ConfigError("cross-validation needs at least 1 repeat");
  const auto n = static_cast<int>(plan.subjects.size());
  if (n < plan.n_folds) {
    throw ValidationError(std::to_string(n) + " subjects cannot fill " + std::to_string(plan.n_folds) + " folds");
  }
  std::vector<FoldSplit> out;
  for (int r = 0; r < plan.n_repeats; ++r) {
    std::vector<std::string> order = plan.subjects;
    std::mt19937_64 rng(stream_seed(plan.seed, {2, static_cast<std::uint64_t>(r)}));
    std::shuffle(order.begin(), order.end(), rng);
    int cursor = 0;
    for (int f = 0; f < plan.n_folds; ++f) {
      const int size = n / plan.n_folds + (f < n % plan.n_folds ? 1 : 0);
      FoldSplit s;
      s.repeat = r;
      s.fold = f;
      for (int i = 0; i < n; ++i) {
        (i >= cursor && i < cursor + size ? s.test : s.train).push_back(order[i]);
      }
      cursor += size;
      out.push_back(std::move(s));
    }
  }
  return out;
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<AggregateRow> aggregate_scores(const std::vector<ScoreRow>& scores) {
  std::vector<std::int32_t> rois;
  std::vector<std::string> models;
  for (const auto& s : scores) {
    if (std::find(rois.begin(), rois.end(), s.score.roi) == rois.end()) rois.push_back(s.score.roi);
    if (std::find(models.begin(), models.end(), s.model) == models.end()) models.push_back(s.model);
  }
  std::sort(rois.begin(), rois.end());

  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  std::vector<AggregateRow> out;
  std::map<std::string, std::vector<AggregateRow>> per_model;
  for (auto roi : rois)
    for (const auto& m : models) {
      std::vector<double> bacc, f1, f2, vp, vt;
      for (const auto& s : scores) {
        if (s.score.roi != roi || s.model != m) continue;
        bacc.push_back(s.score.bacc);
        f1.push_back(s.score.f1);
        f2.push_back(s.score.f2);
        vp.push_back(s.score.volume_pred);
        vt.push_back(s.score.volume_true);
      }
      AggregateRow row;
      row.roi = std::to_string(roi);
      row.model = m;
      row.bacc_mean = mean(bacc);
      row.bacc_sd = sample_sd(bacc);
      row.f1_mean = mean(f1);
      row.f1_sd = sample_sd(f1);
      row.f2_mean = mean(f2);
      row.f2_sd = sample_sd(f2);
      row.ccc = vt.size() >= 2 ? concordance_ccc(vp, vt) : std::nan("");
      out.push_back(row);
      per_model[m].push_back(row);
    }
  for (const auto& m : models) {
    const auto& rows = per_model[m];
    AggregateRow avg;
    avg.roi = "Average";
    avg.model = m;
    auto col = [&](double AggregateRow::*field) {
      std::vector<double> v;
      for (const auto& r : rows) v.push_back(r.*field);
      return mean(v);
    };
    avg.bacc_mean = col(&AggregateRow::bacc_mean);
    avg.bacc_sd = col(&AggregateRow::bacc_sd);
    avg.f1_mean = col(&AggregateRow::f1_mean);
    avg.f1_sd = col(&AggregateRow::f1_sd);
    avg.f2_mean = col(&AggregateRow::f2_mean);
    avg.f2_sd = col(&AggregateRow::f2_sd);
    avg.ccc = col(&AggregateRow::ccc);
    out.push_back(avg);
  }
  return out;
}

std::string EvalReport::scores_csv() const {
  std::ostringstream os;
  os << "repeat,fold,subject,model,roi,bacc,f1,f2,volume_pred,volume_true,empty_both\n" << std::setprecision(17);
  for (const auto& r : scores) {
    const auto& s = r.score;
    os << r.repeat << ',' << r.fold << ',' << r.subject << ',' << r.model << ',' << s.roi << ',' << s.bacc << ','
       << s.f1 << ',' << s.f2 << ',' << s.volume_pred << ',' << s.volume_true << ',' << (s.empty_both ? 1 : 0)
       << '\n';
  }
  return os.str();
}

std::string EvalReport::aggregate_csv() const {
  std::ostringstream os;
  os << "roi,model,bacc_mean,bacc_sd,f1_mean,f1_sd,f2_mean,f2_sd,ccc\n" << std::setprecision(17);
  for (const auto& r : aggregate) {
    os << r.roi << ',' << r.model << ',' << r.bacc_mean << ',' << r.bacc_sd << ',' << r.f1_mean << ',' << r.f1_sd
       << ',' << r.f2_mean << ',' << r.f2_sd << ',' << r.ccc << '\n';
  }
  return os.str();
}

namespace {

[[noreturn]] void rethrow_with_context(const std::string& ctx) {
  try {
    throw;
  } catch (const RangeError& e) {
    throw RangeError(ctx + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(ctx + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + e.what());
  } catch (const IntegrityError& e) {
    throw IntegrityError(ctx + e.what());
  } catch (const NumericError& e) {
    throw NumericError(ctx + e.what());
  } catch (const FormatError& e) {
    throw FormatError(ctx + e.what());
  } catch (const IoError& e) {
    throw IoError(ctx + e.what());
  } catch (const std::exception& e) {
    throw Error(ctx + e.what());
  }
}

std::vector<ScoreRow> run_fold(const FoldSplit& split, const std::map<std::string, const SubjectData*>& by_id,
                               const std::vector<ModelSpec>& models, const TrainConfig& train,
                               const AugmentConfig& augment, std::optional<int> axis) {
  std::vector<ScoreRow> rows;
  std::vector<std::vector<ScoreRow>> per_model(models.size());
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const ModelSpec& spec = models[mi];
    const auto divisor = spec.config.spatial_divisor();
    SliceDataset data;
    for (const auto& id : split.train) {
      const auto* s = by_id.at(id);
      data.append(extract_slices(s->modalities, &s->label, axis, divisor, s->id));
    }
    const std::uint64_t key[] = {static_cast<std::uint64_t>(split.repeat), static_cast<std::uint64_t>(split.fold),
                                 static_cast<std::uint64_t>(mi)};
    TrainConfig cfg = train;
    cfg.seed = stream_seed(train.seed, {3, key[0], key[1], key[2]});
    auto model = Model<float>::initialized(spec.arch, spec.config, stream_seed(train.seed, {4, key[0], key[1], key[2]}));
    train_epochs(model, data, cfg, augment);

    std::vector<std::int32_t> rois;
    for (std::int64_t k = 1; k < spec.config.num_classes; ++k) rois.push_back(static_cast<std::int32_t>(k));
    for (const auto& id : split.test) {
      const auto* s = by_id.at(id);
      const SliceDataset test = extract_slices(s->modalities, nullptr, axis, divisor, s->id);
      const Volume pred = reassemble_labels(predict_slices(model, test), test.geometry.at(s->id));
      const SubjectScores scores = evaluate_subject(pred, s->label, rois, s->label.voxel_volume(), s->id);
      for (const auto& r : scores.rois) per_model[mi].push_back({split.repeat, split.fold, s->id, spec.name, r});
    }
  }
  // order rows by subject, then model, then roi
  for (const auto& id : split.test)
    for (std::size_t mi = 0; mi < models.size(); ++mi)
      for (const auto& r : per_model[mi])
        if (r.subject == id) rows.push_back(r);
  return rows;
}

}  // namespace

EvalReport run_crossval(const std::vector<SubjectData>& subjects, const std::vector<ModelSpec>& models,
                        const TrainConfig& train, const AugmentConfig& augment, const CrossValPlan& plan,
                        const CrossValOptions& options) {
  if (models.empty()) throw ConfigError("cross-validation needs at least one model");
  if (options.jobs < 1) throw ConfigError("jobs must be positive");
  train.validate();
  std::map<std::string, const SubjectData*> by_id;
  for (const auto& s : subjects) {
    if (!by_id.emplace(s.id, &s).second) throw ValidationError("duplicate subject id '" + s.id + "'");
  }
  CrossValPlan resolved = plan;
  if (resolved.subjects.empty())
    for (const auto& s : subjects) resolved.subjects.push_back(s.id);
  for (const auto& id : resolved.subjects) {
    if (!by_id.count(id)) throw ValidationError("plan names unknown subject '" + id + "'");
  }
  const auto splits = make_crossval_plan(resolved);

  std::vector<std::vector<ScoreRow>> results(splits.size());
  std::vector<std::exception_ptr> errors(splits.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&](bool single_threaded_kernels) {
#ifdef _OPENMP
    if (single_threaded_kernels) omp_set_num_threads(1);
#else
    (void)single_threaded_kernels;
#endif
    for (std::size_t i = next++; i < splits.size(); i = next++) {
      const auto& sp = splits[i];
      const std::string ctx = "repeat " + std::to_string(sp.repeat) + ", fold " + std::to_string(sp.fold) + ": ";
      try {
        results[i] = run_fold(sp, by_id, models, train, augment, options.slice_axis);
        if (options.progress) {
          std::lock_guard<std::mutex> lock(progress_mutex);
          options.progress(ctx + "done");
        }
      } catch (...) {
        try {
          rethrow_with_context(ctx);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    }
  };

  const int jobs = std::min<int>(options.jobs, static_cast<int>(splits.size()));
  if (jobs == 1) {
    worker(false);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker, true);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  EvalReport report;
  for (auto& r : results)
    for (auto& row : r) report.scores.push_back(std::move(row));
  report.aggregate = aggregate_scores(report.scores);
  return report;
}

}  // namespace dmrs
