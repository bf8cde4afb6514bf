#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "dmrs/checkpoint.hpp"
#include "dmrs/config_json.hpp"
#include "dmrs/crossval.hpp"
#include "dmrs/errors.hpp"
#include "dmrs/model_gradcheck.hpp"
#include "dmrs/network.hpp"
#include "dmrs/nifti.hpp"
#include "dmrs/slices.hpp"
#include "dmrs/synthetic.hpp"
#include "dmrs/train.hpp"
#include "dmrs/version.hpp"

namespace dmrs::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct NetOpts {
  std::string arch = "deepmrseg";
  std::int64_t features = 8;
  int depth = 2;
  std::int64_t classes = 0;  // 0: infer from data where there is data
};

struct TrainOpts {
  int epochs = 30;
  int batch = 8;
  double lr = 0.05;
  double decay = 0.98;
  bool no_augment = false;
  int checkpoint_every = 0;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out_dir;
  int axis = -1;
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

fs::path ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out-dir is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  return fs::path(dir);
}

/// Resolved configuration, inputs and timestamps written next to outputs.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed) : started_(timestamp()) {
    j_["tool"] = "deepmrseg";
    j_["version"] = kVersion;
    j_["command"] = std::move(command);
    j_["seed"] = seed;
    j_["inputs"] = json::array();
  }
  json& config() { return j_["config"]; }
  void input(const fs::path& p) { j_["inputs"].push_back(p.string()); }
  void write(const fs::path& path) {
    j_["started"] = started_;
    j_["finished"] = timestamp();
    write_text(path, j_.dump(2) + "\n");
  }

 private:
  json j_;
  std::string started_;
};

NetworkConfig make_config(const NetOpts& n, std::int64_t in_channels, std::int64_t classes) {
  NetworkConfig c;
  c.in_channels = in_channels;
  c.features = n.features;
  c.depth = n.depth;
  c.num_classes = classes;
  c.validate();
  return c;
}

json train_json(const TrainConfig& t, const AugmentConfig& a) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"base_lr", t.base_lr},
              {"decay", t.decay},
              {"seed", t.seed},
              {"checkpoint_every", t.checkpoint_every},
              {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}},
              {"augment",
               {{"flip_prob", a.flip_prob},
                {"max_translate_frac", a.max_translate_frac},
                {"max_rotate_deg", a.max_rotate_deg},
                {"brightness_delta", a.brightness_delta},
                {"contrast_range", {a.contrast_min, a.contrast_max}},
                {"seed", a.seed}}}};
}

TrainConfig make_train(const TrainOpts& o, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = o.epochs;
  t.batch_size = o.batch;
  t.base_lr = o.lr;
  t.decay = o.decay;
  t.seed = seed;
  t.checkpoint_every = o.checkpoint_every;
  t.validate();
  return t;
}

AugmentConfig make_augment(const TrainOpts& o, std::uint64_t seed) {
  AugmentConfig a = o.no_augment ? AugmentConfig::identity() : AugmentConfig{};
  a.seed = seed;
  return a;
}

std::optional<int> axis_opt(int axis) {
  if (axis < 0) return std::nullopt;
  return axis;
}

std::vector<SubjectData> load_subjects(const std::string& dir, RunManifest& manifest) {
  if (dir.empty()) throw ConfigError("--data is required");
  std::vector<SubjectData> out;
  for (const auto& f : list_subjects(dir)) {
    if (f.label.empty()) throw IoError("subject '" + f.id + "' has no label file");
    SubjectData s;
    s.id = f.id;
    s.modalities.push_back(read_nifti(f.image));
    s.label = read_nifti(f.label);
    s.label.subject_id = f.id;
    manifest.input(f.image);
    manifest.input(f.label);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ValidationError("no subj*_img.nii / subj*_lbl.nii pairs in '" + dir + "'");
  return out;
}

std::int64_t infer_classes(const std::vector<SubjectData>& subjects) {
  double mx = 0;
  for (const auto& s : subjects)
    for (double v : s.label.data) mx = std::max(mx, v);
  return std::max<std::int64_t>(2, static_cast<std::int64_t>(mx) + 1);
}

void add_net_options(CLI::App* app, NetOpts& n, bool with_arch = true) {
  if (with_arch) {
    app->add_option("--arch", n.arch, "Network architecture")
        ->check(CLI::IsMember({"deepmrseg", "unet"}))
        ->capture_default_str();
  }
  app->add_option("--f", n.features, "Base feature maps (multiple of 4, >= 8)")->capture_default_str();
  app->add_option("--depth", n.depth, "Encoder levels")->capture_default_str();
  app->add_option("--classes", n.classes, "Output classes including background (0: from labels)")
      ->capture_default_str();
}

void add_train_options(CLI::App* app, TrainOpts& t) {
  app->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
  app->add_option("--batch", t.batch, "Mini-batch size in slices")->capture_default_str();
  app->add_option("--lr", t.lr, "Base learning rate")->capture_default_str();
  app->add_option("--decay", t.decay, "Learning-rate decay per epoch")->capture_default_str();
  app->add_flag("--no-augment", t.no_augment, "Disable data augmentation");
}

void add_common(CLI::App* app, Common& c, bool out_dir = true) {
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  if (out_dir) app->add_option("--out-dir", c.out_dir, "Output directory");
}

// ---- subcommands ----------------------------------------------------------

struct SynthOpts {
  std::string kind = "blobs";
  int subjects = 8;
  std::vector<std::int64_t> dims{64, 64, 16};
  std::vector<double> spacing{1.0, 1.0, 3.0};
  std::int64_t classes = 3;
  double noise = 0.05;
  int lesions_min = 3, lesions_max = 6;
};

int run_synth(const SynthOpts& o, const Common& c, std::ostream& out) {
  if (o.dims.size() != 3 || o.spacing.size() != 3) throw ConfigError("--dims and --spacing take three values");
  SynthSpec spec;
  spec.kind = parse_synth_kind(o.kind);
  spec.n_subjects = o.subjects;
  spec.dims = {o.dims[0], o.dims[1], o.dims[2]};
  spec.spacing = {o.spacing[0], o.spacing[1], o.spacing[2]};
  spec.num_classes = spec.kind == SynthKind::Lesions ? 2 : o.classes;
  spec.noise_sigma = o.noise;
  spec.seed = c.seed;
  spec.lesion_count_min = o.lesions_min;
  spec.lesion_count_max = o.lesions_max;
  const fs::path dir = ensure_dir(c.out_dir);
  RunManifest manifest("synth", c.seed);
  const auto subjects = generate_synthetic(spec);
  write_synthetic(subjects, dir);
  manifest.config() = {{"kind", synth_kind_name(spec.kind)},
                       {"n_subjects", spec.n_subjects},
                       {"dims", spec.dims},
                       {"spacing", spec.spacing},
                       {"num_classes", spec.num_classes},
                       {"noise_sigma", spec.noise_sigma},
                       {"blobs_per_class", spec.blobs_per_class},
                       {"lesion_count", {spec.lesion_count_min, spec.lesion_count_max}}};
  manifest.write(dir / "manifest.json");
  out << "wrote " << subjects.size() << " subjects to " << dir.string() << "\n";
  return 0;
}

struct TrainCmd {
  std::string data;
};

int run_train(const TrainCmd& cmd, const NetOpts& n, const TrainOpts& t, const Common& c, std::ostream& out) {
  RunManifest manifest("train", c.seed);
  const auto subjects = load_subjects(cmd.data, manifest);
  const std::int64_t classes = n.classes > 0 ? n.classes : infer_classes(subjects);
  const Arch arch = parse_arch(n.arch);
  const NetworkConfig config = make_config(n, static_cast<std::int64_t>(subjects.front().modalities.size()), classes);
  const TrainConfig train = make_train(t, c.seed);
  const AugmentConfig augment = make_augment(t, c.seed);
  const fs::path dir = ensure_dir(c.out_dir);

  SliceDataset data;
  for (const auto& s : subjects)
    data.append(extract_slices(s.modalities, &s.label, axis_opt(c.axis), config.spatial_divisor(), s.id));

  auto model = Model<float>::initialized(arch, config, c.seed);
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " lr " << e.lr << " l_ce " << e.terms.ce << " l_mse " << e.terms.mse << " l_iou "
        << e.terms.iou << " l_tot " << e.terms.total << "\n";
  };
  hooks.on_checkpoint = [&](int epoch, const Model<float>& m) {
    save_checkpoint(m, dir / ("model_epoch" + std::to_string(epoch) + ".ckpt"));
  };
  const TrainLog log = train_epochs(model, data, train, augment, hooks);
  write_text(dir / "train_log.csv", log.csv());
  save_checkpoint(model, dir / "model.ckpt");

  const auto pred = predict_slices(model, data);
  std::vector<LabelMap> truth;
  for (const auto& s : data.slices) truth.push_back(s.label);
  for (std::int32_t k = 1; k < classes; ++k) {
    out << "train f1 class " << k << " " << f_beta(confusion_counts(pred, truth, k), 1.0) << "\n";
  }

  manifest.config() = {{"arch", arch_name(arch)},
                       {"network", config_to_json(config)},
                       {"train", train_json(train, augment)},
                       {"slice_axis", c.axis},
                       {"slices", data.size()}};
  manifest.write(dir / "manifest.json");
  return 0;
}

struct PredictCmd {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string output;
};

int run_predict(const PredictCmd& p, const Common& c, std::ostream& out) {
  RunManifest manifest("predict", c.seed);
  auto model = load_checkpoint(p.checkpoint);
  manifest.input(p.checkpoint);
  std::vector<Volume> modalities;
  for (const auto& in : p.inputs) {
    modalities.push_back(read_nifti(in));
    manifest.input(in);
  }
  if (static_cast<std::int64_t>(modalities.size()) != model.config().in_channels) {
    throw ConfigError("model expects " + std::to_string(model.config().in_channels) + " input volumes, got " +
                      std::to_string(modalities.size()));
  }
  const std::string id = fs::path(p.inputs.front()).stem().string();
  const SliceDataset data =
      extract_slices(modalities, nullptr, axis_opt(c.axis), model.config().spatial_divisor(), id);
  Volume pred = reassemble_labels(predict_slices(model, data), data.geometry.at(id));
  pred.subject_id = id;
  const fs::path output(p.output);
  if (output.has_parent_path()) ensure_dir(output.parent_path().string());
  write_nifti(pred, output, NiftiType::UInt8);
  manifest.config() = {{"arch", arch_name(model.arch())},
                       {"network", config_to_json(model.config())},
                       {"slice_axis", c.axis},
                       {"output", output.string()}};
  manifest.write(fs::path(output.string() + ".manifest.json"));
  out << "wrote " << output.string() << "\n";
  return 0;
}

struct EvaluateCmd {
  std::vector<std::string> pred, truth;
  std::vector<std::int32_t> rois;
};

int run_evaluate(const EvaluateCmd& e, const Common& c, std::ostream& out) {
  if (e.pred.size() != e.truth.size() || e.pred.empty()) {
    throw ConfigError("--pred and --truth need the same non-zero number of files");
  }
  RunManifest manifest("evaluate", c.seed);
  std::vector<std::pair<Volume, Volume>> pairs;
  std::set<std::int32_t> present;
  for (std::size_t i = 0; i < e.pred.size(); ++i) {
    Volume p = read_nifti(e.pred[i]);
    Volume t = read_nifti(e.truth[i]);
    manifest.input(e.pred[i]);
    manifest.input(e.truth[i]);
    if (p.dims != t.dims) throw ValidationError("'" + e.pred[i] + "' and '" + e.truth[i] + "' differ in dims");
    for (double v : t.data)
      if (v > 0) present.insert(static_cast<std::int32_t>(v));
    pairs.emplace_back(std::move(p), std::move(t));
  }
  std::vector<std::int32_t> rois = e.rois;
  if (rois.empty()) rois.assign(present.begin(), present.end());
  if (rois.empty()) throw ValidationError("no ROI labels given and none found in the truth volumes");

  EvalReport report;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [p, t] = pairs[i];
    const std::string id = fs::path(e.truth[i]).stem().string();
    const SubjectScores s = evaluate_subject(p, t, rois, t.voxel_volume(), id);
    for (const auto& r : s.rois) report.scores.push_back({0, 0, id, "prediction", r});
  }
  report.aggregate = aggregate_scores(report.scores);
  if (!c.out_dir.empty()) {
    const fs::path dir = ensure_dir(c.out_dir);
    write_text(dir / "evaluation_scores.csv", report.scores_csv());
    write_text(dir / "evaluation_summary.csv", report.aggregate_csv());
    manifest.config() = {{"rois", rois}};
    manifest.write(dir / "manifest.json");
  }
  out << report.aggregate_csv();
  return 0;
}

struct CrossvalCmd {
  std::string data;
  std::vector<std::string> models{"unet", "deepmrseg"};
  int folds = 4;
  int repeats = 2;
  int jobs = 1;
};

int run_crossval_cmd(const CrossvalCmd& cv, const NetOpts& n, const TrainOpts& t, const Common& c,
                     std::ostream& out, std::ostream& err) {
  RunManifest manifest("crossval", c.seed);
  const auto subjects = load_subjects(cv.data, manifest);
  const std::int64_t classes = n.classes > 0 ? n.classes : infer_classes(subjects);
  const NetworkConfig config = make_config(n, static_cast<std::int64_t>(subjects.front().modalities.size()), classes);
  std::vector<ModelSpec> models;
  for (const auto& m : cv.models) models.push_back({m, parse_arch(m), config});
  const TrainConfig train = make_train(t, c.seed);
  const AugmentConfig augment = make_augment(t, c.seed);
  const fs::path dir = ensure_dir(c.out_dir);

  CrossValPlan plan;
  plan.n_folds = cv.folds;
  plan.n_repeats = cv.repeats;
  plan.seed = c.seed;
  for (const auto& s : subjects) plan.subjects.push_back(s.id);
  const auto splits = make_crossval_plan(plan);
  std::ostringstream plan_csv;
  plan_csv << "repeat,fold,subject,role\n";
  for (const auto& s : splits) {
    for (const auto& id : s.test) plan_csv << s.repeat << ',' << s.fold << ',' << id << ",test\n";
    for (const auto& id : s.train) plan_csv << s.repeat << ',' << s.fold << ',' << id << ",train\n";
  }
  write_text(dir / "crossval_plan.csv", plan_csv.str());

  CrossValOptions options;
  options.jobs = cv.jobs;
  options.slice_axis = axis_opt(c.axis);
  options.progress = [&err](const std::string& msg) { err << msg << "\n"; };
  const EvalReport report = run_crossval(subjects, models, train, augment, plan, options);
  write_text(dir / "crossval_scores.csv", report.scores_csv());
  write_text(dir / "crossval_summary.csv", report.aggregate_csv());

  manifest.config() = {{"network", config_to_json(config)},
                       {"models", cv.models},
                       {"train", train_json(train, augment)},
                       {"folds", cv.folds},
                       {"repeats", cv.repeats},
                       {"jobs", cv.jobs},
                       {"slice_axis", c.axis}};
  manifest.write(dir / "manifest.json");
  out << report.aggregate_csv();
  return 0;
}

struct GradcheckCmd {
  std::int64_t size = 0;
  std::int64_t batch = 2;
  std::int64_t coords = 48;
  double tol = 1e-4;
  double h = 1e-5;
};

int run_gradcheck(const GradcheckCmd& g, const NetOpts& n, const Common& c, std::ostream& out) {
  RunManifest manifest("gradcheck", c.seed);
  const Arch arch = parse_arch(n.arch);
  const NetworkConfig config = make_config(n, 1, n.classes > 0 ? n.classes : 2);
  ModelCheckOptions options;
  options.batch = g.batch;
  options.size = g.size;
  options.check.h = g.h;
  options.check.tol = g.tol;
  options.check.coords_per_tensor = g.coords;
  const GradCheckResult r = check_model_gradients(arch, config, c.seed, options);
  out << "arch " << arch_name(arch) << " f " << config.features << " depth " << config.depth << "\n";
  out << "coordinates checked: " << r.coordinates_checked << "\n";
  out << "max relative error: " << std::scientific << std::setprecision(3) << r.max_relative_error
      << std::defaultfloat << " (at " << r.worst_parameter << "[" << r.worst_index << "])\n";
  out << (r.pass ? "PASS" : "FAIL") << " (tol " << g.tol << ")\n";
  if (!c.out_dir.empty()) {
    manifest.config() = {{"arch", arch_name(arch)},       {"network", config_to_json(config)},
                         {"batch", g.batch},              {"size", g.size},
                         {"coords_per_tensor", g.coords}, {"tol", g.tol},
                         {"h", g.h},                      {"max_relative_error", r.max_relative_error}};
    manifest.write(ensure_dir(c.out_dir) / "manifest.json");
  }
  return r.pass ? 0 : 1;
}

int run_params(const NetOpts& n, const Common& c, std::ostream& out) {
  RunManifest manifest("params", c.seed);
  const Arch arch = parse_arch(n.arch);
  const NetworkConfig config = make_config(n, 1, n.classes > 0 ? n.classes : 2);
  const auto blocks = count_parameters(arch, config);
  out << "block,kind,channels,parameters\n";
  std::int64_t total = 0;
  for (const auto& b : blocks) {
    out << b.name << ',' << block_kind_name(b.kind) << ',' << b.channels << ',' << b.parameters << "\n";
    total += b.parameters;
  }
  out << "total,,," << total << "\n";

  if (arch == Arch::DeepMRSeg) {
    std::set<std::int64_t> widths{config.features};
    for (const auto& b : blocks)
      if (b.kind == BlockKind::ResIncBlock) widths.insert(b.channels);
    bool all = true;
    for (auto w : widths) {
      const auto inc = count_block(BlockKind::ResIncBlock, w, config.resinc_branch_depths);
      const auto res = count_block(BlockKind::ResNetBlock, w);
      const bool below = 3 * inc < res;
      all = all && below;
      out << "c=" << w << ": ResInc " << inc << " / ResNet " << res << " = " << std::fixed << std::setprecision(4)
          << static_cast<double>(inc) / static_cast<double>(res) << std::defaultfloat
          << (below ? " < 1/3" : " >= 1/3") << "\n";
    }
    out << "verdict: ResInc has " << (all ? "less than" : "NOT less than")
        << " one-third the parameters of a ResNet block at every width\n";
  }
  if (!c.out_dir.empty()) {
    manifest.config() = {{"arch", arch_name(arch)}, {"network", config_to_json(config)}, {"total", total}};
    manifest.write(ensure_dir(c.out_dir) / "manifest.json");
  }
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const IntegrityError*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DeepMRSeg segmentation toolkit", "deepmrseg"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  NetOpts net;
  TrainOpts train;
  Common common;

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  s->add_option("--kind", synth.kind, "blobs or lesions")->capture_default_str();
  s->add_option("--subjects", synth.subjects, "Number of subjects")->capture_default_str();
  s->add_option("--dims", synth.dims, "Volume dims X Y Z")->expected(3)->capture_default_str();
  s->add_option("--spacing", synth.spacing, "Voxel spacing in mm")->expected(3)->capture_default_str();
  s->add_option("--classes", synth.classes, "Classes including background (blobs)")->capture_default_str();
  s->add_option("--noise", synth.noise, "Gaussian noise sigma")->capture_default_str();
  s->add_option("--lesions-min", synth.lesions_min, "Minimum lesions per subject")->capture_default_str();
  s->add_option("--lesions-max", synth.lesions_max, "Maximum lesions per subject")->capture_default_str();
  add_common(s, common);

  TrainCmd train_cmd;
  auto* t = app.add_subcommand("train", "Train one model on a dataset directory");
  t->add_option("--data", train_cmd.data, "Directory of subj*_img.nii / subj*_lbl.nii")->required();
  add_net_options(t, net);
  add_train_options(t, train);
  t->add_option("--checkpoint-every", train.checkpoint_every, "Epochs between checkpoints (0: final only)");
  t->add_option("--axis", common.axis, "Slice axis (default: coarsest spacing)");
  add_common(t, common);

  PredictCmd predict;
  auto* p = app.add_subcommand("predict", "Segment a volume with a trained checkpoint");
  p->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  p->add_option("--input", predict.inputs, "Input volume(s), one per modality")->required();
  p->add_option("--output", predict.output, "Output label NIfTI")->required();
  p->add_option("--axis", common.axis, "Slice axis (default: coarsest spacing)");
  add_common(p, common, false);

  EvaluateCmd evaluate;
  auto* e = app.add_subcommand("evaluate", "Score predicted label volumes against ground truth");
  e->add_option("--pred", evaluate.pred, "Predicted label volumes")->required();
  e->add_option("--truth", evaluate.truth, "Ground-truth label volumes, same order")->required();
  e->add_option("--rois", evaluate.rois, "ROI label values (default: all non-zero truth labels)")->delimiter(',');
  add_common(e, common);

  CrossvalCmd crossval;
  auto* cv = app.add_subcommand("crossval", "Repeated k-fold comparison of UNet and DeepMRSeg");
  cv->add_option("--data", crossval.data, "Directory of subj*_img.nii / subj*_lbl.nii")->required();
  cv->add_option("--models", crossval.models, "Architectures to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"deepmrseg", "unet"}))
      ->capture_default_str();
  add_net_options(cv, net, false);
  add_train_options(cv, train);
  cv->add_option("--folds", crossval.folds, "Folds per repeat")->capture_default_str();
  cv->add_option("--repeats", crossval.repeats, "Randomised repeats")->capture_default_str();
  cv->add_option("--jobs", crossval.jobs, "Folds trained concurrently")->capture_default_str();
  cv->add_option("--axis", common.axis, "Slice axis (default: coarsest spacing)");
  add_common(cv, common);

  GradcheckCmd gradcheck;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of a whole network");
  add_net_options(g, net);
  g->add_option("--size", gradcheck.size, "Input extent (0: 2 * 2^depth)")->capture_default_str();
  g->add_option("--batch", gradcheck.batch, "Batch size")->capture_default_str();
  g->add_option("--coords", gradcheck.coords, "Sampled coordinates per tensor")->capture_default_str();
  g->add_option("--tol", gradcheck.tol, "Relative error tolerance")->capture_default_str();
  g->add_option("--step", gradcheck.h, "Central-difference step")->capture_default_str();
  add_common(g, common);

  auto* pa = app.add_subcommand("params", "Per-block learnable parameter counts");
  add_net_options(pa, net);
  add_common(pa, common);

  std::vector<const char*> argv{"deepmrseg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 1;
  }

  try {
    if (s->parsed()) return run_synth(synth, common, out);
    if (t->parsed()) return run_train(train_cmd, net, train, common, out);
    if (p->parsed()) return run_predict(predict, common, out);
    if (e->parsed()) return run_evaluate(evaluate, common, out);
    if (cv->parsed()) return run_crossval_cmd(crossval, net, train, common, out, err);
    if (g->parsed()) return run_gradcheck(gradcheck, net, common, out);
    if (pa->parsed()) return run_params(net, common, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
  err << app.help();
  return 1;
}

}  // namespace dmrs::cli
