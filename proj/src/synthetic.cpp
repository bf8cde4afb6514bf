#include "dmrs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <regex>

#include "dmrs/errors.hpp"
#include "dmrs/rng.hpp"

namespace dmrs {

std::string synth_kind_name(SynthKind kind) { return kind == SynthKind::Blobs ? "blobs" : "lesions"; }

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "blobs") return SynthKind::Blobs;
  if (name == "lesions") return SynthKind::Lesions;
  throw ConfigError("unknown synthetic kind '" + name + "' (expected blobs or lesions)");
}

void SynthSpec::validate() const {
  if (n_subjects < 1) throw ValidationError("n_subjects must be positive");
  for (auto d : dims)
    if (d < 1) throw ValidationError("synthetic dims must be positive");
  for (auto s : spacing)
    if (!(s > 0.0)) throw ValidationError("synthetic spacing must be positive");
  if (noise_sigma < 0.0) throw ValidationError("noise_sigma must be non-negative");
  if (num_classes < 2 || num_classes > 255) throw ValidationError("num_classes must be in [2, 255]");
  if (kind == SynthKind::Blobs) {
    if (dims[0] < 16 || dims[1] < 16) {
      throw ValidationError("blobs need in-plane dims of at least 16x16, got " + std::to_string(dims[0]) + "x" +
                            std::to_string(dims[1]));
    }
    if (blobs_per_class < 1) throw ValidationError("blobs_per_class must be positive");
  } else {
    if (num_classes != 2) throw ValidationError("lesion datasets have exactly 2 classes");
    if (lesion_count_min < 1 || lesion_count_max < lesion_count_min) {
      throw ValidationError("lesion count range must satisfy 1 <= min <= max");
    }
    if (dims[0] < 8 || dims[1] < 8) {
      throw ValidationError("lesions need in-plane dims of at least 8x8");
    }
  }
}

double blob_class_mean(std::int64_t k, std::int64_t num_classes) {
  return static_cast<double>(k) / static_cast<double>(num_classes - 1);
}

namespace {

struct Box {
  std::array<std::int64_t, 3> lo, hi;  // inclusive

  bool touches(const Box& o) const {
    // a one-voxel gap on some axis keeps two boxes from being 26-adjacent
    for (int a = 0; a < 3; ++a)
      if (hi[a] + 1 < o.lo[a] || o.hi[a] + 1 < lo[a]) return false;
    return true;
  }
};

void paint_ellipsoid(Volume& label, const std::array<double, 3>& centre, const std::array<double, 3>& radius,
                     double value, Box* box) {
  const auto d = label.dims3();
  std::array<std::int64_t, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(centre[a] - radius[a])));
    hi[a] = std::min<std::int64_t>(d[a] - 1, static_cast<std::int64_t>(std::ceil(centre[a] + radius[a])));
  }
  if (box) *box = {lo, hi};
  for (auto z = lo[2]; z <= hi[2]; ++z)
    for (auto y = lo[1]; y <= hi[1]; ++y)
      for (auto x = lo[0]; x <= hi[0]; ++x) {
        const double dx = (x - centre[0]) / radius[0], dy = (y - centre[1]) / radius[1],
                     dz = (z - centre[2]) / radius[2];
        if (dx * dx + dy * dy + dz * dz <= 1.0) label.at(x, y, z) = value;
      }
}

Volume make_volume(const SynthSpec& spec) {
  std::vector<std::int64_t> dims(spec.dims.begin(), spec.dims.end());
  std::vector<double> spacing(spec.spacing.begin(), spec.spacing.end());
  return Volume(dims, spacing);
}

void blobs(const SynthSpec& spec, std::mt19937_64& rng, Volume& label) {
  const auto d = spec.dims;
  auto u = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  for (std::int64_t k = 1; k < spec.num_classes; ++k)
    for (int b = 0; b < spec.blobs_per_class; ++b) {
      std::array<double, 3> r{u(0.10, 0.22) * d[0], u(0.10, 0.22) * d[1],
                              d[2] == 1 ? 1.0 : u(0.35, 0.70) * d[2]};
      std::array<double, 3> c{};
      for (int a = 0; a < 2; ++a) c[a] = u(r[a], static_cast<double>(d[a] - 1) - r[a]);
      c[2] = d[2] == 1 ? 0.0 : u(0.25, 0.75) * static_cast<double>(d[2] - 1);
      paint_ellipsoid(label, c, r, static_cast<double>(k), nullptr);
    }
}

void lesions(const SynthSpec& spec, std::mt19937_64& rng, Volume& label) {
  const auto d = spec.dims;
  auto u = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const int count = std::uniform_int_distribution<int>(spec.lesion_count_min, spec.lesion_count_max)(rng);
  std::vector<Box> placed;
  constexpr int kAttempts = 2000;
  for (int i = 0; i < count; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kAttempts && !ok; ++attempt) {
      const std::array<double, 3> r{u(1.0, 3.0), u(1.0, 3.0), d[2] == 1 ? 0.5 : u(0.5, 1.5)};
      std::array<double, 3> c{};
      for (int a = 0; a < 3; ++a) {
        c[a] = static_cast<double>(std::uniform_int_distribution<std::int64_t>(0, d[a] - 1)(rng));
      }
      Box box{};
      for (int a = 0; a < 3; ++a) {
        box.lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c[a] - r[a])));
        box.hi[a] = std::min<std::int64_t>(d[a] - 1, static_cast<std::int64_t>(std::ceil(c[a] + r[a])));
      }
      if (std::any_of(placed.begin(), placed.end(), [&](const Box& p) { return p.touches(box); })) continue;
      paint_ellipsoid(label, c, r, 1.0, nullptr);
      placed.push_back(box);
      ok = true;
    }
    if (!ok) {
      throw ValidationError("dims " + std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" +
                            std::to_string(d[2]) + " are too small to place " + std::to_string(count) +
                            " separated lesions");
    }
  }
}

}  // namespace

std::vector<SynthSubject> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::vector<SynthSubject> out;
  for (int s = 0; s < spec.n_subjects; ++s) {
    std::mt19937_64 rng(stream_seed(spec.seed, static_cast<std::uint64_t>(s)));
    Volume label = make_volume(spec);
    if (spec.kind == SynthKind::Blobs) {
      blobs(spec, rng, label);
    } else {
      lesions(spec, rng, label);
    }
    Volume image = make_volume(spec);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (std::size_t i = 0; i < image.data.size(); ++i) {
      const auto k = static_cast<std::int64_t>(label.data[i]);
      const double mean = spec.kind == SynthKind::Blobs ? blob_class_mean(k, spec.num_classes)
                                                        : (k ? kLesionFocus : kLesionTissue);
      // round through float so the value is exactly what a float32 file holds
      image.data[i] = static_cast<float>(spec.noise_sigma > 0.0 ? mean + noise(rng) : mean);
    }
    const std::string id = subject_name(s);
    image.subject_id = label.subject_id = id;
    image.modality = "synthetic";
    label.modality = "label";
    out.push_back({std::move(image), std::move(label)});
  }
  return out;
}

std::string subject_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subj%03d", index);
  return buf;
}

void write_synthetic(const std::vector<SynthSubject>& subjects, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  for (const auto& s : subjects) {
    write_nifti(s.image, dir / (s.image.subject_id + "_img.nii"), NiftiType::Float32);
    write_nifti(s.label, dir / (s.label.subject_id + "_lbl.nii"), NiftiType::UInt8);
  }
}

std::vector<SubjectFiles> list_subjects(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  static const std::regex pattern(R"((subj\w*?)_img\.nii)");
  std::map<std::string, SubjectFiles> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    SubjectFiles f{m[1].str(), entry.path(), {}};
    const auto lbl = dir / (f.id + "_lbl.nii");
    if (std::filesystem::exists(lbl)) f.label = lbl;
    found.emplace(f.id, f);
  }
  std::vector<SubjectFiles> out;
  for (auto& [id, f] : found) out.push_back(std::move(f));
  return out;
}

int count_components(const Volume& labels, double value) {
  const auto d = labels.dims3();
  std::vector<char> seen(labels.data.size(), 0);
  std::vector<std::array<std::int64_t, 3>> stack;
  int components = 0;
  for (std::int64_t z = 0; z < d[2]; ++z)
    for (std::int64_t y = 0; y < d[1]; ++y)
      for (std::int64_t x = 0; x < d[0]; ++x) {
        const auto i = labels.index(x, y, z);
        if (seen[i] || labels.data[i] != value) continue;
        ++components;
        seen[i] = 1;
        stack.push_back({x, y, z});
        while (!stack.empty()) {
          const auto p = stack.back();
          stack.pop_back();
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const std::int64_t qx = p[0] + dx, qy = p[1] + dy, qz = p[2] + dz;
                if (qx < 0 || qy < 0 || qz < 0 || qx >= d[0] || qy >= d[1] || qz >= d[2]) continue;
                const auto j = labels.index(qx, qy, qz);
                if (seen[j] || labels.data[j] != value) continue;
                seen[j] = 1;
                stack.push_back({qx, qy, qz});
              }
        }
      }
  return components;
}

}  // namespace dmrs
