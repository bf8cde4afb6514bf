#pragma once

// Seeded synthetic subjects for desk-scale experiments.
//  blobs:   per foreground class, random ellipsoids with a class-specific
//           mean intensity (class k -> k / (C-1)) plus Gaussian noise.
//  lesions: two classes; dark tissue (0.3) with small bright (0.9) ellipsoidal
//           foci, kept apart so each focus is its own connected component.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmrs/nifti.hpp"

namespace dmrs {

enum class SynthKind { Blobs, Lesions };

std::string synth_kind_name(SynthKind kind);
SynthKind parse_synth_kind(const std::string& name);

struct SynthSpec {
  int n_subjects = 8;
  std::array<std::int64_t, 3> dims{64, 64, 16};
  std::array<double, 3> spacing{1.0, 1.0, 3.0};
  std::int64_t num_classes = 3;
  SynthKind kind = SynthKind::Blobs;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  int blobs_per_class = 2;
  int lesion_count_min = 3;
  int lesion_count_max = 6;

  void validate() const;
};

struct SynthSubject {
  Volume image;
  Volume label;
};

/// Intensity assigned to every voxel of class k before noise.
double blob_class_mean(std::int64_t k, std::int64_t num_classes);
inline constexpr double kLesionTissue = 0.3;
inline constexpr double kLesionFocus = 0.9;

std::vector<SynthSubject> generate_synthetic(const SynthSpec& spec);

/// subj{NNN}_img.nii (float32) and subj{NNN}_lbl.nii (uint8).
std::string subject_name(int index);
void write_synthetic(const std::vector<SynthSubject>& subjects, const std::filesystem::path& dir);

struct SubjectFiles {
  std::string id;
  std::filesystem::path image, label;
};

/// Image/label pairs named subj*_img.nii / subj*_lbl.nii, sorted by id.
std::vector<SubjectFiles> list_subjects(const std::filesystem::path& dir);

/// Connected components (26-neighbourhood) of voxels equal to `value`.
int count_components(const Volume& labels, double value);

}  // namespace dmrs
