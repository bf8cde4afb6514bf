#pragma once

// Uncompressed single-file NIfTI-1 (.nii) reading and writing. Only the
// datatypes uint8, int16 and float32 are accepted; orientation fields are
// carried along as metadata and never used to resample.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dmrs {

struct Orientation {
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float qfac = 1.0f;
  std::array<float, 3> quatern{0, 0, 0};  // b, c, d
  std::array<float, 3> qoffset{0, 0, 0};
  std::array<float, 4> srow_x{0, 0, 0, 0};
  std::array<float, 4> srow_y{0, 0, 0, 0};
  std::array<float, 4> srow_z{0, 0, 0, 0};

  friend bool operator==(const Orientation&, const Orientation&) = default;
};

/// Voxel values in stored order with the first axis fastest. Values are kept
/// as double so every supported datatype (after slope/intercept) is exact.
struct Volume {
  std::vector<std::int64_t> dims;  // (X,Y) or (X,Y,Z)
  std::vector<double> spacing;     // mm, one per axis
  std::vector<double> data;
  std::string subject_id;
  std::string modality;
  Orientation orientation;

  Volume() = default;
  Volume(std::vector<std::int64_t> dims, std::vector<double> spacing, double fill = 0.0);

  std::int64_t numel() const;
  /// Dims padded with 1 to three axes.
  std::array<std::int64_t, 3> dims3() const;
  std::array<double, 3> spacing3() const;
  double voxel_volume() const;
  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z = 0) const;
  double at(std::int64_t x, std::int64_t y, std::int64_t z = 0) const { return data[index(x, y, z)]; }
  double& at(std::int64_t x, std::int64_t y, std::int64_t z = 0) { return data[index(x, y, z)]; }

  /// Dims >= 1, spacing > 0 and finite, data length == product of dims.
  void validate() const;
};

enum class NiftiType : std::int16_t { UInt8 = 2, Int16 = 4, Float32 = 16 };

Volume read_nifti(const std::filesystem::path& path);

/// Writes vox_offset 352, scl_slope 1, scl_inter 0. UInt8 requires integer
/// values in [0, 255] (RangeError otherwise); Float32 requires values that
/// fit a float.
void write_nifti(const Volume& volume, const std::filesystem::path& path, NiftiType type);

}  // namespace dmrs
