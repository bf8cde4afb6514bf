#include "dmrs/nifti.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "dmrs/errors.hpp"

namespace dmrs {

namespace {

constexpr std::int32_t kHeaderSize = 348;
constexpr std::int64_t kVoxOffset = 352;

namespace off {
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t srow_y = 296;
constexpr std::size_t srow_z = 312;
constexpr std::size_t magic = 344;
}  // namespace off

template <typename T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_.data() + offset, sizeof(T));
    return swap_ ? byteswap_value(v) : v;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  bool swap_;
};

class Writer {
 public:
  explicit Writer(std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  // Always little-endian on disk.
  template <typename T>
  void put(std::size_t offset, T v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
    std::memcpy(bytes_.data() + offset, &v, sizeof(T));
  }

 private:
  std::vector<unsigned char>& bytes_;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Volume::Volume(std::vector<std::int64_t> d, std::vector<double> s, double fill)
    : dims(std::move(d)), spacing(std::move(s)) {
  for (auto e : dims)
    if (e < 1) throw ValidationError("volume dims must be positive");
  std::int64_t n = 1;
  for (auto e : dims) n *= e;
  data.assign(static_cast<std::size_t>(n), fill);
  validate();
}

std::int64_t Volume::numel() const {
  std::int64_t n = 1;
  for (auto e : dims) n *= e;
  return n;
}

std::array<std::int64_t, 3> Volume::dims3() const {
  return {dims.size() > 0 ? dims[0] : 1, dims.size() > 1 ? dims[1] : 1, dims.size() > 2 ? dims[2] : 1};
}

std::array<double, 3> Volume::spacing3() const {
  return {spacing.size() > 0 ? spacing[0] : 1.0, spacing.size() > 1 ? spacing[1] : 1.0,
          spacing.size() > 2 ? spacing[2] : 1.0};
}

double Volume::voxel_volume() const {
  const auto s = spacing3();
  return s[0] * s[1] * s[2];
}

std::size_t Volume::index(std::int64_t x, std::int64_t y, std::int64_t z) const {
  const auto d = dims3();
  return static_cast<std::size_t>((z * d[1] + y) * d[0] + x);
}

void Volume::validate() const {
  if (dims.size() != 2 && dims.size() != 3) {
    throw ValidationError("volumes must have 2 or 3 axes, got " + std::to_string(dims.size()));
  }
  if (spacing.size() != dims.size()) {
    throw ValidationError("volume has " + std::to_string(dims.size()) + " axes but " +
                          std::to_string(spacing.size()) + " spacing values");
  }
  for (auto e : dims)
    if (e < 1) throw ValidationError("volume dims must be positive");
  for (auto s : spacing)
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("voxel spacing must be positive");
  if (static_cast<std::int64_t>(data.size()) != numel()) {
    throw ValidationError("volume data holds " + std::to_string(data.size()) + " values, dims need " +
                          std::to_string(numel()));
  }
}

Volume read_nifti(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string where = "'" + path.string() + "'";
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
    throw FormatError(where + " is gzip-compressed; only uncompressed .nii is supported (run gunzip first)");
  }
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize)) {
    throw FormatError(where + " is shorter than a NIfTI-1 header (" + std::to_string(bytes.size()) + " bytes)");
  }

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != kHeaderSize) {
    if (byteswap_value(sizeof_hdr) != kHeaderSize) {
      throw FormatError(where + " is not NIfTI-1: header size field is " + std::to_string(sizeof_hdr));
    }
    swap = true;
  }
  const Reader r(bytes, swap);

  if (std::memcmp(bytes.data() + off::magic, "n+1\0", 4) != 0) {
    if (std::memcmp(bytes.data() + off::magic, "ni1\0", 4) == 0) {
      throw FormatError(where + " is a detached-header NIfTI (.hdr/.img); only single-file .nii is supported");
    }
    throw FormatError(where + " has bad NIfTI-1 magic");
  }

  const auto ndim = r.get<std::int16_t>(off::dim);
  if (ndim != 2 && ndim != 3) {
    throw FormatError(where + " has dim[0] = " + std::to_string(ndim) + "; only 2D and 3D volumes are supported");
  }
  std::vector<std::int64_t> dims;
  std::vector<double> spacing;
  for (int i = 1; i <= ndim; ++i) {
    const auto d = r.get<std::int16_t>(off::dim + 2 * i);
    if (d < 1) throw FormatError(where + " has non-positive dim[" + std::to_string(i) + "]");
    dims.push_back(d);
    const float p = r.get<float>(off::pixdim + 4 * i);
    if (!(p > 0.0f) || !std::isfinite(p)) {
      throw FormatError(where + " has non-positive pixdim[" + std::to_string(i) + "]");
    }
    spacing.push_back(p);
  }

  const auto datatype = r.get<std::int16_t>(off::datatype);
  std::size_t width = 0;
  switch (datatype) {
    case 2: width = 1; break;
    case 4: width = 2; break;
    case 16: width = 4; break;
    default:
      throw FormatError(where + " has unsupported datatype code " + std::to_string(datatype) +
                        " (supported: 2 uint8, 4 int16, 16 float32)");
  }

  const float vox_offset = r.get<float>(off::vox_offset);
  if (!(vox_offset >= static_cast<float>(kVoxOffset)) || vox_offset != std::floor(vox_offset)) {
    throw FormatError(where + " has invalid vox_offset " + std::to_string(vox_offset));
  }
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  const auto n = static_cast<std::size_t>(v.numel());
  const auto start = static_cast<std::size_t>(vox_offset);
  if (bytes.size() < start + n * width) {
    throw FormatError(where + " is truncated: voxel data needs " + std::to_string(start + n * width) +
                      " bytes, file has " + std::to_string(bytes.size()));
  }

  const float slope = r.get<float>(off::scl_slope);
  const float inter = r.get<float>(off::scl_inter);
  const bool scale = slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f);
  v.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = start + i * width;
    double value = 0.0;
    switch (datatype) {
      case 2: value = bytes[p]; break;
      case 4: value = r.get<std::int16_t>(p); break;
      case 16: value = r.get<float>(p); break;
    }
    v.data[i] = scale ? value * static_cast<double>(slope) + static_cast<double>(inter) : value;
  }

  auto& o = v.orientation;
  o.qform_code = r.get<std::int16_t>(off::qform_code);
  o.sform_code = r.get<std::int16_t>(off::sform_code);
  o.qfac = r.get<float>(off::pixdim);
  for (int i = 0; i < 3; ++i) {
    o.quatern[i] = r.get<float>(off::quatern_b + 4 * i);
    o.qoffset[i] = r.get<float>(off::qoffset_x + 4 * i);
  }
  for (int i = 0; i < 4; ++i) {
    o.srow_x[i] = r.get<float>(off::srow_x + 4 * i);
    o.srow_y[i] = r.get<float>(off::srow_y + 4 * i);
    o.srow_z[i] = r.get<float>(off::srow_z + 4 * i);
  }
  v.subject_id = path.stem().string();
  return v;
}

void write_nifti(const Volume& volume, const std::filesystem::path& path, NiftiType type) {
  volume.validate();
  for (auto d : volume.dims) {
    if (d > std::numeric_limits<std::int16_t>::max()) {
      throw RangeError("volume extent " + std::to_string(d) + " does not fit a NIfTI-1 dim field");
    }
  }
  std::size_t width = 0;
  std::int16_t bitpix = 0;
  switch (type) {
    case NiftiType::UInt8: width = 1; bitpix = 8; break;
    case NiftiType::Int16: width = 2; bitpix = 16; break;
    case NiftiType::Float32: width = 4; bitpix = 32; break;
  }

  const auto n = static_cast<std::size_t>(volume.numel());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(kVoxOffset) + n * width, 0);
  Writer w(bytes);
  w.put<std::int32_t>(0, kHeaderSize);
  w.put<std::int16_t>(off::dim, static_cast<std::int16_t>(volume.dims.size()));
  for (int i = 1; i <= 7; ++i) {
    const auto d = i <= static_cast<int>(volume.dims.size()) ? volume.dims[i - 1] : 1;
    w.put<std::int16_t>(off::dim + 2 * i, static_cast<std::int16_t>(d));
  }
  w.put<std::int16_t>(off::datatype, static_cast<std::int16_t>(type));
  w.put<std::int16_t>(off::bitpix, bitpix);
  const auto& o = volume.orientation;
  w.put<float>(off::pixdim, o.qfac == -1.0f ? -1.0f : 1.0f);
  for (int i = 1; i <= 7; ++i) {
    const double s = i <= static_cast<int>(volume.spacing.size()) ? volume.spacing[i - 1] : 1.0;
    w.put<float>(off::pixdim + 4 * i, static_cast<float>(s));
  }
  w.put<float>(off::vox_offset, static_cast<float>(kVoxOffset));
  w.put<float>(off::scl_slope, 1.0f);
  w.put<float>(off::scl_inter, 0.0f);
  bytes[off::xyzt_units] = 2;  // millimetres
  w.put<std::int16_t>(off::qform_code, o.qform_code);
  w.put<std::int16_t>(off::sform_code, o.sform_code);
  for (int i = 0; i < 3; ++i) {
    w.put<float>(off::quatern_b + 4 * i, o.quatern[i]);
    w.put<float>(off::qoffset_x + 4 * i, o.qoffset[i]);
  }
  for (int i = 0; i < 4; ++i) {
    w.put<float>(off::srow_x + 4 * i, o.srow_x[i]);
    w.put<float>(off::srow_y + 4 * i, o.srow_y[i]);
    w.put<float>(off::srow_z + 4 * i, o.srow_z[i]);
  }
  std::memcpy(bytes.data() + off::magic, "n+1\0", 4);
  // bytes 348..351: empty extension flag, already zero

  for (std::size_t i = 0; i < n; ++i) {
    const double v = volume.data[i];
    const std::size_t p = static_cast<std::size_t>(kVoxOffset) + i * width;
    switch (type) {
      case NiftiType::UInt8:
        if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
          throw RangeError("value " + std::to_string(v) + " at voxel " + std::to_string(i) +
                           " does not fit uint8 label storage");
        }
        bytes[p] = static_cast<unsigned char>(v);
        break;
      case NiftiType::Int16:
        if (!(v >= -32768.0 && v <= 32767.0) || v != std::floor(v)) {
          throw RangeError("value " + std::to_string(v) + " at voxel " + std::to_string(i) +
                           " does not fit int16 storage");
        }
        w.put<std::int16_t>(p, static_cast<std::int16_t>(v));
        break;
      case NiftiType::Float32:
        if (std::isfinite(v) && std::abs(v) > std::numeric_limits<float>::max()) {
          throw RangeError("value " + std::to_string(v) + " at voxel " + std::to_string(i) +
                           " overflows float32");
        }
        w.put<float>(p, static_cast<float>(v));
        break;
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace dmrs
