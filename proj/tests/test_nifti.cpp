#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>

#include "dmrs/nifti.hpp"
#include "test_util.hpp"

using namespace dmrs;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Hand-assembled header, independent of the writer.
class RawHeader {
 public:
  explicit RawHeader(bool big_endian) : big_(big_endian), bytes_(352, 0) {
    put<std::int32_t>(0, 348);
    put<float>(108, 352.0f);
    std::memcpy(bytes_.data() + 344, "n+1\0", 4);
  }
  template <typename T>
  void put(std::size_t offset, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if (big_) std::reverse(buf, buf + sizeof(T));
    std::memcpy(bytes_.data() + offset, buf, sizeof(T));
  }
  void dims(std::vector<std::int16_t> d, std::vector<float> spacing) {
    put<std::int16_t>(40, static_cast<std::int16_t>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) {
      put<std::int16_t>(42 + 2 * i, d[i]);
      put<float>(80 + 4 * i, spacing[i]);
    }
  }
  void type(std::int16_t code, std::int16_t bitpix) {
    put<std::int16_t>(70, code);
    put<std::int16_t>(72, bitpix);
  }
  template <typename T>
  void append(T value) {
    const std::size_t at = bytes_.size();
    bytes_.resize(at + sizeof(T));
    put<T>(at, value);
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  bool big_;
  std::vector<char> bytes_;
};

Volume random_volume(std::vector<std::int64_t> dims, std::vector<double> spacing, std::mt19937_64& rng) {
  Volume v(dims, spacing);
  std::normal_distribution<float> d(0.f, 100.f);
  for (auto& x : v.data) x = static_cast<double>(d(rng));
  return v;
}

}  // namespace

TEST(Nifti, Float32RoundTripIsBitExact) {
  const auto dir = dmrs::testing::temp_dir("nifti_f32");
  std::mt19937_64 rng(1);
  Volume v = random_volume({7, 5, 3}, {0.5, 0.5, 3.0}, rng);
  v.orientation.qform_code = 1;
  v.orientation.sform_code = 2;
  v.orientation.qfac = -1;
  v.orientation.quatern = {0.1f, 0.2f, 0.3f};
  v.orientation.srow_x = {0.5f, 0, 0, -10};
  write_nifti(v, dir / "a.nii", NiftiType::Float32);
  const Volume r = read_nifti(dir / "a.nii");
  EXPECT_EQ(r.dims, v.dims);
  EXPECT_EQ(r.spacing, v.spacing);
  EXPECT_EQ(r.data, v.data);
  EXPECT_EQ(r.orientation, v.orientation);
  EXPECT_EQ(r.subject_id, "a");

  write_nifti(r, dir / "b.nii", NiftiType::Float32);
  EXPECT_EQ(slurp(dir / "a.nii"), slurp(dir / "b.nii"));
}

TEST(Nifti, IntegerRoundTrips) {
  const auto dir = dmrs::testing::temp_dir("nifti_int");
  Volume labels({4, 4, 2}, {1, 1, 1});
  for (std::size_t i = 0; i < labels.data.size(); ++i) labels.data[i] = static_cast<double>(i % 15);
  write_nifti(labels, dir / "l.nii", NiftiType::UInt8);
  EXPECT_EQ(read_nifti(dir / "l.nii").data, labels.data);

  Volume s({3, 2}, {1, 2});
  s.data = {-32768, -1, 0, 1, 1234, 32767};
  write_nifti(s, dir / "s.nii", NiftiType::Int16);
  const Volume r = read_nifti(dir / "s.nii");
  EXPECT_EQ(r.dims, (std::vector<std::int64_t>{3, 2}));
  EXPECT_EQ(r.data, s.data);
}

TEST(Nifti, WriterRejectsOutOfRangeValues) {
  const auto dir = dmrs::testing::temp_dir("nifti_range");
  Volume v({2, 2}, {1, 1});
  v.data = {0, 1, 2, 256};
  EXPECT_THROW(write_nifti(v, dir / "x.nii", NiftiType::UInt8), RangeError);
  v.data = {0, 1, 2, 1.5};
  EXPECT_THROW(write_nifti(v, dir / "x.nii", NiftiType::UInt8), RangeError);
  v.data = {0, 1, 2, -1};
  EXPECT_THROW(write_nifti(v, dir / "x.nii", NiftiType::UInt8), RangeError);
  v.data = {0, 1, 2, 40000};
  EXPECT_THROW(write_nifti(v, dir / "x.nii", NiftiType::Int16), RangeError);
  v.data = {0, 1, 2, 1e300};
  EXPECT_THROW(write_nifti(v, dir / "x.nii", NiftiType::Float32), RangeError);
}

TEST(Nifti, ReadsHandBuiltLittleAndBigEndianFiles) {
  const auto dir = dmrs::testing::temp_dir("nifti_endian");
  for (bool big : {false, true}) {
    RawHeader h(big);
    h.dims({3, 2}, {1.5f, 2.5f});
    h.type(16, 32);
    for (float v : {1.0f, -2.5f, 3.25f, 0.0f, 7.0f, 1e-3f}) h.append<float>(v);
    const auto path = dir / (big ? "big.nii" : "little.nii");
    spit(path, h.bytes());
    const Volume r = read_nifti(path);
    EXPECT_EQ(r.dims, (std::vector<std::int64_t>{3, 2}));
    EXPECT_EQ(r.spacing, (std::vector<double>{1.5, 2.5}));
    EXPECT_EQ(r.data, (std::vector<double>{1.0, -2.5, 3.25, 0.0, 7.0, static_cast<double>(1e-3f)}));
  }
}

TEST(Nifti, AppliesSlopeAndIntercept) {
  const auto dir = dmrs::testing::temp_dir("nifti_scale");
  RawHeader h(false);
  h.dims({2, 1}, {1, 1});
  h.type(4, 16);
  h.put<float>(112, 2.0f);
  h.put<float>(116, 1.0f);
  h.append<std::int16_t>(3);
  h.append<std::int16_t>(-4);
  spit(dir / "s.nii", h.bytes());
  EXPECT_EQ(read_nifti(dir / "s.nii").data, (std::vector<double>{7.0, -7.0}));

  // A zero slope means unscaled.
  h.put<float>(112, 0.0f);
  spit(dir / "z.nii", h.bytes());
  EXPECT_EQ(read_nifti(dir / "z.nii").data, (std::vector<double>{3.0, -4.0}));
}

TEST(Nifti, RejectsUnsupportedFiles) {
  const auto dir = dmrs::testing::temp_dir("nifti_bad");
  auto make = [] {
    RawHeader h(false);
    h.dims({2, 2}, {1, 1});
    h.type(2, 8);
    for (int i = 0; i < 4; ++i) h.append<std::uint8_t>(static_cast<std::uint8_t>(i));
    return h;
  };

  auto h = make();
  std::memcpy(h.bytes().data() + 344, "ni1\0", 4);
  spit(dir / "pair.nii", h.bytes());
  try {
    read_nifti(dir / "pair.nii");
    FAIL() << "detached header accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("detached"), std::string::npos);
  }

  h = make();
  h.type(64, 64);  // float64
  spit(dir / "f64.nii", h.bytes());
  EXPECT_THROW(read_nifti(dir / "f64.nii"), FormatError);

  h = make();
  h.put<std::int16_t>(40, 4);
  h.put<std::int16_t>(48, 2);
  spit(dir / "4d.nii", h.bytes());
  EXPECT_THROW(read_nifti(dir / "4d.nii"), FormatError);

  h = make();
  h.bytes().resize(354);
  spit(dir / "short.nii", h.bytes());
  EXPECT_THROW(read_nifti(dir / "short.nii"), FormatError);

  spit(dir / "gz.nii.gz", {'\x1f', '\x8b', '\x08', '\0'});
  try {
    read_nifti(dir / "gz.nii.gz");
    FAIL() << "gzip accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("gunzip"), std::string::npos);
  }

  spit(dir / "tiny.nii", {'a', 'b'});
  EXPECT_THROW(read_nifti(dir / "tiny.nii"), FormatError);
  EXPECT_THROW(read_nifti(dir / "missing.nii"), IoError);
}

TEST(Nifti, RandomRoundTripsPreserveValues) {
  const auto dir = dmrs::testing::temp_dir("nifti_prop");
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> extent(1, 6), rank(2, 3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::int64_t> dims;
    std::vector<double> spacing;
    for (int a = 0, n = rank(rng); a < n; ++a) {
      dims.push_back(extent(rng));
      spacing.push_back(static_cast<double>(static_cast<float>(0.25 * extent(rng))));
    }
    Volume v = random_volume(dims, spacing, rng);
    write_nifti(v, dir / "p.nii", NiftiType::Float32);
    const Volume r = read_nifti(dir / "p.nii");
    EXPECT_EQ(r.dims, v.dims);
    EXPECT_EQ(r.spacing, v.spacing);
    EXPECT_EQ(r.data, v.data);
  }
}

TEST(Volume, IndexingAndValidation) {
  Volume v({4, 3, 2}, {1, 2, 3}, 0.0);
  EXPECT_EQ(v.index(1, 2, 1), static_cast<std::size_t>(1 + 4 * (2 + 3 * 1)));
  EXPECT_DOUBLE_EQ(v.voxel_volume(), 6.0);
  EXPECT_EQ(v.dims3(), (std::array<std::int64_t, 3>{4, 3, 2}));
  Volume flat({4, 3}, {1, 1});
  EXPECT_EQ(flat.dims3(), (std::array<std::int64_t, 3>{4, 3, 1}));
  v.data.pop_back();
  EXPECT_THROW(v.validate(), ValidationError);
  EXPECT_THROW(Volume({4, 0}, {1, 1}), ValidationError);
  EXPECT_THROW(Volume({4, 2}, {1, -1}), ValidationError);
}
