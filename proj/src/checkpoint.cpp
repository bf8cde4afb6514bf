#include "dmrs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dmrs/config_json.hpp"

namespace dmrs {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'M', 'R', 'S'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void append_raw(std::vector<char>& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T read_raw(const std::vector<char>& bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

struct TensorRef {
  std::string name;
  std::string kind;
  const TensorF* tensor;
};

std::vector<TensorRef> enumerate(const Model<float>& model) {
  std::vector<TensorRef> out;
  for (const auto& e : model.params().entries()) out.push_back({e.name, "param", &e.tensor});
  for (const auto& s : model.params().running_entries()) {
    out.push_back({s.name, "running_mean", &s.stats.mean});
    out.push_back({s.name, "running_var", &s.stats.var});
  }
  return out;
}

TensorF& target(Model<float>& model, const std::string& name, const std::string& kind) {
  if (kind == "param") return model.params().get(name);
  if (kind == "running_mean") return model.params().running(name).mean;
  if (kind == "running_var") return model.params().running(name).var;
  throw FormatError("checkpoint tensor '" + name + "' has unknown kind '" + kind + "'");
}

}  // namespace

json config_to_json(const NetworkConfig& c) {
  return json{{"in_channels", c.in_channels},
              {"features", c.features},
              {"depth", c.depth},
              {"num_classes", c.num_classes},
              {"resinc_branch_depths", c.resinc_branch_depths},
              {"pre_encode_blocks", c.pre_encode_blocks}};
}

NetworkConfig config_from_json(const json& j) {
  try {
    NetworkConfig c;
    c.in_channels = j.at("in_channels").get<std::int64_t>();
    c.features = j.at("features").get<std::int64_t>();
    c.depth = j.at("depth").get<int>();
    c.num_classes = j.at("num_classes").get<std::int64_t>();
    c.resinc_branch_depths = j.at("resinc_branch_depths").get<std::vector<int>>();
    c.pre_encode_blocks = j.at("pre_encode_blocks").get<int>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network config: ") + e.what());
  }
}

std::uint64_t checkpoint_payload_bytes(const Model<float>& model) {
  return 4u * static_cast<std::uint64_t>(model.params().parameter_count() + model.params().running_count());
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  json table = json::array();
  std::uint64_t offset = 0;
  const auto refs = enumerate(model);
  for (const auto& r : refs) {
    const std::uint64_t length = 4u * static_cast<std::uint64_t>(r.tensor->numel());
    table.push_back({{"name", r.name}, {"kind", r.kind}, {"shape", r.tensor->shape()},
                     {"offset", offset}, {"length", length}});
    offset += length;
  }
  const json manifest{{"arch", arch_name(model.arch())},
                      {"config", config_to_json(model.config())},
                      {"tensors", table},
                      {"payload_bytes", offset}};
  const std::string text = manifest.dump();

  std::vector<char> bytes;
  bytes.reserve(kPreamble + text.size() + offset);
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  append_raw(bytes, kCheckpointVersion);
  append_raw(bytes, static_cast<std::uint64_t>(text.size()));
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (const auto& r : refs)
    for (float v : r.tensor->data()) append_raw(bytes, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string where = "checkpoint '" + path.string() + "'";

  if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(where + " does not start with the DMRS magic");
  }
  const auto version = read_raw<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw FormatError(where + " has format version " + std::to_string(version) + "; this build reads version " +
                      std::to_string(kCheckpointVersion) + ". Re-save it with a matching build.");
  }
  const auto manifest_len = read_raw<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - kPreamble) {
    throw IntegrityError(where + " manifest is truncated: expected " + std::to_string(manifest_len) +
                         " bytes, found " + std::to_string(bytes.size() - kPreamble));
  }
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + manifest_len);
  } catch (const json::exception& e) {
    throw FormatError(where + " has an unreadable manifest: " + e.what());
  }

  const std::size_t payload_start = kPreamble + manifest_len;
  const std::uint64_t actual = bytes.size() - payload_start;
  std::uint64_t expected = 0;
  Arch arch;
  NetworkConfig config;
  try {
    expected = manifest.at("payload_bytes").get<std::uint64_t>();
    arch = parse_arch(manifest.at("arch").get<std::string>());
    config = config_from_json(manifest.at("config"));
  } catch (const json::exception& e) {
    throw FormatError(where + " manifest is missing fields: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + " manifest is invalid: " + e.what());
  }
  if (actual != expected) {
    throw IntegrityError(where + " payload has " + std::to_string(actual) + " bytes, manifest expects " +
                         std::to_string(expected));
  }

  Model<float> model(arch, config);
  if (expected != checkpoint_payload_bytes(model)) {
    throw IntegrityError(where + " payload of " + std::to_string(expected) + " bytes does not match the " +
                         std::to_string(checkpoint_payload_bytes(model)) + " bytes its config requires");
  }

  std::uint64_t cursor = 0;
  std::size_t seen = 0;
  try {
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto kind = t.at("kind").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto length = t.at("length").get<std::uint64_t>();
      TensorF& dst = target(model, name, kind);
      if (dst.shape() != shape) {
        throw FormatError(where + " stores '" + name + "' as " + shape_str(shape) + ", config implies " +
                          shape_str(dst.shape()));
      }
      if (offset != cursor || length != 4u * static_cast<std::uint64_t>(dst.numel())) {
        throw IntegrityError(where + " tensor table is not contiguous at '" + name + "'");
      }
      auto d = dst.mutable_data();
      std::memcpy(d.data(), bytes.data() + payload_start + offset, length);
      cursor += length;
      ++seen;
    }
  } catch (const json::exception& e) {
    throw FormatError(where + " tensor table is malformed: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + " names an unknown tensor: " + e.what());
  }
  if (cursor != expected || seen != enumerate(model).size()) {
    throw IntegrityError(where + " tensor table covers " + std::to_string(cursor) + " of " +
                         std::to_string(expected) + " payload bytes");
  }
  return model;
}

Model<float> load_checkpoint(const std::filesystem::path& path, Arch expected_arch,
                             const NetworkConfig& expected_config) {
  Model<float> model = load_checkpoint(path);
  if (model.arch() != expected_arch) {
    throw ConfigError("checkpoint holds a " + arch_name(model.arch()) + " model, expected " +
                      arch_name(expected_arch));
  }
  if (!(model.config() == expected_config)) {
    throw ConfigError("checkpoint config " + config_to_json(model.config()).dump() +
                      " does not match the requested " + config_to_json(expected_config).dump());
  }
  return model;
}

}  // namespace dmrs
