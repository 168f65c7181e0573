#include "entmlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "entmlm/corpus.hpp"
#include "entmlm/errors.hpp"

namespace entmlm {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'E', 'N', 'T', 'M', 'L', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  if (offset + sizeof(T) > in.size()) throw ConfigError("checkpoint truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

json config_to_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers}, {"num_heads", c.num_heads}, {"hidden", c.hidden},
          {"ffn", c.ffn},           {"vocab_size", c.vocab_size}, {"num_entity_types", c.num_entity_types},
          {"max_pos1", c.max_pos1}, {"max_pos2", c.max_pos2},   {"dropout", c.dropout},
          {"init_std", c.init_std}, {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.num_entity_types = j.at("num_entity_types").get<std::size_t>();
  c.max_pos1 = j.at("max_pos1").get<std::size_t>();
  c.max_pos2 = j.at("max_pos2").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.init_std = j.at("init_std").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  json manifest;
  manifest["config"] = config_to_json(model.config());
  manifest["num_classes"] = model.num_classes();
  json tensors = json::array();
  std::string payload;
  for (const auto& p : model.parameters()) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"dtype", "f64"},
                       {"offset", payload.size()}});
    for (double v : p.value.data()) put_le(payload, v);
  }
  manifest["tensors"] = tensors;
  const std::string manifest_text = manifest.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint64_t>(manifest_text.size()));
  out += manifest_text;
  out += payload;
  write_file_atomic(path, out);
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();

  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path.string() + " is not a checkpoint");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kVersion) throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  const auto manifest_len = get_le<std::uint64_t>(bytes, 12);
  const std::size_t manifest_start = 20;
  if (manifest_start + manifest_len > bytes.size()) throw ConfigError("checkpoint manifest truncated");

  json manifest;
  try {
    manifest = json::parse(bytes.substr(manifest_start, manifest_len));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  const std::size_t payload_start = manifest_start + manifest_len;

  ModelConfig config;
  try {
    config = config_from_json(manifest.at("config"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint config incomplete: ") + e.what());
  }
  if (expected && !(*expected == config)) {
    throw ConfigError("checkpoint config does not match the expected model config");
  }
  Model model(config);
  const auto num_classes = manifest.value("num_classes", std::size_t{0});
  if (num_classes > 0) model.add_classifier(num_classes, 0);

  const json& tensors = manifest.at("tensors");
  if (tensors.size() != model.parameters().size()) {
    throw ConfigError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, config implies " +
                      std::to_string(model.parameters().size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const json& entry = tensors[i];
    Parameter& p = model.at(i);
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (name != p.name) throw ConfigError("checkpoint tensor " + name + " where " + p.name + " expected");
    if (shape != p.value.shape()) {
      throw ConfigError("shape mismatch for " + name + ": checkpoint " + shape_string(shape) +
                        ", config " + shape_string(p.value.shape()));
    }
    if (entry.at("dtype").get<std::string>() != "f64") throw ConfigError("unsupported dtype for " + name);
    const auto offset = entry.at("offset").get<std::size_t>();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      p.value[k] = get_le<double>(bytes, payload_start + offset + k * sizeof(double));
    }
  }
  return model;
}

}  // namespace entmlm
