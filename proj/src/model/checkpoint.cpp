#include "mvts/checkpoint.hpp"

#include <algorithm>
#include <map>

#include "mvts/binary_io.hpp"
#include "mvts/error.hpp"

namespace mvts {

namespace {

void write_config(ByteWriter& w, const ModelConfig& c) {
  for (std::uint64_t v : {c.window_length, c.channels, c.latent_width, c.heads, c.query_width, c.value_width,
                          c.layers, c.ffn_width})
    w.u64(v);
  w.f64(c.dropout_rate);
  w.u64(c.seed);
}

ModelConfig read_config(ByteReader& r) {
  ModelConfig c;
  c.window_length = r.u64("config.T");
  c.channels = r.u64("config.M");
  c.latent_width = r.u64("config.D");
  c.heads = r.u64("config.H");
  c.query_width = r.u64("config.D_q");
  c.value_width = r.u64("config.D_v");
  c.layers = r.u64("config.layers");
  c.ffn_width = r.u64("config.ffn_width");
  c.dropout_rate = r.f64("config.dropout_rate");
  c.seed = r.u64("config.seed");
  return c;
}

void write_array(ByteWriter& w, const std::string& name, const Shape& shape, std::span<const float> values) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u64(d);
  for (float v : values) w.f32(v);
}

std::string describe(const ModelConfig& c) {
  return "T=" + std::to_string(c.window_length) + " M=" + std::to_string(c.channels) +
         " D=" + std::to_string(c.latent_width) + " H=" + std::to_string(c.heads) +
         " D_q=" + std::to_string(c.query_width) + " D_v=" + std::to_string(c.value_width) +
         " layers=" + std::to_string(c.layers) + " ffn=" + std::to_string(c.ffn_width);
}

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const ModelParams<float>& params) {
  ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, 4));
  w.u16(kCheckpointVersion);
  write_config(w, params.config);
  const auto tensors = params.named_parameters();
  const auto buffers = params.named_buffers();
  w.u32(static_cast<std::uint32_t>(tensors.size() + buffers.size()));
  for (const auto& [name, t] : tensors) write_array(w, name, t.shape(), t.data());
  for (const auto& [name, buf] : buffers) write_array(w, name, Shape{buf->size()}, *buf);
  return w.buffer();
}

ModelParams<float> deserialize_checkpoint(std::vector<unsigned char> bytes, const std::string& source,
                                          const std::optional<ModelConfig>& expected) {
  ByteReader r(std::move(bytes), source);
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
    throw FormatError(source + ": bad magic (expected MVTS) at offset 0");
  }
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  const ModelConfig config = read_config(r);
  try {
    config.validate();
  } catch (const ParameterError& e) {
    r.fail(std::string("invalid config block: ") + e.what());
  }
  if (expected) {
    ModelConfig lhs = config, rhs = *expected;
    lhs.seed = rhs.seed = 0;
    lhs.dropout_rate = rhs.dropout_rate = 0.0;
    if (!(lhs == rhs)) {
      throw FormatError(source + ": config mismatch: file has " + describe(config) + ", expected " +
                        describe(*expected));
    }
  }

  ModelParams<float> params = init_params<float>(config);
  std::map<std::string, std::pair<Shape, std::span<float>>> slots;
  for (auto& [name, t] : params.named_parameters()) {
    auto copy = t;
    slots.emplace(name, std::make_pair(t.shape(), copy.mutable_data()));
  }
  for (auto& [name, buf] : params.named_buffers()) slots.emplace(name, std::make_pair(Shape{buf->size()}, std::span<float>(*buf)));

  const auto count = r.u32("array count");
  if (count != slots.size()) {
    r.fail("array count " + std::to_string(count) + " does not match config (" + std::to_string(slots.size()) + ")");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_length = r.u32("array name length");
    if (name_length > 4096) r.fail("implausible array name length");
    const auto name_bytes = r.bytes(name_length, "array name");
    const std::string name(name_bytes.begin(), name_bytes.end());
    auto it = slots.find(name);
    if (it == slots.end()) r.fail("unexpected array '" + name + "'");
    const auto rank = r.u32("array rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u64("array dims"));
    if (shape != it->second.first) {
      r.fail("array '" + name + "' has shape " + shape_string(shape) + ", expected " +
             shape_string(it->second.first));
    }
    for (float& v : it->second.second) v = r.f32("array values");
    slots.erase(it);
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last array");
  return params;
}

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes(serialize_checkpoint(params));
  w.write_file(path);
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  return deserialize_checkpoint(read_file_bytes(path), path.string(), expected);
}

}  // namespace mvts
