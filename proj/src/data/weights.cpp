#include "twofold/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "twofold/errors.hpp"

namespace twofold {

namespace {

constexpr char kMagic[8] = {'T', 'W', 'F', 'W', 'G', 'T', '0', '1'};
constexpr int kVersion = 1;

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_floats_le(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  char* dst = out.data() + start;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, values.data(), values.size() * 4);
  } else {
    for (float f : values) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) *dst++ = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
  }
}

void get_floats_le(const char* src, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), src, values.size() * 4);
  } else {
    for (float& f : values) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(*src++)) << (8 * i);
      f = std::bit_cast<float>(bits);
    }
  }
}

nlohmann::json layer_json(const std::vector<LayerSpec>& layers) {
  nlohmann::json out = nlohmann::json::array();
  for (const LayerSpec& l : layers) {
    nlohmann::json j = {{"name", l.name},
                        {"kind", l.kind == LayerKind::conv ? "conv" : "max_pool"},
                        {"kernel", l.kernel},
                        {"stride", l.stride}};
    if (l.kind == LayerKind::conv) {
      j["out_channels"] = l.out_channels;
      j["relu"] = l.relu;
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

std::string encode_weights(const NetworkProfile& profile, std::span<const ConstParamRef> params,
                           const nlohmann::json& meta) {
  nlohmann::json header = {{"format", "twofold-weights"},
                           {"version", kVersion},
                           {"profile", profile.name},
                           {"layer_specs",
                            {{"anet", layer_json(profile.anet_layers)},
                             {"snet", layer_json(profile.snet_layers)}}},
                           {"endianness", "little"},
                           {"dtype", "float32"},
                           {"meta", meta}};
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const ConstParamRef& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor->shape()}, {"offset", offset}});
    offset += p.tensor->size() * 4;
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64_le(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const ConstParamRef& p : params) put_floats_le(out, p.tensor->data());
  return out;
}

WeightsFile decode_weights(const std::string& bytes, const std::string& origin) {
  auto fail = [&](const std::string& why) -> void { throw FormatError(origin + ": " + why); };
  if (bytes.size() < 16) fail("truncated container (no header)");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) fail("not a weights container (bad magic)");
  const std::uint64_t header_len = get_u64_le(bytes.data() + 8);
  if (header_len > bytes.size() - 16) fail("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }

  WeightsFile file;
  std::size_t expected = 0;
  try {
    if (header.at("format") != "twofold-weights") fail("unknown format tag");
    if (header.at("version").get<int>() != kVersion) fail("unsupported version");
    if (header.at("endianness") != "little") fail("unsupported endianness");
    if (header.at("dtype") != "float32") fail("unsupported dtype");
    file.profile = header.at("profile").get<std::string>();
    file.meta = header.value("meta", nlohmann::json::object());

    const char* data = bytes.data() + 16 + header_len;
    const std::size_t available = bytes.size() - 16 - header_len;
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const Shape shape = t.at("shape").get<Shape>();
      const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
      const std::size_t count = shape_volume(shape);
      if (offset != expected) fail("tensor '" + name + "' is not contiguous with its predecessor");
      if (offset + count * 4 > available) {
        fail("truncated data block for '" + name + "': needs " + std::to_string(count * 4) +
             " bytes at offset " + std::to_string(offset) + ", " +
             std::to_string(available > offset ? available - offset : 0) + " available");
      }
      Tensor value(shape);
      get_floats_le(data + offset, value.data());
      file.tensors.emplace_back(name, std::move(value));
      expected = offset + count * 4;
    }
    if (available != expected) {
      fail("data block holds " + std::to_string(available) + " bytes, header describes " +
           std::to_string(expected));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }
  return file;
}

void save_weights(const std::filesystem::path& path, const NetworkProfile& profile,
                  std::span<const ConstParamRef> params, const nlohmann::json& meta) {
  const std::string bytes = encode_weights(profile, params, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("short write to " + path.string());
}

WeightsFile read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open weights " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_weights(buffer.str(), path.string());
}

nlohmann::json assign_weights(const WeightsFile& file, std::span<const ParamRef> params,
                              const std::string& origin) {
  // Validate everything before touching any parameter.
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    if (i >= file.tensors.size()) {
      throw LoadError(origin + ": missing parameter '" + p.name + "'");
    }
    const auto& [name, value] = file.tensors[i];
    if (name != p.name) {
      throw LoadError(origin + ": parameter " + std::to_string(i) + " is '" + name +
                      "', expected '" + p.name + "'");
    }
    if (value.shape() != p.tensor->shape()) {
      throw LoadError(origin + ": shape mismatch for layer '" + p.name + "': file has " +
                      shape_string(value.shape()) + ", model expects " +
                      shape_string(p.tensor->shape()) + " (file profile '" + file.profile + "')");
    }
  }
  if (file.tensors.size() != params.size()) {
    throw LoadError(origin + ": file holds " + std::to_string(file.tensors.size()) +
                    " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = file.tensors[i].second;
  return file.meta;
}

nlohmann::json load_weights(const std::filesystem::path& path, std::span<const ParamRef> params) {
  return assign_weights(read_weights(path), params, path.string());
}

std::uint64_t parameter_hash(std::span<const ConstParamRef> params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const ConstParamRef& p : params) {
    mix(p.name.data(), p.name.size());
    for (std::size_t d : p.tensor->shape()) mix(&d, sizeof d);
    mix(p.tensor->raw(), p.tensor->size() * sizeof(float));
  }
  return h;
}

}  // namespace twofold
