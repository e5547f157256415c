#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "twofold/networks.hpp"
#include "twofold/profile.hpp"

namespace twofold {

// Container layout:
//   bytes 0..7    magic "TWFWGT01"
//   bytes 8..15   header length N, unsigned little-endian
//   next N bytes  UTF-8 JSON: format, version, profile, layer_specs,
//                 endianness ("little"), dtype ("float32"), tensors
//                 [{name, shape, offset}], meta
//   remainder     the tensors' float32 little-endian values, back to back,
//                 in header order; offsets are relative to this block.
struct WeightsFile {
  std::string profile;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;
};

std::string encode_weights(const NetworkProfile& profile, std::span<const ConstParamRef> params,
                           const nlohmann::json& meta = nlohmann::json::object());
WeightsFile decode_weights(const std::string& bytes, const std::string& origin = "<memory>");

void save_weights(const std::filesystem::path& path, const NetworkProfile& profile,
                  std::span<const ConstParamRef> params,
                  const nlohmann::json& meta = nlohmann::json::object());
WeightsFile read_weights(const std::filesystem::path& path);

// Copies stored tensors into `params`, matched by position and name. Shape
// and name mismatches raise LoadError naming the parameter; returns meta.
nlohmann::json assign_weights(const WeightsFile& file, std::span<const ParamRef> params,
                              const std::string& origin = "<memory>");
nlohmann::json load_weights(const std::filesystem::path& path, std::span<const ParamRef> params);

// Order-sensitive FNV-1a over names, shapes and raw float bits.
std::uint64_t parameter_hash(std::span<const ConstParamRef> params);

}  // namespace twofold
