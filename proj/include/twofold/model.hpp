#pragma once

#include <filesystem>
#include <optional>
#include <random>

#include "twofold/networks.hpp"
#include "twofold/profile.hpp"

namespace twofold {

// Everything the tracker needs. A missing appearance or semantic part turns
// the tracker into the corresponding single-branch variant.
struct TwofoldModel {
  NetworkProfile profile;
  std::optional<ANet> anet;
  std::optional<SNet> snet;
  std::optional<SemanticHead> head;

  bool has_appearance() const { return anet.has_value(); }
  bool has_semantic() const { return snet.has_value() && head.has_value(); }

  static TwofoldModel random(const NetworkProfile& profile, bool appearance,
                             std::optional<SemanticVariant> semantic, std::uint64_t seed);
};

// A model directory holds anet.weights, snet.weights and semantic.weights;
// any may be absent. The semantic file records its variant in its meta.
void save_model(const TwofoldModel& model, const std::filesystem::path& dir);
TwofoldModel load_model(const std::filesystem::path& dir, const NetworkProfile& profile);

void save_anet(const ANet& net, const NetworkProfile& profile, const std::filesystem::path& path);
ANet load_anet(const std::filesystem::path& path, const NetworkProfile& profile);
void save_snet(const SNet& net, const NetworkProfile& profile, const std::filesystem::path& path);
SNet load_snet(const std::filesystem::path& path, const NetworkProfile& profile);
void save_head(const SemanticHead& head, const NetworkProfile& profile,
               const std::filesystem::path& path);
SemanticHead load_head(const std::filesystem::path& path, const NetworkProfile& profile);

}  // namespace twofold
