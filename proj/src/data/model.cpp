#include "twofold/model.hpp"

#include "twofold/errors.hpp"
#include "twofold/weights.hpp"

namespace twofold {

namespace fs = std::filesystem;

namespace {

template <typename Module>
std::vector<ConstParamRef> const_params(const Module& m) {
  return m.parameters();
}

}  // namespace

TwofoldModel TwofoldModel::random(const NetworkProfile& profile, bool appearance,
                                  std::optional<SemanticVariant> semantic, std::uint64_t seed) {
  TwofoldModel m;
  m.profile = profile;
  std::mt19937_64 rng(seed);
  if (appearance) m.anet = ANet::create(profile, rng);
  if (semantic) {
    m.snet = SNet::create(profile, rng);
    m.head = SemanticHead::create(profile, *semantic, rng);
  }
  return m;
}

void save_anet(const ANet& net, const NetworkProfile& profile, const fs::path& path) {
  save_weights(path, profile, const_params(net), {{"component", "anet"}});
}

ANet load_anet(const fs::path& path, const NetworkProfile& profile) {
  std::mt19937_64 rng(0);
  ANet net = ANet::create(profile, rng);
  load_weights(path, net.parameters());
  return net;
}

void save_snet(const SNet& net, const NetworkProfile& profile, const fs::path& path) {
  save_weights(path, profile, const_params(net), {{"component", "snet"}});
}

SNet load_snet(const fs::path& path, const NetworkProfile& profile) {
  std::mt19937_64 rng(0);
  SNet net = SNet::create(profile, rng);
  load_weights(path, net.parameters());
  return net;
}

void save_head(const SemanticHead& head, const NetworkProfile& profile, const fs::path& path) {
  save_weights(path, profile, const_params(head),
               {{"component", "semantic"},
                {"multilevel", head.variant.multilevel},
                {"attention", head.variant.attention}});
}

SemanticHead load_head(const fs::path& path, const NetworkProfile& profile) {
  const WeightsFile file = read_weights(path);
  SemanticVariant variant;
  variant.multilevel = file.meta.value("multilevel", true);
  variant.attention = file.meta.value("attention", true);
  std::mt19937_64 rng(0);
  SemanticHead head = SemanticHead::create(profile, variant, rng);
  assign_weights(file, head.parameters(), path.string());
  return head;
}

void save_model(const TwofoldModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  if (model.anet) save_anet(*model.anet, model.profile, dir / "anet.weights");
  if (model.snet) save_snet(*model.snet, model.profile, dir / "snet.weights");
  if (model.head) save_head(*model.head, model.profile, dir / "semantic.weights");
}

TwofoldModel load_model(const fs::path& dir, const NetworkProfile& profile) {
  if (!fs::is_directory(dir)) throw LoadError("model directory not found: " + dir.string());
  TwofoldModel m;
  m.profile = profile;
  if (fs::exists(dir / "anet.weights")) m.anet = load_anet(dir / "anet.weights", profile);
  if (fs::exists(dir / "snet.weights")) m.snet = load_snet(dir / "snet.weights", profile);
  if (fs::exists(dir / "semantic.weights")) m.head = load_head(dir / "semantic.weights", profile);
  if (m.head && !m.snet) {
    throw LoadError(dir.string() + ": semantic.weights present without snet.weights");
  }
  if (!m.has_appearance() && !m.has_semantic()) {
    throw LoadError(dir.string() + ": no anet.weights or semantic branch found");
  }
  return m;
}

}  // namespace twofold
