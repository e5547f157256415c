#include "twofold/profile.hpp"

#include "twofold/errors.hpp"
#include "twofold/ops.hpp"

namespace twofold {

namespace {

LayerSpec conv(std::string name, std::size_t k, int stride, std::size_t out, bool relu,
               std::size_t z, std::size_t x) {
  return LayerSpec{LayerKind::conv, std::move(name), k, stride, out, relu, z, x};
}

LayerSpec pool(std::string name, std::size_t k, int stride, std::size_t z, std::size_t x) {
  return LayerSpec{LayerKind::max_pool, std::move(name), k, stride, 0, false, z, x};
}

}  // namespace

NetworkProfile NetworkProfile::paper() {
  NetworkProfile p;
  p.name = "paper";
  p.target_size = 127;
  p.search_size = 255;
  // SiamFC AlexNet body, ungrouped.
  p.anet_layers = {
      conv("conv1", 11, 2, 96, true, 59, 123), pool("pool1", 3, 2, 29, 61),
      conv("conv2", 5, 1, 256, true, 25, 57),  pool("pool2", 3, 2, 12, 28),
      conv("conv3", 3, 1, 384, true, 10, 26),  conv("conv4", 3, 1, 384, true, 8, 24),
      conv("conv5", 3, 1, 256, false, 6, 22),
  };
  p.snet_layers = p.anet_layers;
  p.snet_layers.back().relu = true;
  for (auto& l : p.snet_layers) l.target_extent = 0;
  p.snet_taps = {5, 6};
  p.total_stride = 8;
  p.response_size = 17;
  p.target_footprint = 6;
  p.fusion_out_channels = 128;
  p.response_scale = 1e-3f;
  return p;
}

NetworkProfile NetworkProfile::desk() {
  NetworkProfile p;
  p.name = "desk";
  p.target_size = 63;
  p.search_size = 127;
  p.anet_layers = {
      conv("conv1", 3, 1, 16, true, 61, 125), pool("pool1", 2, 2, 30, 62),
      conv("conv2", 3, 1, 32, true, 28, 60),  pool("pool2", 2, 2, 14, 30),
      conv("conv3", 3, 2, 48, true, 6, 14),   conv("conv4", 1, 1, 64, false, 6, 14),
  };
  p.snet_layers = p.anet_layers;
  p.snet_layers.back().relu = true;
  for (auto& l : p.snet_layers) l.target_extent = 0;
  p.snet_taps = {4, 5};
  p.total_stride = 8;
  p.response_size = 9;
  p.target_footprint = 6;
  p.fusion_out_channels = 32;
  p.response_scale = 1e-2f;
  return p;
}

NetworkProfile NetworkProfile::by_name(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ContractViolation("unknown network profile '" + name + "' (expected paper or desk)");
}

std::vector<std::size_t> layer_extents(const std::vector<LayerSpec>& layers, std::size_t input) {
  std::vector<std::size_t> out;
  std::size_t extent = input;
  for (const LayerSpec& l : layers) {
    extent = extent == 0 ? 0 : conv_output_extent(extent, l.kernel, l.stride, 0);
    out.push_back(extent);
  }
  return out;
}

std::size_t center_offset(std::size_t outer, std::size_t inner) {
  if (inner > outer || (outer - inner) % 2 != 0) {
    throw ContractViolation("cannot center a " + std::to_string(inner) + " extent inside " +
                            std::to_string(outer));
  }
  return (outer - inner) / 2;
}

std::size_t NetworkProfile::anet_channels() const {
  for (auto it = anet_layers.rbegin(); it != anet_layers.rend(); ++it) {
    if (it->kind == LayerKind::conv) return it->out_channels;
  }
  return 0;
}

std::size_t NetworkProfile::snet_tap_channels(std::size_t tap) const {
  return snet_layers.at(snet_taps.at(tap)).out_channels;
}

std::size_t NetworkProfile::anet_feature_extent(std::size_t input) const {
  return layer_extents(anet_layers, input).back();
}

std::size_t NetworkProfile::snet_tap_extent(std::size_t tap, std::size_t input) const {
  return layer_extents(snet_layers, input).at(snet_taps.at(tap));
}

std::size_t NetworkProfile::semantic_response_extent() const {
  const std::size_t x = std::min(snet_tap_extent(0, search_size), snet_tap_extent(1, search_size));
  return x - target_footprint + 1;
}

void NetworkProfile::validate() const {
  auto fail = [this](const std::string& what) {
    throw ContractViolation("profile '" + name + "': " + what);
  };
  if (!(target_size < search_size)) fail("target size must be smaller than search size");
  if (anet_layers.empty() || snet_layers.empty()) fail("empty layer list");
  if (anet_layers.back().kind != LayerKind::conv) fail("A-Net must end with a conv layer");

  auto check_chain = [&](const std::vector<LayerSpec>& layers, const char* net) {
    const auto z = layer_extents(layers, target_size);
    const auto x = layer_extents(layers, search_size);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      if (l.kind == LayerKind::conv && l.out_channels == 0) fail(std::string(net) + " " + l.name + " has no channels");
      if (l.target_extent && z[i] != l.target_extent) {
        fail(std::string(net) + " " + l.name + " target extent " + std::to_string(z[i]) +
             " != declared " + std::to_string(l.target_extent));
      }
      if (l.search_extent && x[i] != l.search_extent) {
        fail(std::string(net) + " " + l.name + " search extent " + std::to_string(x[i]) +
             " != declared " + std::to_string(l.search_extent));
      }
    }
  };
  check_chain(anet_layers, "A-Net");
  check_chain(snet_layers, "S-Net");

  std::size_t stride = 1;
  for (const LayerSpec& l : anet_layers) stride *= static_cast<std::size_t>(l.stride);
  if (stride != total_stride) fail("A-Net total stride " + std::to_string(stride));

  const std::size_t fz = anet_feature_extent(target_size);
  const std::size_t fx = anet_feature_extent(search_size);
  if (fz != target_footprint) fail("A-Net target features are not the target footprint");
  if (fz + response_size - 1 != fx) fail("correlation geometry: z + response - 1 != X extent");

  for (std::size_t t = 0; t < 2; ++t) {
    const LayerSpec& l = snet_layers.at(snet_taps[t]);
    if (l.kind != LayerKind::conv) fail("S-Net tap " + l.name + " is not a conv layer");
  }
  if (snet_taps[0] >= snet_taps[1]) fail("S-Net taps must be ordered shallow to deep");
  const std::size_t deep = snet_tap_extent(1, search_size);
  const std::size_t shallow = snet_tap_extent(0, search_size);
  center_offset(shallow, deep);
  if (deep != fx) fail("S-Net deepest tap must match the A-Net search feature extent");
  if (semantic_response_extent() != response_size) fail("semantic response extent mismatch");
  if (deep < target_footprint + 2) fail("S-Net features too small for the attention grid");
  if (fusion_out_channels == 0) fail("fusion output channels must be positive");
  if (scale_count != 3) fail("three search scales expected");
}

}  // namespace twofold
