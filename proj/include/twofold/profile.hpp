#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "twofold/tensor.hpp"

namespace twofold {

enum class LayerKind { conv, max_pool };

// One layer of a feature extractor. Declared extents are the expected
// spatial output sizes on a target-sized and a search-sized input (0 when the
// network never sees that input size); NetworkProfile::validate() replays
// the shape recurrence against them.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::string name;
  std::size_t kernel = 1;
  int stride = 1;
  std::size_t out_channels = 0;  // conv only
  bool relu = true;              // conv only
  std::size_t target_extent = 0;
  std::size_t search_extent = 0;
};

// All architectural dimensions for one scale of the tracker.
struct NetworkProfile {
  std::string name;
  std::size_t target_size = 0;  // W_t = H_t
  std::size_t search_size = 0;  // W_s = H_s
  std::size_t input_channels = 3;
  std::vector<LayerSpec> anet_layers;
  std::vector<LayerSpec> snet_layers;
  // Indices into snet_layers of the two tapped conv layers, shallow first.
  std::array<std::size_t, 2> snet_taps{};
  std::size_t total_stride = 8;
  std::size_t response_size = 0;
  std::size_t target_footprint = 0;  // feature extent of the exact target
  std::size_t fusion_out_channels = 0;
  std::size_t attention_grid = 3;
  std::size_t attention_hidden = 9;
  std::size_t scale_count = 3;
  // Multiplier applied to raw correlation scores before the logistic loss.
  float response_scale = 1e-3f;

  static NetworkProfile paper();
  static NetworkProfile desk();
  // "paper" or "desk"; throws ContractViolation otherwise.
  static NetworkProfile by_name(const std::string& name);

  std::size_t anet_channels() const;
  std::size_t snet_tap_channels(std::size_t tap) const;
  std::size_t anet_feature_extent(std::size_t input) const;
  std::size_t snet_tap_extent(std::size_t tap, std::size_t input) const;
  std::size_t semantic_response_extent() const;

  // Checks every invariant of the profile (extents, declared shapes,
  // correlation geometry); throws ContractViolation on the first failure.
  void validate() const;
};

// Spatial extent after each layer for a square input of `input` pixels.
// Returns 0 from the first layer the input is too small for.
std::vector<std::size_t> layer_extents(const std::vector<LayerSpec>& layers, std::size_t input);

// Center crop offset of `inner` inside `outer`; throws unless the margin is
// non-negative and even.
std::size_t center_offset(std::size_t outer, std::size_t inner);

}  // namespace twofold
