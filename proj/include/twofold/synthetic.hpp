#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "twofold/box.hpp"
#include "twofold/sequence.hpp"
#include "twofold/tensor.hpp"

namespace twofold {

enum class ShapeClass { disk = 0, square = 1, triangle = 2, ring = 3 };
inline constexpr std::size_t kShapeClassCount = 4;

using Rgb = std::array<float, 3>;

const char* shape_name(ShapeClass s);
ShapeClass shape_from_name(const std::string& name);

// Pixel-center inclusion test for a shape of side `size` centered at the
// origin. The triangle points up.
bool shape_contains(ShapeClass shape, double dx, double dy, double size);

// One moving target on a flat background. The target color blends linearly
// from `color` to `end_color` across the sequence; size changes by
// `scale_drift` per frame; the center follows
// start + t * velocity + wobble * sin(2 pi t / wobble_period).
struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t width = 160, height = 160;
  std::size_t frames = 60;
  ShapeClass shape = ShapeClass::disk;
  Rgb color{0.9f, 0.2f, 0.2f};
  Rgb end_color{0.9f, 0.2f, 0.2f};
  Rgb background{0.35f, 0.35f, 0.35f};
  double start_x = 80.0, start_y = 80.0;
  double size = 24.0;
  double vx = 0.0, vy = 0.0;
  double wobble_x = 0.0, wobble_y = 0.0, wobble_period = 20.0;
  double scale_drift = 1.0;
  // Reflect the velocity off the canvas edges instead of rejecting the spec.
  bool bounce = false;
  std::size_t clutter_count = 0;
  std::vector<Rgb> clutter_palette;  // empty: random colors
  float noise = 0.0f;                // Gaussian sigma, values clamped to [0, 1]
  std::uint64_t seed = 1;
};

// Ground-truth boxes for every frame (center convention).
std::vector<BoundingBox> synthetic_trajectory(const SyntheticSpec& spec);
// Fraction of the box area that lies inside a width x height canvas.
double inside_fraction(const BoundingBox& box, std::size_t width, std::size_t height);
// Throws ContractViolation for invalid fields or a target that is less
// than half inside the canvas on some frame.
void validate(const SyntheticSpec& spec);

Sequence render_synthetic(const SyntheticSpec& spec);
void generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

// Randomized benchmark: `count` valid specs drawn from one seed.
struct BenchmarkSpec {
  std::size_t count = 20;
  std::size_t frames = 60;
  std::size_t width = 160, height = 160;
  std::uint64_t seed = 2024;
  std::string prefix = "syn";
};
std::vector<SyntheticSpec> benchmark_specs(const BenchmarkSpec& spec);

// Single centered shape per image for S-Net pretraining; label is the
// ShapeClass index.
struct LabeledImage {
  Tensor image;
  int label = 0;
};
struct ClassificationSpec {
  std::size_t count = 2000;
  std::size_t size = 63;
  std::size_t classes = kShapeClassCount;
  std::uint64_t seed = 11;
};
std::vector<LabeledImage> make_classification_set(const ClassificationSpec& spec);
// <dir>/images/NNNNN.ppm plus <dir>/labels.csv (`file,label`).
void save_classification_set(const std::vector<LabeledImage>& set, const std::filesystem::path& dir);
std::vector<LabeledImage> load_classification_set(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);
void to_json(nlohmann::json& j, const BenchmarkSpec& s);
void from_json(const nlohmann::json& j, BenchmarkSpec& s);
void to_json(nlohmann::json& j, const ClassificationSpec& s);
void from_json(const nlohmann::json& j, ClassificationSpec& s);

}  // namespace twofold
