#include "twofold/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "twofold/errors.hpp"
#include "twofold/image_io.hpp"

namespace twofold {

namespace fs = std::filesystem;

const char* shape_name(ShapeClass s) {
  switch (s) {
    case ShapeClass::disk: return "disk";
    case ShapeClass::square: return "square";
    case ShapeClass::triangle: return "triangle";
    case ShapeClass::ring: return "ring";
  }
  return "?";
}

ShapeClass shape_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kShapeClassCount; ++i) {
    if (name == shape_name(static_cast<ShapeClass>(i))) return static_cast<ShapeClass>(i);
  }
  throw ContractViolation("unknown shape '" + name + "' (disk, square, triangle, ring)");
}

bool shape_contains(ShapeClass shape, double dx, double dy, double size) {
  const double half = size / 2.0;
  switch (shape) {
    case ShapeClass::disk:
      return dx * dx + dy * dy <= half * half;
    case ShapeClass::square:
      return std::abs(dx) <= half && std::abs(dy) <= half;
    case ShapeClass::triangle: {
      if (dy < -half || dy > half) return false;
      const double t = (dy + half) / size;
      return std::abs(dx) <= half * t;
    }
    case ShapeClass::ring: {
      const double d2 = dx * dx + dy * dy;
      const double inner = 0.55 * half;
      return d2 <= half * half && d2 >= inner * inner;
    }
  }
  return false;
}

namespace {

// Pixel (x, y) covers [x, x+1) x [y, y+1); its center is at +0.5.
void draw_shape(Tensor& img, ShapeClass shape, double cx, double cy, double size,
                const Rgb& color) {
  const long H = static_cast<long>(img.height()), W = static_cast<long>(img.width());
  const long y0 = std::max(0L, static_cast<long>(std::floor(cy - size / 2.0)) - 1);
  const long y1 = std::min(H - 1, static_cast<long>(std::ceil(cy + size / 2.0)) + 1);
  const long x0 = std::max(0L, static_cast<long>(std::floor(cx - size / 2.0)) - 1);
  const long x1 = std::min(W - 1, static_cast<long>(std::ceil(cx + size / 2.0)) + 1);
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      if (!shape_contains(shape, x + 0.5 - cx, y + 0.5 - cy, size)) continue;
      float* px = img.ptr(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      px[0] = color[0];
      px[1] = color[1];
      px[2] = color[2];
    }
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  Rgb out;
  for (int i = 0; i < 3; ++i) out[i] = static_cast<float>(a[i] + (b[i] - a[i]) * t);
  return out;
}

Rgb random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  return {u(rng), u(rng), u(rng)};
}

float color_distance(const Rgb& a, const Rgb& b) {
  float d = 0.0f;
  for (int i = 0; i < 3; ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Advances `pos` by `vel`, reflecting off [lo, hi].
void reflect_step(double& pos, double& vel, double lo, double hi) {
  pos += vel;
  if (hi <= lo) {
    pos = (lo + hi) / 2.0;
    return;
  }
  for (int guard = 0; guard < 8 && (pos < lo || pos > hi); ++guard) {
    if (pos < lo) pos = 2 * lo - pos;
    if (pos > hi) pos = 2 * hi - pos;
    vel = -vel;
  }
  pos = std::clamp(pos, lo, hi);
}

struct Clutter {
  ShapeClass shape;
  Rgb color;
  double x, y, vx, vy, size;
};

}  // namespace

std::vector<BoundingBox> synthetic_trajectory(const SyntheticSpec& spec) {
  std::vector<BoundingBox> boxes;
  boxes.reserve(spec.frames);
  double bx = spec.start_x, by = spec.start_y;
  double vx = spec.vx, vy = spec.vy;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double td = static_cast<double>(t);
    const double size = spec.size * std::pow(spec.scale_drift, td);
    if (spec.bounce) {
      if (t > 0) {
        reflect_step(bx, vx, size / 2.0, static_cast<double>(spec.width) - size / 2.0);
        reflect_step(by, vy, size / 2.0, static_cast<double>(spec.height) - size / 2.0);
      }
    } else {
      bx = spec.start_x + td * spec.vx;
      by = spec.start_y + td * spec.vy;
    }
    const double phase = 2.0 * std::numbers::pi * td / spec.wobble_period;
    boxes.push_back({bx + spec.wobble_x * std::sin(phase), by + spec.wobble_y * std::sin(phase),
                     size, size});
  }
  return boxes;
}

double inside_fraction(const BoundingBox& box, std::size_t width, std::size_t height) {
  const double ix = std::max(0.0, std::min(box.right(), static_cast<double>(width)) -
                                      std::max(box.left(), 0.0));
  const double iy = std::max(0.0, std::min(box.bottom(), static_cast<double>(height)) -
                                      std::max(box.top(), 0.0));
  return box.area() > 0.0 ? ix * iy / box.area() : 0.0;
}

void validate(const SyntheticSpec& spec) {
  auto fail = [&](const std::string& why) {
    throw ContractViolation("synthetic spec '" + spec.name + "': " + why);
  };
  if (spec.width < 8 || spec.height < 8) fail("canvas must be at least 8x8");
  if (spec.frames == 0) fail("frames must be positive");
  if (!(spec.size >= 2.0)) fail("size must be at least 2 px");
  if (!(spec.scale_drift > 0.0)) fail("scale_drift must be positive");
  if (!(spec.wobble_period > 0.0)) fail("wobble_period must be positive");
  if (!(spec.noise >= 0.0f)) fail("noise must be non-negative");
  for (const Rgb* c : {&spec.color, &spec.end_color, &spec.background}) {
    for (float v : *c) {
      if (!(v >= 0.0f && v <= 1.0f)) fail("colors must lie in [0, 1]");
    }
  }
  if (spec.color == spec.background || spec.end_color == spec.background) {
    fail("target color equals the background");
  }
  const auto boxes = synthetic_trajectory(spec);
  for (std::size_t t = 0; t < boxes.size(); ++t) {
    const double f = inside_fraction(boxes[t], spec.width, spec.height);
    if (!(f >= 0.5)) {
      fail("target only " + std::to_string(f * 100.0) + "% inside the canvas at frame " +
           std::to_string(t));
    }
  }
}

Sequence render_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<Clutter> clutter(spec.clutter_count);
  for (Clutter& c : clutter) {
    c.shape = static_cast<ShapeClass>(rng() % kShapeClassCount);
    c.color = spec.clutter_palette.empty() ? random_color(rng)
                                           : spec.clutter_palette[rng() % spec.clutter_palette.size()];
    c.size = spec.size * (0.6 + 0.6 * u01(rng));
    c.x = u01(rng) * static_cast<double>(spec.width);
    c.y = u01(rng) * static_cast<double>(spec.height);
    c.vx = 2.0 * u01(rng) - 1.0;
    c.vy = 2.0 * u01(rng) - 1.0;
  }
  std::normal_distribution<float> noise(0.0f, 1.0f);

  Sequence seq;
  seq.name = spec.name;
  const auto boxes = synthetic_trajectory(spec);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    Tensor frame({spec.height, spec.width, 3});
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = spec.background[i % 3];
    for (Clutter& c : clutter) {
      if (t > 0) {
        reflect_step(c.x, c.vx, 0.0, static_cast<double>(spec.width));
        reflect_step(c.y, c.vy, 0.0, static_cast<double>(spec.height));
      }
      draw_shape(frame, c.shape, c.x, c.y, c.size, c.color);
    }
    const double blend = spec.frames > 1 ? static_cast<double>(t) / (spec.frames - 1) : 0.0;
    const BoundingBox& b = boxes[t];
    draw_shape(frame, spec.shape, b.cx, b.cy, b.w, lerp(spec.color, spec.end_color, blend));
    if (spec.noise > 0.0f) {
      for (float& v : frame.data()) v = std::clamp(v + spec.noise * noise(rng), 0.0f, 1.0f);
    }
    seq.frames.push_back(std::move(frame));
    seq.boxes.emplace_back(b);
  }
  return seq;
}

void generate_synthetic(const SyntheticSpec& spec, const fs::path& dir) {
  save_sequence(render_synthetic(spec), dir);
}

std::vector<SyntheticSpec> benchmark_specs(const BenchmarkSpec& bench) {
  std::mt19937_64 rng(bench.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  std::vector<SyntheticSpec> specs;
  for (std::size_t i = 0; i < bench.count; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw ContractViolation("benchmark: canvas too small for its targets");
      SyntheticSpec s;
      char name[64];
      std::snprintf(name, sizeof name, "%s%03zu", bench.prefix.c_str(), i);
      s.name = name;
      s.width = bench.width;
      s.height = bench.height;
      s.frames = bench.frames;
      s.shape = static_cast<ShapeClass>(rng() % kShapeClassCount);
      const float gray = static_cast<float>(uniform(0.15, 0.55));
      for (float& v : s.background) v = std::clamp(gray + static_cast<float>(uniform(-0.08, 0.08)), 0.0f, 1.0f);
      do { s.color = random_color(rng); } while (color_distance(s.color, s.background) < 0.35f);
      if (u01(rng) < 0.5) {
        do { s.end_color = random_color(rng); } while (color_distance(s.end_color, s.background) < 0.35f);
      } else {
        s.end_color = s.color;
      }
      s.size = uniform(18.0, 30.0);
      const double speed = uniform(0.5, 2.5), heading = uniform(0.0, 2.0 * std::numbers::pi);
      s.vx = speed * std::cos(heading);
      s.vy = speed * std::sin(heading);
      s.wobble_x = uniform(0.0, 5.0);
      s.wobble_y = uniform(0.0, 5.0);
      s.wobble_period = uniform(15.0, 40.0);
      s.scale_drift = uniform(0.993, 1.007);
      s.bounce = true;
      s.start_x = uniform(s.size, static_cast<double>(s.width) - s.size);
      s.start_y = uniform(s.size, static_cast<double>(s.height) - s.size);
      s.clutter_count = 2 + rng() % 5;
      s.clutter_palette = {s.color, random_color(rng), random_color(rng), random_color(rng)};
      s.noise = static_cast<float>(uniform(0.01, 0.05));
      s.seed = rng();
      try {
        validate(s);
      } catch (const ContractViolation&) {
        continue;
      }
      specs.push_back(std::move(s));
      break;
    }
  }
  return specs;
}

std::vector<LabeledImage> make_classification_set(const ClassificationSpec& spec) {
  if (spec.classes < 2 || spec.classes > kShapeClassCount) {
    throw ContractViolation("classification set needs 2.." + std::to_string(kShapeClassCount) +
                            " classes, got " + std::to_string(spec.classes));
  }
  if (spec.size < 16) throw ContractViolation("classification images must be at least 16 px");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<float> noise(0.0f, 0.03f);
  const double side = static_cast<double>(spec.size);

  std::vector<LabeledImage> set;
  set.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const int label = static_cast<int>(i % spec.classes);
    Rgb bg;
    for (float& v : bg) v = static_cast<float>(0.1 + 0.5 * u01(rng));
    Rgb fg;
    do { fg = random_color(rng); } while (color_distance(fg, bg) < 0.3f);
    Tensor img({spec.size, spec.size, 3});
    for (std::size_t k = 0; k < img.size(); ++k) img[k] = bg[k % 3];
    const std::size_t extras = rng() % 3;
    for (std::size_t e = 0; e < extras; ++e) {
      draw_shape(img, static_cast<ShapeClass>(rng() % kShapeClassCount), u01(rng) * side,
                 u01(rng) * side, side * (0.1 + 0.06 * u01(rng)), random_color(rng));
    }
    const double size = side * (0.3 + 0.3 * u01(rng));
    const double cx = side / 2.0 + side * 0.08 * (2.0 * u01(rng) - 1.0);
    const double cy = side / 2.0 + side * 0.08 * (2.0 * u01(rng) - 1.0);
    draw_shape(img, static_cast<ShapeClass>(label), cx, cy, size, fg);
    for (float& v : img.data()) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
    set.push_back({std::move(img), label});
  }
  return set;
}

void save_classification_set(const std::vector<LabeledImage>& set, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw LoadError("cannot write " + (dir / "labels.csv").string());
  labels << "file,label\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.ppm", i);
    save_ppm(dir / "images" / name, set[i].image);
    labels << "images/" << name << ',' << set[i].label << '\n';
  }
}

std::vector<LabeledImage> load_classification_set(const fs::path& dir) {
  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw LoadError("missing " + (dir / "labels.csv").string());
  std::vector<LabeledImage> set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(labels, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw FormatError((dir / "labels.csv").string() + ":" + std::to_string(line_no) +
                        ": expected file,label");
    }
    int label = 0;
    try {
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw FormatError((dir / "labels.csv").string() + ":" + std::to_string(line_no) +
                        ": bad label");
    }
    set.push_back({load_image(dir / line.substr(0, comma)), label});
  }
  return set;
}

// JSON ---------------------------------------------------------------------

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"name", s.name},
       {"width", s.width},
       {"height", s.height},
       {"frames", s.frames},
       {"shape", shape_name(s.shape)},
       {"color", s.color},
       {"end_color", s.end_color},
       {"background", s.background},
       {"start", {s.start_x, s.start_y}},
       {"size", s.size},
       {"velocity", {s.vx, s.vy}},
       {"wobble", {s.wobble_x, s.wobble_y}},
       {"wobble_period", s.wobble_period},
       {"scale_drift", s.scale_drift},
       {"bounce", s.bounce},
       {"clutter_count", s.clutter_count},
       {"clutter_palette", s.clutter_palette},
       {"noise", s.noise},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.name = j.value("name", s.name);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.frames = j.value("frames", s.frames);
  if (j.contains("shape")) s.shape = shape_from_name(j.at("shape").get<std::string>());
  s.color = j.value("color", s.color);
  s.end_color = j.value("end_color", s.color);
  s.background = j.value("background", s.background);
  if (j.contains("start")) {
    s.start_x = j.at("start").at(0).get<double>();
    s.start_y = j.at("start").at(1).get<double>();
  }
  s.size = j.value("size", s.size);
  if (j.contains("velocity")) {
    s.vx = j.at("velocity").at(0).get<double>();
    s.vy = j.at("velocity").at(1).get<double>();
  }
  if (j.contains("wobble")) {
    s.wobble_x = j.at("wobble").at(0).get<double>();
    s.wobble_y = j.at("wobble").at(1).get<double>();
  }
  s.wobble_period = j.value("wobble_period", s.wobble_period);
  s.scale_drift = j.value("scale_drift", s.scale_drift);
  s.bounce = j.value("bounce", s.bounce);
  s.clutter_count = j.value("clutter_count", s.clutter_count);
  s.clutter_palette = j.value("clutter_palette", s.clutter_palette);
  s.noise = j.value("noise", s.noise);
  s.seed = j.value("seed", s.seed);
}

void to_json(nlohmann::json& j, const BenchmarkSpec& s) {
  j = {{"count", s.count}, {"frames", s.frames}, {"width", s.width},
       {"height", s.height}, {"seed", s.seed},   {"prefix", s.prefix}};
}

void from_json(const nlohmann::json& j, BenchmarkSpec& s) {
  s.count = j.value("count", s.count);
  s.frames = j.value("frames", s.frames);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.seed = j.value("seed", s.seed);
  s.prefix = j.value("prefix", s.prefix);
}

void to_json(nlohmann::json& j, const ClassificationSpec& s) {
  j = {{"count", s.count}, {"size", s.size}, {"classes", s.classes}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ClassificationSpec& s) {
  s.count = j.value("count", s.count);
  s.size = j.value("size", s.size);
  s.classes = j.value("classes", s.classes);
  s.seed = j.value("seed", s.seed);
}

}  // namespace twofold
