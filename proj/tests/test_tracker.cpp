#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "twofold/errors.hpp"
#include "twofold/synthetic.hpp"
#include "twofold/tracker.hpp"

using namespace twofold;
using namespace twofold::testing;

namespace {

// value(x, y, c) = 0.01 x + 0.02 y + 0.1 c, indexed by pixel.
Tensor ramp(std::size_t h, std::size_t w) {
  Tensor t({h, w, 3});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(y, x, c) = 0.01f * x + 0.02f * y + 0.1f * c;
  return t;
}

SyntheticSpec plain_spec(std::size_t frames) {
  SyntheticSpec s;
  s.name = "plain";
  s.frames = frames;
  s.shape = ShapeClass::square;
  s.color = {0.95f, 0.85f, 0.1f};
  s.end_color = s.color;
  s.background = {0.15f, 0.25f, 0.45f};
  s.size = 28.0;
  s.clutter_count = 2;
  s.clutter_palette = {{0.1f, 0.7f, 0.2f}};
  s.seed = 12;
  return s;
}

}  // namespace

TEST_CASE("context side") {
  const BoundingBox b{50, 50, 20, 40};
  // p = 30: sqrt(50 * 70)
  CHECK(context_side(b) == doctest::Approx(std::sqrt(3500.0)));
}

TEST_CASE("crop sampling matches a bilinear oracle") {
  const Tensor frame = ramp(10, 10);
  // Inside the frame the ramp is reproduced exactly by bilinear sampling;
  // pixel (x, y) is centered at (x + 0.5, y + 0.5).
  const double cx = 5.3, cy = 4.6, side = 6.0;
  const std::size_t n = 8;
  const Tensor crop = crop_square(frame, cx, cy, side, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double u = cx - side / 2 + (j + 0.5) * side / n - 0.5;
      const double v = cy - side / 2 + (i + 0.5) * side / n - 0.5;
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(crop.at(i, j, c) == doctest::Approx(0.01 * u + 0.02 * v + 0.1 * c).epsilon(1e-5));
    }

  const Tensor big = ramp(20, 20);
  CHECK(bitwise_equal(crop_square(big, 10.0, 10.0, 20.0, 20), big));

  const auto mean = channel_mean(big);
  const Tensor outside = crop_square(big, -100.0, -100.0, 10.0, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 3; ++c) CHECK(outside.at(i, j, c) == mean[c]);

  // Left half of this crop lies off the frame.
  const Tensor edge = crop_square(big, 0.0, 10.0, 8.0, 8);
  CHECK(edge.at(4, 0, 1) == mean[1]);
  CHECK(edge.at(4, 7, 1) == doctest::Approx(big.at(10, 3, 1)).epsilon(1e-5));
}

TEST_CASE("context crops") {
  const NetworkProfile p = NetworkProfile::desk();
  const Tensor frame = ramp(80, 90);
  const BoundingBox box{40, 30, 12, 16};
  const Tensor zs = crop_with_context(frame, box, p.search_size, p);
  CHECK(zs.shape() == Shape{p.search_size, p.search_size, 3});
  const Tensor z = target_from_context(zs, p);
  CHECK(z.shape() == Shape{p.target_size, p.target_size, 3});
  // z is the middle of zs, i.e. the plain target-sized context crop.
  const Tensor direct = crop_with_context(frame, box, p.target_size, p,
                                          double(p.target_size) / double(p.search_size));
  CHECK(rel_error(z, direct) < 1e-4);
  CHECK_THROWS_AS(crop_with_context(frame, BoundingBox{-50, -50, 10, 10}, p.search_size, p),
                  ContractViolation);
}

TEST_CASE("bicubic upsampling") {
  Tensor flat({3, 4, 1}, 0.25f);
  const Tensor up = bicubic_upsample(flat, 12, 16);
  CHECK(up.shape() == Shape{12, 16, 1});
  for (float v : up.data()) CHECK(v == doctest::Approx(0.25f));

  // Direct cubic convolution with clamped source indices.
  std::mt19937_64 rng(6);
  const Tensor src = random_tensor(rng, {5, 7, 1});
  const Tensor out = bicubic_upsample(src, 9, 20);
  auto kernel = [](double t) {
    const double a = -0.75;
    t = std::abs(t);
    if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
    if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
    return 0.0;
  };
  auto clampi = [](long v, long n) { return std::min(std::max(v, 0L), n - 1); };
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      const double sy = (y + 0.5) * 5.0 / 9.0 - 0.5, sx = (x + 0.5) * 7.0 / 20.0 - 0.5;
      const long y0 = long(std::floor(sy)), x0 = long(std::floor(sx));
      double acc = 0.0;
      for (long i = y0 - 1; i <= y0 + 2; ++i)
        for (long j = x0 - 1; j <= x0 + 2; ++j)
          acc += kernel(sy - double(i)) * kernel(sx - double(j)) * src.at(clampi(i, 5), clampi(j, 7), 0);
      CHECK(out.at(y, x, 0) == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("response combination") {
  std::mt19937_64 rng(2);
  ResponseMap a{random_tensor(rng, {9, 9, 1}), 8};
  ResponseMap b{random_tensor(rng, {9, 9, 1}), 8};
  a.scores[0] = -0.0f;
  CHECK(bitwise_equal(combine_responses(a, b, 1.0).scores, a.scores));
  CHECK(bitwise_equal(combine_responses(a, b, 0.0).scores, b.scores));
  const ResponseMap mid = combine_responses(a, b, 0.3);
  CHECK(mid.scores[5] == doctest::Approx(0.3f * a.scores[5] + 0.7f * b.scores[5]));
  CHECK_THROWS_AS(combine_responses(a, b, 1.5), ContractViolation);
  CHECK_THROWS_AS(combine_responses(a, ResponseMap{Tensor({7, 7, 1}), 8}, 0.5), ContractViolation);
}

TEST_CASE("argmax ignores constant offsets and breaks ties low") {
  std::vector<float> v{0.1f, 0.7f, 0.3f, 0.7f, 0.2f};
  CHECK(argmax(v) == 1);
  for (float offset : {-5.0f, 0.5f, 100.0f}) {
    std::vector<float> w = v;
    for (float& x : w) x += offset;
    CHECK(argmax(w) == 1);
  }
  std::vector<Tensor> maps{Tensor({2, 2, 1}, 3.0f), Tensor({2, 2, 1}, 3.0f)};
  normalize_jointly(maps);
  for (const Tensor& m : maps)
    for (float x : m.data()) CHECK(x == 0.0f);
  maps = {Tensor({1, 2, 1}, std::vector<float>{2, 4}), Tensor({1, 2, 1}, std::vector<float>{6, 3})};
  normalize_jointly(maps);
  CHECK(maps[0][0] == 0.0f);
  CHECK(maps[1][0] == 1.0f);
  CHECK(maps[0][1] == 0.5f);
}

TEST_CASE("tracker config validation") {
  TrackConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = 1.2;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = TrackConfig{};
  c.scales = {};
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = TrackConfig{};
  c.upsample = 0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
}

TEST_CASE("a static target stays put") {
  const NetworkProfile p = NetworkProfile::desk();
  const TwofoldModel model = TwofoldModel::random(p, true, SemanticVariant{}, 41);
  const Sequence seq = render_synthetic(plain_spec(50));
  const auto boxes = track_sequence(seq, model, TrackConfig{});
  REQUIRE(boxes.size() == 50);
  CHECK(boxes[0] == *seq.boxes[0]);
  double worst = 0.0;
  for (const auto& b : boxes) worst = std::max(worst, std::hypot(b.cx - seq.boxes[0]->cx, b.cy - seq.boxes[0]->cy));
  CHECK(worst <= 2.0);
}

TEST_CASE("single-branch endpoints of lambda") {
  const NetworkProfile p = NetworkProfile::desk();
  const TwofoldModel both = TwofoldModel::random(p, true, SemanticVariant{}, 42);
  TwofoldModel app = both;
  app.snet.reset();
  app.head.reset();
  TwofoldModel sem = both;
  sem.anet.reset();
  SyntheticSpec s = plain_spec(6);
  s.vx = 2.0;
  const Sequence seq = render_synthetic(s);
  TrackConfig c;
  c.lambda = 1.0;
  CHECK(track_sequence(seq, both, c) == track_sequence(seq, app, c));
  c.lambda = 0.0;
  CHECK(track_sequence(seq, both, c) == track_sequence(seq, sem, c));
}

TEST_CASE("channel attention runs once per sequence") {
  const NetworkProfile p = NetworkProfile::desk();
  const Sequence seq = render_synthetic(plain_spec(5));
  struct Case {
    SemanticVariant v;
    std::size_t layers;
  };
  for (const Case& k : {Case{{true, true}, 2}, Case{{false, true}, 1}, Case{{true, false}, 0}}) {
    const TwofoldModel m = TwofoldModel::random(p, true, k.v, 43);
    const std::size_t before = attention_evaluations();
    track_sequence(seq, m, TrackConfig{});
    CHECK(attention_evaluations() - before == k.layers);
  }
}

TEST_CASE("attention dump is sorted per layer") {
  const NetworkProfile p = NetworkProfile::desk();
  const TwofoldModel m = TwofoldModel::random(p, false, SemanticVariant{}, 44);
  const Sequence seq = render_synthetic(plain_spec(1));
  const TrackerState st = init(seq.frame(0), *seq.boxes[0], m, TrackConfig{});
  const auto rows = dump_attention(st);
  REQUIRE(rows.size() == p.snet_tap_channels(0) + p.snet_tap_channels(1));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].layer != rows[i - 1].layer) continue;
    CHECK(rows[i].rank == rows[i - 1].rank + 1);
    CHECK(rows[i].weight <= rows[i - 1].weight);
    if (rows[i].weight == rows[i - 1].weight) CHECK(rows[i].channel > rows[i - 1].channel);
  }
  for (const auto& r : rows) {
    CHECK(r.weight > 0.5f);
    CHECK(r.weight < 1.5f);
  }
  std::ostringstream csv;
  write_attention_csv(csv, rows);
  CHECK(csv.str().rfind("layer,rank,channel_index,weight\n", 0) == 0);

  const TwofoldModel plain = TwofoldModel::random(p, false, SemanticVariant{true, false}, 44);
  const TrackerState st2 = init(seq.frame(0), *seq.boxes[0], plain, TrackConfig{});
  for (const auto& r : dump_attention(st2)) CHECK(r.weight == 1.0f);
}

TEST_CASE("output formats") {
  std::ostringstream track;
  write_track(track, {BoundingBox{15, 20, 10, 8}, BoundingBox{16.5, 20, 10, 8}});
  CHECK(track.str() == "0,10,16,10,8\n1,11.5,16,10,8\n");

  std::ostringstream dump;
  write_response_record(dump, 7, {Tensor({1, 2, 1}, std::vector<float>{1.0f, -2.0f})});
  const std::string bytes = dump.str();
  REQUIRE(bytes.size() == 8 + 16 + 8);
  CHECK(bytes.substr(0, 8) == "TWFRSP01");
  CHECK(bytes[8] == 7);
  CHECK(bytes[12] == 1);
  CHECK(bytes[16] == 1);
  CHECK(bytes[20] == 2);
  float second;
  std::memcpy(&second, bytes.data() + 28, 4);
  CHECK(second == -2.0f);
}

TEST_CASE("track_sequence rejects inconsistent frames") {
  const NetworkProfile p = NetworkProfile::desk();
  const TwofoldModel m = TwofoldModel::random(p, true, std::nullopt, 45);
  Sequence seq = render_synthetic(plain_spec(3));
  seq.frames[2] = Tensor({100, 100, 3});
  CHECK_THROWS_AS(track_sequence(seq, m, TrackConfig{}), LoadError);
}
