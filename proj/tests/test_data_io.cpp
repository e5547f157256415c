#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "twofold/errors.hpp"
#include "twofold/image_io.hpp"
#include "twofold/sequence.hpp"
#include "twofold/synthetic.hpp"
#include "twofold/weights.hpp"

using namespace twofold;
using namespace twofold::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("twofold_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<ConstParamRef> const_refs(const std::vector<ParamRef>& refs) {
  std::vector<ConstParamRef> out;
  for (const auto& r : refs) out.push_back({r.name, r.tensor});
  return out;
}

}  // namespace

TEST_CASE("P6 and P5 decoding") {
  const std::string p6 = std::string("P6\n# two by two\n2 2\n255\n") +
                         std::string("\x00\x10\x20\x30\x40\x50\x60\x70\x80\x90\xa0\xff", 12);
  const Tensor img = decode_pnm(p6);
  REQUIRE(img.shape() == Shape{2, 2, 3});
  const unsigned char raw[12] = {0x00, 0x10, 0x20, 0x30, 0x40, 0x50, 0x60, 0x70, 0x80, 0x90, 0xa0, 0xff};
  for (std::size_t i = 0; i < 12; ++i) CHECK(img[i] == static_cast<float>(raw[i]) / 255.0f);

  const std::string p5 = std::string("P5 3 1 255 ") + std::string("\x00\x7f\xff", 3);
  const Tensor gray = decode_pnm(p5);
  REQUIRE(gray.shape() == Shape{1, 3, 3});
  for (std::size_t x = 0; x < 3; ++x) {
    CHECK(gray.at(0, x, 0) == gray.at(0, x, 1));
    CHECK(gray.at(0, x, 1) == gray.at(0, x, 2));
  }
  CHECK(gray.at(0, 1, 0) == 127.0f / 255.0f);

  CHECK_THROWS_AS(decode_pnm("P3\n1 1\n255\n0 0 0"), FormatError);
  CHECK_THROWS_AS(decode_pnm("GIF89a"), FormatError);
  CHECK_THROWS_AS(decode_pnm(""), FormatError);
  CHECK_THROWS_AS(decode_pnm(p6.substr(0, p6.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_pnm("P6\n2 2\n"), FormatError);
  CHECK_THROWS_AS(decode_pnm("P6\n2 2\n65535\n"), FormatError);
  CHECK_THROWS_AS(load_image("/nonexistent/frame.ppm"), LoadError);
}

TEST_CASE("P6 encode/decode round trip is bit-exact on 8-bit values") {
  std::mt19937_64 rng(1);
  Tensor img({5, 7, 3});
  for (float& v : img.data()) v = static_cast<float>(rng() % 256) / 255.0f;
  const std::string bytes = encode_ppm(img);
  CHECK(bitwise_equal(decode_pnm(bytes), img));
  CHECK(encode_ppm(decode_pnm(bytes)) == bytes);
}

TEST_CASE("annotation parsing") {
  const auto comma = parse_annotations("10,20,30,40\n1.5,2.5,3,4\n", "t");
  const auto tab = parse_annotations("10\t20\t30\t40\r\n1.5\t2.5\t3\t4\n", "t");
  REQUIRE(comma.size() == 2);
  REQUIRE(tab.size() == 2);
  CHECK(comma[0]->cx == 25.0);
  CHECK(comma[0]->cy == 40.0);
  CHECK(comma[0]->w == 30.0);
  CHECK(comma[0]->h == 40.0);
  for (std::size_t i = 0; i < 2; ++i) CHECK(*comma[i] == *tab[i]);

  const auto missing = parse_annotations("1,2,3,4\nNaN,NaN,NaN,NaN\n0,0,0,0\n", "t");
  REQUIRE(missing.size() == 3);
  CHECK(missing[0].has_value());
  CHECK_FALSE(missing[1].has_value());
  CHECK_FALSE(missing[2].has_value());

  CHECK_THROWS_AS(parse_annotations("1,2,3\n", "t"), FormatError);
  CHECK_THROWS_AS(parse_annotations("1,2,3,x\n", "t"), FormatError);
  CHECK_THROWS_AS(parse_annotations("1,2,3,4,5\n", "t"), FormatError);
}

TEST_CASE("OTB directory loading") {
  TempDir tmp("seq");
  const fs::path dir = tmp.path / "toy";
  fs::create_directories(dir / "img");
  Tensor frame({4, 6, 3}, 128.0f / 255.0f);
  for (int i = 1; i <= 3; ++i) save_ppm(dir / "img" / ("000" + std::to_string(i) + ".ppm"), frame);

  SUBCASE("three frames, three lines") {
    write_bytes(dir / "groundtruth_rect.txt", "10,20,30,40\n11,20,30,40\n12,20,30,40\n");
    const Sequence seq = load_sequence(dir);
    CHECK(seq.name == "toy");
    CHECK(seq.size() == 3);
    CHECK(seq.first_box() == BoundingBox{25.0, 40.0, 30.0, 40.0});
    CHECK(seq.boxes[2]->cx == 27.0);
    CHECK(seq.frame(1).shape() == Shape{4, 6, 3});
    CHECK(list_sequences(tmp.path) == std::vector<fs::path>{dir});
  }
  SUBCASE("first line only") {
    write_bytes(dir / "groundtruth_rect.txt", "10\t20\t30\t40\n");
    const Sequence seq = load_sequence(dir);
    CHECK(seq.boxes.size() == 3);
    CHECK_FALSE(seq.boxes[1].has_value());
  }
  SUBCASE("count mismatch") {
    write_bytes(dir / "groundtruth_rect.txt", "10,20,30,40\n10,20,30,40\n");
    CHECK_THROWS_AS(load_sequence(dir), LoadError);
  }
  SUBCASE("missing annotation") {
    CHECK_THROWS_AS(load_sequence(dir), LoadError);
  }
  SUBCASE("unreadable frame") {
    write_bytes(dir / "groundtruth_rect.txt", "10,20,30,40\n");
    write_bytes(dir / "img" / "0001.ppm", "garbage");
    CHECK_THROWS_AS(load_sequence(dir), FormatError);
  }
  SUBCASE("save and reload") {
    Sequence seq;
    seq.name = "mem";
    seq.frames = {frame, frame};
    seq.boxes = {BoundingBox{3, 2, 2, 2}, std::nullopt};
    save_sequence(seq, tmp.path / "mem");
    const Sequence back = load_sequence(tmp.path / "mem");
    CHECK(back.size() == 2);
    CHECK(back.first_box() == seq.first_box());
    CHECK_FALSE(back.boxes[1].has_value());
    CHECK(bitwise_equal(back.frame(0), frame));
  }
}

TEST_CASE("synthetic sequences") {
  SyntheticSpec spec;
  spec.frames = 12;
  spec.start_x = 40.0;
  spec.start_y = 50.0;
  spec.vx = 2.0;
  spec.vy = 1.0;

  SUBCASE("linear motion gives exact arithmetic centers") {
    const auto boxes = synthetic_trajectory(spec);
    for (std::size_t t = 0; t < boxes.size(); ++t) {
      CHECK(boxes[t].cx == 40.0 + 2.0 * static_cast<double>(t));
      CHECK(boxes[t].cy == 50.0 + 1.0 * static_cast<double>(t));
    }
  }

  SUBCASE("fixed seed is bit-identical") {
    spec.clutter_count = 4;
    spec.noise = 0.05f;
    const Sequence a = render_synthetic(spec);
    const Sequence b = render_synthetic(spec);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(bitwise_equal(a.frames[t], b.frames[t]));
    spec.seed = 2;
    const Sequence c = render_synthetic(spec);
    CHECK_FALSE(bitwise_equal(a.frames[3], c.frames[3]));
  }

  SUBCASE("without clutter or noise only target pixels differ from background") {
    for (std::size_t s = 0; s < kShapeClassCount; ++s) {
      spec.shape = static_cast<ShapeClass>(s);
      spec.size = 21.0;
      spec.scale_drift = 1.01;
      const Sequence seq = render_synthetic(spec);
      for (std::size_t t = 0; t < seq.size(); t += 5) {
        const Tensor& f = seq.frames[t];
        const BoundingBox& b = *seq.boxes[t];
        std::size_t differing = 0, expected = 0;
        for (std::size_t y = 0; y < f.height(); ++y)
          for (std::size_t x = 0; x < f.width(); ++x) {
            bool diff = false;
            for (std::size_t c = 0; c < 3; ++c) diff |= f.at(y, x, c) != spec.background[c];
            differing += diff;
            // Independent inclusion arithmetic at pixel centers.
            const double dx = x + 0.5 - b.cx, dy = y + 0.5 - b.cy, r = b.w / 2.0;
            bool inside = false;
            switch (spec.shape) {
              case ShapeClass::disk: inside = dx * dx + dy * dy <= r * r; break;
              case ShapeClass::square: inside = std::max(std::abs(dx), std::abs(dy)) <= r; break;
              case ShapeClass::triangle: inside = dy >= -r && dy <= r && std::abs(dx) * 2.0 * r <= r * (dy + r); break;
              case ShapeClass::ring: inside = dx * dx + dy * dy <= r * r && dx * dx + dy * dy >= 0.3025 * r * r; break;
            }
            expected += inside;
            if (diff != inside) CHECK(diff == inside);
          }
        CHECK(differing == expected);
        CHECK(differing > 0);
      }
    }
  }

  SUBCASE("in-canvas rule") {
    spec.vx = 20.0;
    CHECK_THROWS_AS(validate(spec), ContractViolation);
    CHECK_THROWS_AS(render_synthetic(spec), ContractViolation);
    spec.bounce = true;
    CHECK_NOTHROW(validate(spec));
    for (const auto& b : synthetic_trajectory(spec)) CHECK(inside_fraction(b, spec.width, spec.height) >= 0.5);
  }

  SUBCASE("bad fields") {
    SyntheticSpec bad = spec;
    bad.frames = 0;
    CHECK_THROWS_AS(validate(bad), ContractViolation);
    bad = spec;
    bad.color = bad.background;
    CHECK_THROWS_AS(validate(bad), ContractViolation);
    bad = spec;
    bad.color[0] = 1.5f;
    CHECK_THROWS_AS(validate(bad), ContractViolation);
  }

  SUBCASE("json round trip") {
    spec.clutter_palette = {{0.1f, 0.2f, 0.3f}};
    nlohmann::json j = spec;
    const SyntheticSpec back = j.get<SyntheticSpec>();
    CHECK(nlohmann::json(back) == j);
    CHECK_THROWS_AS(nlohmann::json({{"shape", "hexagon"}}).get<SyntheticSpec>(), ContractViolation);
  }
}

TEST_CASE("benchmark specs are valid and reproducible") {
  BenchmarkSpec bench;
  bench.count = 20;
  const auto a = benchmark_specs(bench);
  const auto b = benchmark_specs(bench);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK_NOTHROW(validate(a[i]));
    CHECK(nlohmann::json(a[i]) == nlohmann::json(b[i]));
  }
  CHECK(a[0].name != a[1].name);
}

TEST_CASE("classification set") {
  ClassificationSpec spec;
  spec.count = 40;
  const auto set = make_classification_set(spec);
  REQUIRE(set.size() == 40);
  std::vector<int> counts(kShapeClassCount, 0);
  for (const auto& item : set) {
    CHECK(item.image.shape() == Shape{63, 63, 3});
    ++counts.at(static_cast<std::size_t>(item.label));
  }
  for (int c : counts) CHECK(c == 10);
  spec.classes = 1;
  CHECK_THROWS_AS(make_classification_set(spec), ContractViolation);

  TempDir tmp("cls");
  save_classification_set(set, tmp.path);
  const auto back = load_classification_set(tmp.path);
  REQUIRE(back.size() == set.size());
  CHECK(back[7].label == set[7].label);
  CHECK(encode_ppm(back[7].image) == encode_ppm(set[7].image));
}

TEST_CASE("weights container") {
  const NetworkProfile desk = NetworkProfile::desk();
  std::mt19937_64 rng(3);
  ANet net = ANet::create(desk, rng);
  net.response_bias[0] = -0.25f;
  const auto refs = net.parameters();
  const auto crefs = const_refs(refs);
  const std::string bytes = encode_weights(desk, crefs, {{"component", "anet"}});

  SUBCASE("bitwise round trip") {
    std::mt19937_64 other(99);
    ANet copy = ANet::create(desk, other);
    const auto meta = assign_weights(decode_weights(bytes), copy.parameters());
    CHECK(meta.at("component") == "anet");
    const auto a = net.parameters();
    const auto b = copy.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(*a[i].tensor, *b[i].tensor));
    CHECK(parameter_hash(const_refs(a)) == parameter_hash(const_refs(b)));
    CHECK(encode_weights(desk, const_refs(b), {{"component", "anet"}}) == bytes);

    TempDir tmp("w");
    save_weights(tmp.path / "a.weights", desk, crefs);
    CHECK(read_weights(tmp.path / "a.weights").tensors.size() == a.size());
  }

  SUBCASE("wrong profile names the layer") {
    const NetworkProfile paper = NetworkProfile::paper();
    std::mt19937_64 r(4);
    ANet big = ANet::create(paper, r);
    const std::uint64_t before = parameter_hash(const_refs(big.parameters()));
    try {
      assign_weights(decode_weights(bytes), big.parameters());
      FAIL("expected a shape error");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("anet.conv1.weight") != std::string::npos);
    }
    CHECK(parameter_hash(const_refs(big.parameters())) == before);
  }

  SUBCASE("truncation and corruption") {
    CHECK_THROWS_AS(decode_weights(bytes.substr(0, bytes.size() - 4)), FormatError);
    CHECK_THROWS_AS(decode_weights(bytes + "xxxx"), FormatError);
    CHECK_THROWS_AS(decode_weights(bytes.substr(0, 10)), FormatError);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_weights(bad_magic), FormatError);
    std::string bad_header = bytes;
    bad_header[16] = '[';
    CHECK_THROWS_AS(decode_weights(bad_header), FormatError);
    try {
      decode_weights(bytes.substr(0, bytes.size() - 4));
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }

  SUBCASE("name mismatch") {
    std::mt19937_64 r(5);
    SemanticHead head = SemanticHead::create(desk, {}, r);
    CHECK_THROWS_AS(assign_weights(decode_weights(bytes), head.parameters()), LoadError);
  }
}
