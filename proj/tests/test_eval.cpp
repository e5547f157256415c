#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "twofold/errors.hpp"
#include "twofold/eval.hpp"
#include "twofold/synthetic.hpp"

using namespace twofold;
namespace fs = std::filesystem;

namespace {

std::vector<Sequence> tiny_benchmark(std::size_t count, std::size_t frames) {
  BenchmarkSpec b;
  b.count = count;
  b.frames = frames;
  b.seed = 314;
  std::vector<Sequence> out;
  for (const auto& s : benchmark_specs(b)) out.push_back(render_synthetic(s));
  return out;
}

}  // namespace

TEST_CASE("overlap and center error") {
  const BoundingBox a = BoundingBox::from_top_left(0, 0, 10, 10);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BoundingBox::from_top_left(20, 20, 5, 5)) == 0.0);
  CHECK(iou(a, BoundingBox::from_top_left(5, 0, 10, 10)) == doctest::Approx(50.0 / 150.0));
  CHECK(iou(a, BoundingBox::from_top_left(2, 2, 4, 4)) == doctest::Approx(16.0 / 100.0));
  CHECK(center_error(a, BoundingBox::from_top_left(3, 4, 10, 10)) == doctest::Approx(5.0));
}

TEST_CASE("curves against brute-force counts") {
  CHECK(success_thresholds().size() == 21);
  CHECK(precision_thresholds().size() == 51);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0), e(0.0, 60.0);
  std::vector<double> ious(137), errs(137);
  for (auto& v : ious) v = u(rng);
  for (auto& v : errs) v = e(rng);
  ious[0] = 0.5;  // exactly on a threshold: not counted there
  errs[0] = 20.0; // exactly on a threshold: counted
  const auto sc = success_curve(ious);
  double auc = 0.0;
  for (std::size_t k = 0; k < 21; ++k) {
    const double t = k / 20.0;
    std::size_t n = 0;
    for (double v : ious) n += v > t;
    CHECK(sc[k] == doctest::Approx(double(n) / 137.0));
    auc += double(n) / 137.0;
  }
  CHECK(success_auc(ious) == doctest::Approx(auc / 21.0));
  const auto pc = precision_curve(errs);
  for (std::size_t k = 0; k <= 50; ++k) {
    std::size_t n = 0;
    for (double v : errs) n += v <= double(k);
    CHECK(pc[k] == doctest::Approx(double(n) / 137.0));
  }
  CHECK(precision_at(errs) == pc[20]);
  CHECK_THROWS_AS(success_curve(std::vector<double>{}), ContractViolation);
}

TEST_CASE("ground-truth replay scores 20/21 and full precision") {
  const auto data = tiny_benchmark(3, 6);
  const EvalReport r = run_ope(data, ground_truth_tracker());
  CHECK(r.frames == 18);
  CHECK(r.auc == doctest::Approx(20.0 / 21.0));
  CHECK(r.precision20 == 1.0);
  CHECK(per_video_auc(r) == doctest::Approx(20.0 / 21.0));
}

TEST_CASE("per-frame aggregation weights long videos more") {
  SequenceResult a, b;
  a.name = "a";
  a.boxes.resize(3);
  a.ious = {1.0, 1.0, 1.0};
  a.errors = {0.0, 0.0, 0.0};
  b.name = "b";
  b.boxes.resize(1);
  b.ious = {0.0};
  b.errors = {100.0};
  const EvalReport r = aggregate({a, b});
  CHECK(r.auc == doctest::Approx(0.75 * 20.0 / 21.0));
  CHECK(per_video_auc(r) == doctest::Approx(0.5 * 20.0 / 21.0));
  CHECK(r.precision20 == 0.75);
}

TEST_CASE("thread count does not change the report") {
  const auto data = tiny_benchmark(4, 5);
  const TwofoldModel m = TwofoldModel::random(NetworkProfile::desk(), true, std::nullopt, 3);
  const EvalReport one = run_ope(data, model_tracker(m, TrackConfig{}), 1);
  const EvalReport three = run_ope(data, model_tracker(m, TrackConfig{}), 3);
  CHECK(one.auc == three.auc);
  CHECK(one.success == three.success);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(one.sequences[i].boxes == three.sequences[i].boxes);
}

TEST_CASE("unreadable sequences are skipped and reported") {
  const fs::path root = fs::temp_directory_path() / "twofold_eval_skip";
  fs::remove_all(root);
  const auto data = tiny_benchmark(2, 4);
  save_sequence(data[0], root / "good");
  fs::create_directories(root / "broken" / "img");
  const std::vector<fs::path> dirs{root / "good", root / "broken"};
  const EvalReport r = run_ope(dirs, static_tracker(), 2);
  REQUIRE(r.sequences.size() == 2);
  CHECK(r.sequences[0].failure.empty());
  CHECK_FALSE(r.sequences[1].failure.empty());
  CHECK(r.frames == 4);
  const auto j = r.to_json();
  CHECK(j["sequences"][1].contains("skipped"));
  fs::remove_all(root);
}

TEST_CASE("report serialization") {
  const auto data = tiny_benchmark(1, 4);
  const EvalReport r = run_ope(data, static_tracker());
  std::ostringstream csv;
  r.write_csv(csv);
  const std::string text = csv.str();
  CHECK(text.rfind("kind,threshold,value\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 21 + 51);
  const auto j = r.to_json();
  CHECK(j["success"].size() == 21);
  CHECK(j["auc"].get<double>() == r.auc);
}

TEST_CASE("lambda search covers the fixed grid") {
  CHECK(lambda_grid() == std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.9});
  const auto data = tiny_benchmark(2, 4);
  const TwofoldModel m = TwofoldModel::random(NetworkProfile::desk(), true, SemanticVariant{}, 5);
  const LambdaSearch s = grid_search_lambda(m, data, TrackConfig{});
  REQUIRE(s.table.size() == 5);
  double best = -1.0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(s.table[i].lambda == lambda_grid()[i]);
    best = std::max(best, s.table[i].auc);
  }
  for (const auto& row : s.table) {
    if (row.auc == best) {
      CHECK(s.best_lambda == row.lambda);
      break;
    }
  }
  const TwofoldModel app = TwofoldModel::random(NetworkProfile::desk(), true, std::nullopt, 5);
  CHECK_THROWS_AS(grid_search_lambda(app, data, TrackConfig{}), ContractViolation);
}

TEST_CASE("ablation table marks missing rows") {
  const auto data = tiny_benchmark(1, 4);
  const TwofoldModel app = TwofoldModel::random(NetworkProfile::desk(), true, std::nullopt, 6);
  const std::vector<const TwofoldModel*> models{&app, nullptr, nullptr, nullptr, nullptr, nullptr};
  const auto rows = ablation_table(models, data, TrackConfig{});
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].present);
  CHECK_FALSE(rows[1].present);
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  CHECK(csv.str().find("Sem. only,absent,absent") != std::string::npos);
  CHECK(ablation_json(rows)[1]["absent"] == true);
  CHECK_THROWS_AS(ablation_table(std::vector<const TwofoldModel*>{&app}, data, TrackConfig{}),
                  ContractViolation);
}
