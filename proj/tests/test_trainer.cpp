#include <cmath>
#include <random>
#include <sstream>
#include <utility>

#include "doctest.h"
#include "test_support.hpp"
#include "twofold/errors.hpp"
#include "twofold/tracker.hpp"
#include "twofold/trainer.hpp"
#include "twofold/weights.hpp"

using namespace twofold;
using namespace twofold::testing;

namespace {

Sequence small_sequence(std::uint64_t seed) {
  SyntheticSpec s;
  s.name = "fit";
  s.frames = 8;
  s.shape = ShapeClass::disk;
  s.color = {0.9f, 0.2f, 0.1f};
  s.end_color = s.color;
  s.background = {0.2f, 0.3f, 0.5f};
  s.start_x = 70.0;
  s.start_y = 80.0;
  s.size = 26.0;
  s.vx = 1.5;
  s.vy = -1.0;
  s.clutter_count = 3;
  s.noise = 0.02f;
  s.seed = seed;
  return render_synthetic(s);
}

TrainingPair one_pair(const NetworkProfile& p) {
  const Sequence seq = small_sequence(3);
  return {crop_with_context(seq.frame(0), *seq.boxes[0], p.search_size, p),
          crop_with_context(seq.frame(5), *seq.boxes[5], p.search_size, p)};
}

SgdConfig overfit_config(double lr, std::size_t steps = 200) {
  SgdConfig c;
  c.epochs = 1;
  c.late_epoch = 1;
  c.steps_per_epoch = steps;
  c.batch_size = 1;
  c.lr = lr;
  c.lr_late = lr;
  return c;
}

// Lowest loss seen relative to the loss at step 0.
double best_ratio(const TrainLog& log) {
  double best = log.steps.front().loss;
  for (const LossRecord& r : log.steps) best = std::min(best, r.loss);
  return best / log.steps.front().loss;
}

}  // namespace

TEST_CASE("label map geometry and class balance") {
  const LabelMap m = make_label_map(17, 2.0);
  std::size_t pos = 0, neg = 0;
  double wpos = 0.0, wneg = 0.0;
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    if (m.labels[i] > 0) {
      ++pos;
      wpos += m.weights[i];
    } else {
      ++neg;
      wneg += m.weights[i];
    }
  }
  CHECK(pos == 13);
  CHECK(neg == 276);
  CHECK(wpos == doctest::Approx(0.5));
  CHECK(wneg == doctest::Approx(0.5));
  CHECK(m.labels[8 * 17 + 8] == 1.0f);
  CHECK(m.labels[8 * 17 + 10] == 1.0f);
  CHECK(m.labels[9 * 17 + 10] == -1.0f);  // distance sqrt(5) > 2

  const LabelMap tight = make_label_map(9, 0.5);
  CHECK(std::count(tight.labels.data().begin(), tight.labels.data().end(), 1.0f) == 1);
  CHECK_THROWS_AS(make_label_map(16, 2.0), ContractViolation);
  CHECK_THROWS_AS(make_label_map(17, 0.0), ContractViolation);
  CHECK_THROWS_AS(make_label_map(3, 5.0), ContractViolation);
}

TEST_CASE("logistic loss values and gradient") {
  const LabelMap m = make_label_map(9, 2.0);
  CHECK(logistic_loss(Tensor({9, 9, 1}), m).loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  Tensor confident({9, 9, 1});
  for (std::size_t i = 0; i < confident.size(); ++i) confident[i] = 40.0f * m.labels[i];
  CHECK(logistic_loss(confident, m).loss < 1e-12);
  for (std::size_t i = 0; i < confident.size(); ++i) confident[i] = -40.0f * m.labels[i];
  const double wrong = logistic_loss(confident, m).loss;
  CHECK(std::isfinite(wrong));
  CHECK(wrong == doctest::Approx(40.0).epsilon(1e-6));

  std::mt19937_64 rng(4);
  const Tensor h = random_tensor(rng, {9, 9, 1}, -3.0f, 3.0f);
  const LossValue lv = logistic_loss(h, m);
  const auto fd = finite_difference([&](const Tensor& x) { return logistic_loss(x, m).loss; }, h, 1e-3);
  CHECK(rel_l2(lv.grad.data(), fd) < 1e-3);

  GradTape tape;
  const Var hv = tape.parameter(h);
  const Var loss = logistic_loss(tape, hv, m);
  CHECK(tape.value(loss)[0] == doctest::Approx(lv.loss).epsilon(1e-6));
  tape.backward(loss);
  CHECK(rel_error(tape.grad(hv), lv.grad) < 1e-5);
}

TEST_CASE("softmax cross-entropy gradient") {
  std::mt19937_64 rng(8);
  const Tensor logits = random_tensor(rng, {5}, -2.0f, 2.0f);
  const LossValue lv = softmax_cross_entropy(logits, 3);
  const auto fd =
      finite_difference([&](const Tensor& x) { return softmax_cross_entropy(x, 3).loss; }, logits, 1e-3);
  CHECK(rel_l2(lv.grad.data(), fd) < 1e-3);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, 5), ContractViolation);
}

TEST_CASE("schedule switches learning rate after epoch 25") {
  const SgdConfig c = SgdConfig::paper_schedule();
  CHECK(c.epochs == 30);
  for (std::size_t e = 0; e < 25; ++e) CHECK(c.lr_at(e) == 0.01);
  for (std::size_t e = 25; e < 30; ++e) CHECK(c.lr_at(e) == 0.001);

  nlohmann::json j = c;
  const SgdConfig back = j.get<SgdConfig>();
  CHECK(back.late_epoch == c.late_epoch);
  CHECK(back.lr_late == c.lr_late);

  SgdConfig bad = c;
  bad.lr_late = 0.1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("momentum SGD update rule") {
  Tensor p({2}, std::vector<float>{1.0f, -2.0f});
  Sgd sgd({ParamRef{"p", &p}}, 0.5, 0.1);
  const std::vector<Tensor> g{Tensor({2}, std::vector<float>{0.2f, 0.4f})};
  sgd.step(g, 0.1);
  // v = g + wd p = (0.3, 0.2); p -= 0.1 v
  CHECK(p[0] == doctest::Approx(0.97f));
  CHECK(p[1] == doctest::Approx(-2.02f));
  sgd.step(g, 0.1);
  // v = 0.5 v + g + wd p = (0.15+0.2+0.097, 0.1+0.4-0.202)
  CHECK(p[0] == doctest::Approx(0.97 - 0.1 * 0.447));
  CHECK(p[1] == doctest::Approx(-2.02 - 0.1 * 0.298));
}

TEST_CASE("appearance branch overfits one pair") {
  const NetworkProfile p = NetworkProfile::desk();
  std::mt19937_64 rng(21);
  ANet net = ANet::create(p, rng);
  FixedPairs data({one_pair(p)}, p);
  const TrainLog log = train_appearance(data, net, p, overfit_config(0.01));
  REQUIRE(log.steps.size() == 200);
  CHECK(best_ratio(log) < 0.1);
}

TEST_CASE("semantic branch overfits one pair and leaves S-Net untouched") {
  const NetworkProfile p = NetworkProfile::desk();
  std::mt19937_64 rng(22);
  const SNet snet = SNet::create(p, rng);
  SemanticHead head = SemanticHead::create(p, SemanticVariant{}, rng);
  const std::uint64_t before = parameter_hash(snet.parameters());
  FixedPairs data({one_pair(p)}, p);
  // Only the small 1x1 head trains, so it needs a hotter, longer run.
  const TrainLog log = train_semantic(data, snet, head, p, overfit_config(0.2, 400));
  CHECK(best_ratio(log) < 0.1);
  CHECK(parameter_hash(snet.parameters()) == before);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  const NetworkProfile p = NetworkProfile::desk();
  std::mt19937_64 rng(23);
  ANet net = ANet::create(p, rng);
  const ANet copy = net;
  FixedPairs data({one_pair(p)}, p);
  SgdConfig c = overfit_config(0.0);
  c.steps_per_epoch = 3;
  train_appearance(data, net, p, c);
  const auto a = net.parameters();
  const auto b = copy.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(*a[i].tensor, *b[i].tensor));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const NetworkProfile p = NetworkProfile::desk();
  const std::vector<Sequence> seqs{small_sequence(5), small_sequence(6)};
  SgdConfig c;
  c.epochs = 2;
  c.late_epoch = 1;
  c.steps_per_epoch = 2;
  c.batch_size = 2;
  auto run = [&] {
    std::mt19937_64 rng(30);
    ANet net = ANet::create(p, rng);
    TrackletSampler data(prepare_tracklets(seqs, p), p);
    const TrainLog log = train_appearance(data, net, p, c);
    return std::make_pair(log, parameter_hash(std::as_const(net).parameters()));
  };
  const auto [log1, h1] = run();
  const auto [log2, h2] = run();
  CHECK(h1 == h2);
  REQUIRE(log1.steps.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(log1.steps[i].loss == log2.steps[i].loss);
  CHECK(log1.epoch_lr == std::vector<double>{0.01, 0.001});

  std::ostringstream csv;
  log1.write_csv(csv);
  const std::string text = csv.str();
  CHECK(text.rfind("epoch,step,loss\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("joint gradients split by lambda") {
  const NetworkProfile p = NetworkProfile::desk();
  std::mt19937_64 rng(24);
  const ANet net = ANet::create(p, rng);
  const SNet snet = SNet::create(p, rng);
  const SemanticHead head = SemanticHead::create(p, SemanticVariant{}, rng);
  const TrainingPair pair = one_pair(p);

  const PairGradients app_only = joint_pair_gradients(pair, &net, &snet, &head, p, 1.0, 2.0);
  for (const Tensor& g : app_only.semantic) {
    for (float v : g.data()) REQUIRE(v == 0.0f);
  }
  const PairGradients sem_only = joint_pair_gradients(pair, &net, &snet, &head, p, 0.0, 2.0);
  for (const Tensor& g : sem_only.anet) {
    for (float v : g.data()) REQUIRE(v == 0.0f);
  }
  const PairGradients mixed = joint_pair_gradients(pair, &net, &snet, &head, p, 0.5, 2.0);
  double norm = 0.0;
  for (const Tensor& g : mixed.anet)
    for (float v : g.data()) norm += std::abs(v);
  CHECK(norm > 0.0);
}

TEST_CASE("tracklets skip missing boxes and drop short videos") {
  const NetworkProfile p = NetworkProfile::desk();
  Sequence a = small_sequence(7);
  a.boxes[2].reset();
  Sequence b = small_sequence(8);
  for (std::size_t i = 1; i < b.boxes.size(); ++i) b.boxes[i].reset();
  std::ostringstream warn;
  const auto t = prepare_tracklets(std::vector<Sequence>{a, b}, p, &warn);
  REQUIRE(t.size() == 1);
  CHECK(t[0].crops.size() == 7);
  CHECK(t[0].crop(0).shape() == Shape{p.search_size, p.search_size, 3});
  CHECK_FALSE(warn.str().empty());

  std::mt19937_64 rng(1);
  const TrainingPair ap = sample_pair(t[0], Branch::appearance, p, rng);
  CHECK(ap.target.dim(0) == p.target_size);
  CHECK(ap.search.dim(0) == p.search_size);
  const TrainingPair sp = sample_pair(t[0], Branch::semantic, p, rng);
  CHECK(sp.target.dim(0) == p.search_size);
}

TEST_CASE("pretraining separates the synthetic classes") {
  const NetworkProfile p = NetworkProfile::desk();
  const auto images = make_classification_set(ClassificationSpec{});
  std::mt19937_64 rng(3);
  SNet net = SNet::create(p, rng);
  const PretrainResult r = pretrain_snet_classifier(images, net, PretrainConfig{});
  MESSAGE("held-out accuracy " << r.heldout_accuracy);
  CHECK(r.classes == 4);
  CHECK(r.heldout_accuracy >= 0.9);

  std::vector<LabeledImage> one_class(images.begin(), images.begin() + 1);
  one_class.push_back(images[4]);
  CHECK_THROWS_AS(pretrain_snet_classifier(one_class, net, PretrainConfig{}), ContractViolation);
}
