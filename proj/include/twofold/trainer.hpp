#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "twofold/grad_tape.hpp"
#include "twofold/networks.hpp"
#include "twofold/sequence.hpp"
#include "twofold/synthetic.hpp"

namespace twofold {

// Labels are +1 within `radius` response cells of the map center, -1
// elsewhere. Weights give each class a total of 0.5.
struct LabelMap {
  Tensor labels;   // R x R x 1
  Tensor weights;  // R x R x 1
};
LabelMap make_label_map(std::size_t response_size, double radius);

struct LossValue {
  double loss = 0.0;
  Tensor grad;  // d loss / d h
};
// sum_p w[p] log(1 + exp(-y[p] h[p])), evaluated without overflow.
LossValue logistic_loss(const Tensor& h, const LabelMap& label);
// Same loss recorded on a tape; returns a one-element variable.
Var logistic_loss(GradTape& tape, Var h, const LabelMap& label);

// Softmax cross-entropy of a K-element logit vector against `label`.
LossValue softmax_cross_entropy(const Tensor& logits, std::size_t label);
Var softmax_cross_entropy(GradTape& tape, Var logits, std::size_t label);

enum class Branch { appearance, semantic };

// target is z (target-sized) for the appearance branch and z^s
// (search-sized) for the semantic branch; the search crop X always has the
// ground truth at its center. Keys identify the source crops so frozen
// features can be cached; 0 means "do not cache".
struct TrainingPair {
  Tensor target;
  Tensor search;
  std::uint64_t target_key = 0;
  std::uint64_t search_key = 0;
};

// Context crops of one annotated video, stored as 8-bit RGB.
struct Tracklet {
  std::string name;
  std::size_t crop_size = 0;
  std::vector<std::vector<std::uint8_t>> crops;
  std::vector<std::uint64_t> keys;

  Tensor crop(std::size_t index) const;
};

// One search-sized context crop per annotated frame. Frames without a
// usable box are skipped with a warning on `warnings` (if given);
// sequences left with fewer than two frames are dropped.
std::vector<Tracklet> prepare_tracklets(std::span<const Sequence> sequences,
                                        const NetworkProfile& profile,
                                        std::ostream* warnings = nullptr);
Tracklet make_tracklet(const Sequence& seq, const NetworkProfile& profile,
                       std::uint64_t key_base, std::ostream* warnings = nullptr);

// Two frames drawn uniformly (possibly the same one).
TrainingPair sample_pair(const Tracklet& tracklet, Branch branch, const NetworkProfile& profile,
                         std::mt19937_64& rng);

// Endless stream of pairs.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual TrainingPair next(Branch branch, std::mt19937_64& rng) = 0;
};

// Picks a tracklet uniformly, then a pair within it.
class TrackletSampler : public PairSource {
 public:
  TrackletSampler(std::vector<Tracklet> tracklets, NetworkProfile profile);
  TrainingPair next(Branch branch, std::mt19937_64& rng) override;
  std::size_t size() const { return tracklets_.size(); }

 private:
  std::vector<Tracklet> tracklets_;
  NetworkProfile profile_;
};

// Cycles through fixed search-sized (z^s, X) pairs.
class FixedPairs : public PairSource {
 public:
  FixedPairs(std::vector<TrainingPair> pairs, NetworkProfile profile);
  TrainingPair next(Branch branch, std::mt19937_64& rng) override;

 private:
  std::vector<TrainingPair> pairs_;
  NetworkProfile profile_;
  std::size_t cursor_ = 0;
};

struct SgdConfig {
  std::size_t epochs = 30;
  double lr = 0.01;
  double lr_late = 0.001;
  std::size_t late_epoch = 25;  // 0-based epoch from which lr_late applies
  std::size_t batch_size = 8;
  std::size_t steps_per_epoch = 40;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double label_radius = 2.0;
  std::uint64_t seed = 1;

  // The 30 epoch, 25 + 5 schedule at 0.01 then 0.001.
  static SgdConfig paper_schedule();
  double lr_at(std::size_t epoch) const;
  void validate() const;
};
void to_json(nlohmann::json& j, const SgdConfig& c);
void from_json(const nlohmann::json& j, SgdConfig& c);

struct LossRecord {
  std::size_t epoch = 0, step = 0;
  double loss = 0.0;
};
struct TrainLog {
  std::vector<LossRecord> steps;
  std::vector<double> epoch_mean;
  std::vector<double> epoch_lr;

  // `epoch,step,loss` with a header row.
  void write_csv(std::ostream& out) const;
};

// Momentum SGD: v = mu v + g + wd p; p -= lr v.
class Sgd {
 public:
  explicit Sgd(std::vector<ParamRef> params, double momentum, double weight_decay);
  void step(std::span<const Tensor> grads, double lr);

 private:
  std::vector<ParamRef> params_;
  std::vector<Tensor> velocity_;
  double momentum_, weight_decay_;
};

// Called after every optimizer step; may be empty.
using StepHook = std::function<void(const LossRecord&)>;

TrainLog train_appearance(PairSource& data, ANet& net, const NetworkProfile& profile,
                          const SgdConfig& config, const StepHook& hook = {});
// `snet` is read-only: it never enters the tape as a parameter.
TrainLog train_semantic(PairSource& data, const SNet& snet, SemanticHead& head,
                        const NetworkProfile& profile, const SgdConfig& config,
                        const StepHook& hook = {});
// Loss on lambda h_a + (1 - lambda) h_s; both branches update together.
TrainLog train_joint(PairSource& data, ANet& net, const SNet& snet, SemanticHead& head,
                     const NetworkProfile& profile, const SgdConfig& config, double lambda,
                     const StepHook& hook = {});

// Gradients of one pair's loss, for inspection and tests.
struct PairGradients {
  double loss = 0.0;
  std::vector<Tensor> anet;      // ANet::parameters() order
  std::vector<Tensor> semantic;  // SemanticHead::parameters() order
};
PairGradients joint_pair_gradients(const TrainingPair& pair, const ANet* net, const SNet* snet,
                                   const SemanticHead* head, const NetworkProfile& profile,
                                   double lambda, double label_radius);

struct PretrainConfig {
  std::size_t epochs = 16;
  double lr = 0.02;
  std::size_t batch_size = 16;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 5;
};
void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

struct PretrainResult {
  TrainLog log;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  std::size_t classes = 0;
};
// S-Net body + global average pooling + linear softmax head, trained on
// the images; the head is discarded. A seeded random holdout_fraction of
// the images is kept out of training and used for accuracy.
PretrainResult pretrain_snet_classifier(const std::vector<LabeledImage>& images, SNet& net,
                                        const PretrainConfig& config, const StepHook& hook = {});

}  // namespace twofold
