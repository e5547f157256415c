#include "twofold/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "twofold/errors.hpp"
#include "twofold/tracker.hpp"

namespace twofold {

// ---------------------------------------------------------------------------
// Pairs

Tensor Tracklet::crop(std::size_t index) const {
  const std::vector<std::uint8_t>& bytes = crops.at(index);
  Tensor out({crop_size, crop_size, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = static_cast<float>(bytes[i]) / 255.0f;
  return out;
}

Tracklet make_tracklet(const Sequence& seq, const NetworkProfile& profile, std::uint64_t key_base,
                       std::ostream* warnings) {
  Tracklet t;
  t.name = seq.name;
  t.crop_size = profile.search_size;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& box = i < seq.boxes.size() ? seq.boxes[i] : std::nullopt;
    if (!box || !box->valid()) {
      if (warnings) *warnings << "warning: " << seq.name << " frame " << i << ": no usable box, skipped\n";
      continue;
    }
    const Tensor frame = seq.frame(i);
    Tensor crop;
    try {
      crop = crop_with_context(frame, *box, profile.search_size, profile);
    } catch (const ContractViolation& e) {
      if (warnings) *warnings << "warning: " << seq.name << " frame " << i << ": " << e.what() << ", skipped\n";
      continue;
    }
    std::vector<std::uint8_t> bytes(crop.size());
    for (std::size_t k = 0; k < crop.size(); ++k) {
      bytes[k] = static_cast<std::uint8_t>(std::lround(std::clamp(crop[k], 0.0f, 1.0f) * 255.0f));
    }
    t.crops.push_back(std::move(bytes));
    t.keys.push_back(key_base + i + 1);
  }
  return t;
}

std::vector<Tracklet> prepare_tracklets(std::span<const Sequence> sequences,
                                        const NetworkProfile& profile, std::ostream* warnings) {
  std::vector<Tracklet> out;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    Tracklet t = make_tracklet(sequences[s], profile, static_cast<std::uint64_t>(s + 1) << 32, warnings);
    if (t.crops.size() < 2) {
      if (warnings) *warnings << "warning: " << t.name << ": fewer than 2 usable frames, dropped\n";
      continue;
    }
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

TrainingPair shape_pair(TrainingPair pair, Branch branch, const NetworkProfile& profile) {
  if (branch == Branch::appearance) pair.target = target_from_context(pair.target, profile);
  return pair;
}

}  // namespace

TrainingPair sample_pair(const Tracklet& tracklet, Branch branch, const NetworkProfile& profile,
                         std::mt19937_64& rng) {
  if (tracklet.crops.size() < 2) {
    throw ContractViolation("sample_pair: tracklet '" + tracklet.name + "' has fewer than 2 frames");
  }
  const std::size_t n = tracklet.crops.size();
  const std::size_t i = rng() % n, j = rng() % n;
  TrainingPair pair{tracklet.crop(i), tracklet.crop(j), tracklet.keys[i], tracklet.keys[j]};
  return shape_pair(std::move(pair), branch, profile);
}

TrackletSampler::TrackletSampler(std::vector<Tracklet> tracklets, NetworkProfile profile)
    : tracklets_(std::move(tracklets)), profile_(std::move(profile)) {
  if (tracklets_.empty()) throw ContractViolation("training set is empty");
}

TrainingPair TrackletSampler::next(Branch branch, std::mt19937_64& rng) {
  return sample_pair(tracklets_[rng() % tracklets_.size()], branch, profile_, rng);
}

FixedPairs::FixedPairs(std::vector<TrainingPair> pairs, NetworkProfile profile)
    : pairs_(std::move(pairs)), profile_(std::move(profile)) {
  if (pairs_.empty()) throw ContractViolation("training set is empty");
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (pairs_[i].target.dim(0) != profile_.search_size) {
      throw ContractViolation("FixedPairs: targets must be search-sized context crops");
    }
    if (pairs_[i].target_key == 0) pairs_[i].target_key = (1ull << 62) + 2 * i + 1;
    if (pairs_[i].search_key == 0) pairs_[i].search_key = (1ull << 62) + 2 * i + 2;
  }
}

TrainingPair FixedPairs::next(Branch branch, std::mt19937_64&) {
  TrainingPair pair = pairs_[cursor_];
  cursor_ = (cursor_ + 1) % pairs_.size();
  return shape_pair(std::move(pair), branch, profile_);
}

// ---------------------------------------------------------------------------
// Config and log

SgdConfig SgdConfig::paper_schedule() { return SgdConfig{}; }

double SgdConfig::lr_at(std::size_t epoch) const { return epoch < late_epoch ? lr : lr_late; }

void SgdConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || steps_per_epoch == 0) {
    throw ContractViolation("epochs, batch_size and steps_per_epoch must be positive");
  }
  if (!(lr >= 0.0 && lr_late >= 0.0) || lr_late > lr) {
    throw ContractViolation("learning rates must be non-negative and non-increasing");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractViolation("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ContractViolation("weight decay must be non-negative");
  if (!(label_radius > 0.0)) throw ContractViolation("label radius must be positive");
}

void to_json(nlohmann::json& j, const SgdConfig& c) {
  j = {{"epochs", c.epochs},           {"lr", c.lr},
       {"lr_late", c.lr_late},         {"late_epoch", c.late_epoch},
       {"batch_size", c.batch_size},   {"steps_per_epoch", c.steps_per_epoch},
       {"momentum", c.momentum},       {"weight_decay", c.weight_decay},
       {"label_radius", c.label_radius}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SgdConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_late = j.value("lr_late", c.lr_late);
  c.late_epoch = j.value("late_epoch", c.late_epoch);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.label_radius = j.value("label_radius", c.label_radius);
  c.seed = j.value("seed", c.seed);
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"epochs", c.epochs},         {"lr", c.lr},
       {"batch_size", c.batch_size}, {"momentum", c.momentum},
       {"weight_decay", c.weight_decay}, {"holdout_fraction", c.holdout_fraction},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.seed = j.value("seed", c.seed);
}

void TrainLog::write_csv(std::ostream& out) const {
  const auto old = out.precision(9);
  out << "epoch,step,loss\n";
  for (const LossRecord& r : steps) out << r.epoch << ',' << r.step << ',' << r.loss << '\n';
  out.precision(old);
}

// ---------------------------------------------------------------------------
// Optimizer

Sgd::Sgd(std::vector<ParamRef> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const ParamRef& p : params_) velocity_.push_back(Tensor::zeros_like(*p.tensor));
}

void Sgd::step(std::span<const Tensor> grads, double lr) {
  if (grads.size() != params_.size()) throw ContractViolation("Sgd::step: gradient count mismatch");
  if (lr == 0.0) return;
  const float mu = static_cast<float>(momentum_), wd = static_cast<float>(weight_decay_);
  const float rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i].tensor;
    Tensor& v = velocity_[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = mu * v[k] + g[k] + wd * p[k];
      p[k] -= rate * v[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Per-pair forward/backward

namespace {

std::vector<std::size_t> last_layer(const FeatureNet& net) { return {net.layers().size() - 1}; }

struct PairInputs {
  const Tensor* z = nullptr;  // target-sized, appearance
  const Tensor* x = nullptr;
  const SNetFeatures* zs_feat = nullptr;
  const SNetFeatures* x_feat = nullptr;
};

PairGradients pair_pass(const PairInputs& in, const ANet* net, const SemanticHead* head,
                        const NetworkProfile& profile, double lambda, const LabelMap& label) {
  GradTape tape;
  std::vector<Var> abound;
  SemanticBound sbound;
  Var h_a, h_s;
  if (net) {
    abound = net->body.bind(tape, true);
    abound.push_back(tape.parameter(net->response_bias));
    const std::span<const Var> convs(abound.data(), abound.size() - 1);
    const auto taps = last_layer(net->body);
    const Var fz = net->body.forward(tape, tape.constant(*in.z), convs, taps)[0];
    const Var fx = net->body.forward(tape, tape.constant(*in.x), convs, taps)[0];
    h_a = tape.scale_shift(tape.cross_correlate(fz, fx), profile.response_scale, abound.back());
  }
  if (head) {
    sbound = bind_semantic(tape, *head, true);
    const Var zs_taps[] = {tape.constant(in.zs_feat->taps[0]), tape.constant(in.zs_feat->taps[1])};
    const Var x_taps[] = {tape.constant(in.x_feat->taps[0]), tape.constant(in.x_feat->taps[1])};
    const auto templ = semantic_template(tape, *head, sbound, zs_taps, profile);
    const auto search = semantic_search(tape, *head, sbound, x_taps, profile);
    h_s = tape.scale_shift(semantic_correlation(tape, templ, search), profile.response_scale, sbound.bias);
  }
  Var h;
  if (net && head) {
    h = tape.weighted_sum(h_a, static_cast<float>(lambda), h_s, static_cast<float>(1.0 - lambda));
  } else {
    h = net ? h_a : h_s;
  }
  const Var loss = logistic_loss(tape, h, label);
  tape.backward(loss);

  PairGradients out;
  out.loss = tape.value(loss)[0];
  for (Var v : abound) out.anet.push_back(tape.grad(v));
  if (head) {
    for (Var v : sbound.all()) out.semantic.push_back(tape.grad(v));
  }
  return out;
}

void add_into(std::vector<Tensor>& acc, const std::vector<Tensor>& g, float scale) {
  if (acc.empty()) {
    for (const Tensor& t : g) acc.push_back(Tensor::zeros_like(t));
  }
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t k = 0; k < g[i].size(); ++k) acc[i][k] += scale * g[i][k];
}

// Frozen S-Net features, cached by crop key.
class FeatureCache {
 public:
  FeatureCache(const SNet& net, const NetworkProfile& profile) : net_(net), profile_(profile) {}
  const SNetFeatures& get(const Tensor& image, std::uint64_t key) {
    if (key == 0) {
      scratch_ = snet_forward(image, net_, profile_);
      return scratch_;
    }
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, snet_forward(image, net_, profile_)).first;
    return it->second;
  }

 private:
  const SNet& net_;
  const NetworkProfile& profile_;
  std::unordered_map<std::uint64_t, SNetFeatures> cache_;
  SNetFeatures scratch_;
};

enum class Mode { appearance, semantic, joint };

TrainLog run_training(Mode mode, PairSource& data, ANet* net, const SNet* snet, SemanticHead* head,
                      const NetworkProfile& profile, const SgdConfig& config, double lambda,
                      const StepHook& hook) {
  config.validate();
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractViolation("lambda must lie in [0, 1]");
  const LabelMap label = make_label_map(profile.response_size, config.label_radius);
  std::mt19937_64 rng(config.seed);
  const Branch branch = mode == Mode::appearance ? Branch::appearance : Branch::semantic;

  std::vector<ParamRef> params;
  if (net) params = net->parameters();
  if (head) {
    for (ParamRef& p : head->parameters()) params.push_back(p);
  }
  Sgd sgd(params, config.momentum, config.weight_decay);
  std::optional<FeatureCache> cache;
  if (snet) cache.emplace(*snet, profile);

  TrainLog log;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    double epoch_sum = 0.0;
    for (std::size_t step = 0; step < config.steps_per_epoch; ++step, ++global_step) {
      std::vector<Tensor> anet_grad, sem_grad;
      double batch_loss = 0.0;
      const float inv = 1.0f / static_cast<float>(config.batch_size);
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const TrainingPair pair = data.next(branch, rng);
        PairInputs in;
        Tensor z;
        if (net) {
          z = branch == Branch::appearance ? pair.target : target_from_context(pair.target, profile);
          in.z = &z;
          in.x = &pair.search;
        }
        if (head) {
          in.zs_feat = &cache->get(pair.target, pair.target_key);
          in.x_feat = &cache->get(pair.search, pair.search_key);
        }
        const PairGradients g = pair_pass(in, net, head, profile, lambda, label);
        if (!std::isfinite(g.loss)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(step + 1) + ", batch item " + std::to_string(b));
        }
        batch_loss += g.loss / static_cast<double>(config.batch_size);
        if (net) add_into(anet_grad, g.anet, inv);
        if (head) add_into(sem_grad, g.semantic, inv);
      }
      std::vector<Tensor> grads = std::move(anet_grad);
      for (Tensor& t : sem_grad) grads.push_back(std::move(t));
      for (const Tensor& g : grads) {
        if (!g.all_finite()) {
          throw NumericError("non-finite gradient at epoch " + std::to_string(epoch + 1) +
                             ", step " + std::to_string(step + 1));
        }
      }
      sgd.step(grads, lr);
      const LossRecord rec{epoch + 1, global_step + 1, batch_loss};
      log.steps.push_back(rec);
      epoch_sum += batch_loss;
      if (hook) hook(rec);
    }
    log.epoch_mean.push_back(epoch_sum / static_cast<double>(config.steps_per_epoch));
    log.epoch_lr.push_back(lr);
  }
  return log;
}

}  // namespace

PairGradients joint_pair_gradients(const TrainingPair& pair, const ANet* net, const SNet* snet,
                                   const SemanticHead* head, const NetworkProfile& profile,
                                   double lambda, double label_radius) {
  const LabelMap label = make_label_map(profile.response_size, label_radius);
  PairInputs in;
  Tensor z;
  SNetFeatures fzs, fx;
  if (net) {
    z = pair.target.dim(0) == profile.search_size ? target_from_context(pair.target, profile) : pair.target;
    in.z = &z;
    in.x = &pair.search;
  }
  if (head) {
    if (!snet) throw ContractViolation("joint_pair_gradients: semantic head without S-Net");
    fzs = snet_forward(pair.target, *snet, profile);
    fx = snet_forward(pair.search, *snet, profile);
    in.zs_feat = &fzs;
    in.x_feat = &fx;
  }
  return pair_pass(in, net, head, profile, lambda, label);
}

TrainLog train_appearance(PairSource& data, ANet& net, const NetworkProfile& profile,
                          const SgdConfig& config, const StepHook& hook) {
  return run_training(Mode::appearance, data, &net, nullptr, nullptr, profile, config, 1.0, hook);
}

TrainLog train_semantic(PairSource& data, const SNet& snet, SemanticHead& head,
                        const NetworkProfile& profile, const SgdConfig& config,
                        const StepHook& hook) {
  return run_training(Mode::semantic, data, nullptr, &snet, &head, profile, config, 0.0, hook);
}

TrainLog train_joint(PairSource& data, ANet& net, const SNet& snet, SemanticHead& head,
                     const NetworkProfile& profile, const SgdConfig& config, double lambda,
                     const StepHook& hook) {
  return run_training(Mode::joint, data, &net, &snet, &head, profile, config, lambda, hook);
}

// ---------------------------------------------------------------------------
// S-Net pretraining

namespace {

Tensor classify(const SNet& net, const ConvKernel& head, const Tensor& image) {
  return conv2d(global_average_pool(net.body.forward(image)), head);
}

double accuracy(const SNet& net, const ConvKernel& head, const std::vector<LabeledImage>& images,
                std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const Tensor logits = classify(net, head, images[i].image);
    correct += argmax(logits.data()) == static_cast<std::size_t>(images[i].label);
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace

PretrainResult pretrain_snet_classifier(const std::vector<LabeledImage>& images, SNet& net,
                                        const PretrainConfig& config, const StepHook& hook) {
  std::size_t classes = 0;
  std::vector<std::size_t> per_class;
  for (const LabeledImage& item : images) {
    if (item.label < 0) throw ContractViolation("negative class label");
    const auto c = static_cast<std::size_t>(item.label);
    if (c >= per_class.size()) per_class.resize(c + 1, 0);
    ++per_class[c];
  }
  for (std::size_t n : per_class) classes += n > 0;
  if (classes < 2) {
    throw ContractViolation("classifier pretraining needs at least 2 classes, got " +
                            std::to_string(classes));
  }
  if (config.epochs == 0 || config.batch_size == 0) {
    throw ContractViolation("epochs and batch_size must be positive");
  }
  if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0)) {
    throw ContractViolation("holdout_fraction must lie in [0, 1)");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::floor(config.holdout_fraction * static_cast<double>(images.size())));
  const std::vector<std::size_t> heldout(order.end() - static_cast<std::ptrdiff_t>(held), order.end());
  std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(held));
  if (train.empty()) throw ContractViolation("no training images left after the holdout split");

  const std::size_t channels = net.body.convs().back().weights.dim(3);
  ConvKernel head = init_conv(1, channels, per_class.size(), 1, rng);

  std::vector<ParamRef> params = net.parameters();
  params.push_back({"head.weight", &head.weights});
  params.push_back({"head.bias", &head.bias});
  Sgd sgd(params, config.momentum, config.weight_decay);
  const auto taps = last_layer(net.body);

  PretrainResult result;
  result.classes = classes;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    // Step decay for the last fifth of the epochs.
    const double lr = epoch * 5 >= config.epochs * 4 ? config.lr * 0.1 : config.lr;
    double epoch_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < train.size(); start += config.batch_size, ++global_step) {
      const std::size_t end = std::min(train.size(), start + config.batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      std::vector<Tensor> grads;
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const LabeledImage& item = images[train[k]];
        GradTape tape;
        std::vector<Var> bound = net.body.bind(tape, true);
        const Var hw = tape.parameter(head.weights), hb = tape.parameter(head.bias);
        const Var feat = net.body.forward(tape, tape.constant(item.image), bound, taps)[0];
        const Var logits = tape.conv2d(tape.global_average_pool(feat), hw, hb, 1, 0);
        const Var loss = softmax_cross_entropy(tape, logits, static_cast<std::size_t>(item.label));
        tape.backward(loss);
        const double lv = tape.value(loss)[0];
        if (!std::isfinite(lv)) {
          throw NumericError("non-finite classification loss at epoch " + std::to_string(epoch + 1) +
                             ", image " + std::to_string(train[k]));
        }
        batch_loss += lv * inv;
        std::vector<Tensor> g;
        for (Var v : bound) g.push_back(tape.grad(v));
        g.push_back(tape.grad(hw));
        g.push_back(tape.grad(hb));
        add_into(grads, g, inv);
      }
      sgd.step(grads, lr);
      const LossRecord rec{epoch + 1, global_step + 1, batch_loss};
      result.log.steps.push_back(rec);
      epoch_sum += batch_loss;
      ++steps;
      if (hook) hook(rec);
    }
    result.log.epoch_mean.push_back(epoch_sum / static_cast<double>(steps));
    result.log.epoch_lr.push_back(lr);
  }
  result.train_accuracy = accuracy(net, head, images, train);
  result.heldout_accuracy = accuracy(net, head, images, heldout);
  return result;
}

}  // namespace twofold
