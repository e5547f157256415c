#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "twofold/grad_tape.hpp"
#include "twofold/ops.hpp"
#include "twofold/profile.hpp"
#include "twofold/tensor.hpp"

namespace twofold {

using Var = GradTape::Var;

// Mutable view of one named parameter block, in declaration order.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};
struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

// Zero-mean Gaussian with std sqrt(2 / fan_in); zero bias.
ConvKernel init_conv(std::size_t k, std::size_t in_c, std::size_t out_c, int stride,
                     std::mt19937_64& rng);

// Plain conv/pool stack. ReLU follows every conv whose spec asks for it.
// Images arrive in [0, 1]; feature extractors see them shifted by this
// amount so the first layer starts from zero-mean inputs.
constexpr float kInputCenter = 0.5f;

class FeatureNet {
 public:
  FeatureNet() = default;
  FeatureNet(std::vector<LayerSpec> layers, std::size_t in_channels, std::mt19937_64& rng);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ConvKernel>& convs() const { return convs_; }
  std::vector<ConvKernel>& convs() { return convs_; }

  // Outputs after each listed layer index (post-activation). Stops early at
  // the deepest requested layer.
  std::vector<Tensor> forward_taps(const Tensor& image, std::span<const std::size_t> taps) const;
  Tensor forward(const Tensor& image) const;

  // Weight and bias of every conv, in order, as tape variables.
  std::vector<Var> bind(GradTape& tape, bool trainable) const;
  std::vector<Var> forward(GradTape& tape, Var image, std::span<const Var> bound,
                           std::span<const std::size_t> taps) const;

  void append_params(std::vector<ParamRef>& out, const std::string& prefix);
  void append_params(std::vector<ConstParamRef>& out, const std::string& prefix) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<ConvKernel> convs_;
};

// Appearance network. `response_bias` is the learned offset the training
// loss adds to scaled correlation scores.
struct ANet {
  FeatureNet body;
  Tensor response_bias = Tensor({1});

  static ANet create(const NetworkProfile& profile, std::mt19937_64& rng);
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
};

// Semantic network: pretrained on classification, never updated by the
// tracker's training.
struct SNet {
  FeatureNet body;
  std::array<std::size_t, 2> taps{};
  bool frozen = true;

  static SNet create(const NetworkProfile& profile, std::mt19937_64& rng);
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
};

// Outputs of the two tapped S-Net layers, shallow first.
struct SNetFeatures {
  std::array<Tensor, 2> taps;
};

// Shared per-layer MLP 9 -> hidden -> 1 applied to every channel, written
// as two 1x1 convolutions over a 1 x C x 9 tensor.
struct AttentionMlp {
  ConvKernel hidden;
  ConvKernel output;
};

struct SemanticVariant {
  bool multilevel = true;
  bool attention = true;
};

// Trainable part of the semantic branch: fusion 1x1 convs and the
// attention MLPs, one per used S-Net tap.
struct SemanticHead {
  SemanticVariant variant;
  std::vector<std::size_t> layers;  // tap indices used: {0,1} or {1}
  std::vector<AttentionMlp> attention;  // empty unless variant.attention
  std::vector<ConvKernel> fusion;
  Tensor response_bias = Tensor({1});

  static SemanticHead create(const NetworkProfile& profile, SemanticVariant variant,
                             std::mt19937_64& rng);
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
};

// Cached target-side semantic representation: fused g(xi * f_s(z)) per used
// layer, plus the channel weights that produced it.
struct SemanticTemplate {
  std::vector<Tensor> fused;
  std::vector<std::vector<float>> channel_weights;
};

struct ResponseMap {
  Tensor scores;  // H x W x 1
  std::size_t stride = 8;  // input pixels per response cell
};

// --- plain forward API ------------------------------------------------------

Tensor anet_forward(const Tensor& image, const ANet& net, const NetworkProfile& profile);
SNetFeatures snet_forward(const Tensor& image, const SNet& net, const NetworkProfile& profile);

// Center crop of the target footprint from features of a search-sized patch.
Tensor crop_center_features(const Tensor& feat_zs, std::size_t footprint);

// Cell boundaries {0, side, side + footprint, extent} along one axis.
std::vector<std::size_t> attention_grid_edges(std::size_t extent, std::size_t footprint);

// xi_i = sigmoid(MLP(maxpool over the 3x3 grid of channel i)) + 0.5.
std::vector<float> attention_weights(const Tensor& feat_zs, const AttentionMlp& mlp,
                                     std::size_t footprint);
// Process-wide number of attention_weights calls so far.
std::size_t attention_evaluations();

Tensor fuse(const Tensor& feat, const ConvKernel& kernel);

ResponseMap appearance_response(const Tensor& z_feat, const Tensor& x_feat,
                                const NetworkProfile& profile);

SemanticTemplate semantic_template(const SNetFeatures& zs_feats, const SemanticHead& head,
                                   const NetworkProfile& profile);
std::vector<Tensor> semantic_search(const SNetFeatures& x_feats, const SemanticHead& head,
                                    const NetworkProfile& profile);
ResponseMap semantic_response(const SemanticTemplate& target, std::span<const Tensor> search,
                              const NetworkProfile& profile);
// Full composition corr(g(xi * f_s(z)), g(f_s(X))) summed over layers.
ResponseMap semantic_response(const SNetFeatures& zs_feats, const SNetFeatures& x_feats,
                              const SemanticHead& head, const NetworkProfile& profile);

// --- tape forward API (training) -------------------------------------------

struct SemanticBound {
  std::vector<Var> att_hidden_w, att_hidden_b, att_out_w, att_out_b;
  std::vector<Var> fusion_w, fusion_b;
  Var bias;

  // Same order as SemanticHead::parameters().
  std::vector<Var> all() const;
};

SemanticBound bind_semantic(GradTape& tape, const SemanticHead& head, bool trainable);

// Target fused features per used layer; `xi_out` receives the xi variables.
std::vector<Var> semantic_template(GradTape& tape, const SemanticHead& head,
                                   const SemanticBound& bound, std::span<const Var> zs_taps,
                                   const NetworkProfile& profile, std::vector<Var>* xi_out = nullptr);
std::vector<Var> semantic_search(GradTape& tape, const SemanticHead& head,
                                 const SemanticBound& bound, std::span<const Var> x_taps,
                                 const NetworkProfile& profile);
// Sum over layers of corr(template, search).
Var semantic_correlation(GradTape& tape, std::span<const Var> templates,
                         std::span<const Var> searches);

}  // namespace twofold
