#include "twofold/networks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "twofold/errors.hpp"

namespace twofold {

namespace {

// Beyond this, float sigmoid rounds to exactly 0 or 1 and xi would touch
// the ends of (0.5, 1.5).
constexpr float kAttentionLogitLimit = 16.0f;

std::atomic<std::size_t> g_attention_calls{0};

}  // namespace

ConvKernel init_conv(std::size_t k, std::size_t in_c, std::size_t out_c, int stride,
                     std::mt19937_64& rng) {
  ConvKernel kernel;
  kernel.weights = Tensor({k, k, in_c, out_c});
  kernel.bias = Tensor({out_c});
  kernel.stride = stride;
  kernel.padding = 0;
  const double fan_in = static_cast<double>(k * k * in_c);
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
  for (float& v : kernel.weights.data()) v = dist(rng);
  return kernel;
}

// ---------------------------------------------------------------------------
// FeatureNet

FeatureNet::FeatureNet(std::vector<LayerSpec> layers, std::size_t in_channels,
                       std::mt19937_64& rng)
    : layers_(std::move(layers)) {
  std::size_t channels = in_channels;
  for (const LayerSpec& l : layers_) {
    if (l.kind != LayerKind::conv) continue;
    convs_.push_back(init_conv(l.kernel, channels, l.out_channels, l.stride, rng));
    channels = l.out_channels;
  }
}

std::vector<Tensor> FeatureNet::forward_taps(const Tensor& image,
                                             std::span<const std::size_t> taps) const {
  std::vector<Tensor> out(taps.size());
  std::size_t last = 0;
  for (std::size_t t : taps) last = std::max(last, t);
  Tensor x = image;
  for (float& v : x.data()) v -= kInputCenter;
  std::size_t conv_index = 0;
  for (std::size_t i = 0; i <= last && i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.kind == LayerKind::conv) {
      x = conv2d(x, convs_[conv_index++]);
      if (l.relu) x = relu(x);
    } else {
      x = max_pool(x, {l.kernel, l.kernel},
                   {static_cast<std::size_t>(l.stride), static_cast<std::size_t>(l.stride)});
    }
    for (std::size_t k = 0; k < taps.size(); ++k) {
      if (taps[k] == i) out[k] = x;
    }
  }
  return out;
}

Tensor FeatureNet::forward(const Tensor& image) const {
  const std::size_t last = layers_.size() - 1;
  return forward_taps(image, std::span<const std::size_t>(&last, 1)).front();
}

std::vector<Var> FeatureNet::bind(GradTape& tape, bool trainable) const {
  std::vector<Var> vars;
  for (const ConvKernel& k : convs_) {
    vars.push_back(trainable ? tape.parameter(k.weights) : tape.constant(k.weights));
    vars.push_back(trainable ? tape.parameter(k.bias) : tape.constant(k.bias));
  }
  return vars;
}

std::vector<Var> FeatureNet::forward(GradTape& tape, Var image, std::span<const Var> bound,
                                     std::span<const std::size_t> taps) const {
  if (bound.size() != 2 * convs_.size()) {
    throw ContractViolation("FeatureNet: bound parameter count mismatch");
  }
  std::vector<Var> out(taps.size());
  std::size_t last = 0;
  for (std::size_t t : taps) last = std::max(last, t);
  Var x = tape.add_scalar(image, -kInputCenter);
  std::size_t conv_index = 0;
  for (std::size_t i = 0; i <= last && i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.kind == LayerKind::conv) {
      const ConvKernel& k = convs_[conv_index];
      x = tape.conv2d(x, bound[2 * conv_index], bound[2 * conv_index + 1], k.stride, k.padding);
      ++conv_index;
      if (l.relu) x = tape.relu(x);
    } else {
      x = tape.max_pool(x, {l.kernel, l.kernel},
                        {static_cast<std::size_t>(l.stride), static_cast<std::size_t>(l.stride)});
    }
    for (std::size_t k = 0; k < taps.size(); ++k) {
      if (taps[k] == i) out[k] = x;
    }
  }
  return out;
}

void FeatureNet::append_params(std::vector<ParamRef>& out, const std::string& prefix) {
  std::size_t conv_index = 0;
  for (const LayerSpec& l : layers_) {
    if (l.kind != LayerKind::conv) continue;
    ConvKernel& k = convs_[conv_index++];
    out.push_back({prefix + l.name + ".weight", &k.weights});
    out.push_back({prefix + l.name + ".bias", &k.bias});
  }
}

void FeatureNet::append_params(std::vector<ConstParamRef>& out, const std::string& prefix) const {
  std::size_t conv_index = 0;
  for (const LayerSpec& l : layers_) {
    if (l.kind != LayerKind::conv) continue;
    const ConvKernel& k = convs_[conv_index++];
    out.push_back({prefix + l.name + ".weight", &k.weights});
    out.push_back({prefix + l.name + ".bias", &k.bias});
  }
}

// ---------------------------------------------------------------------------
// Modules

ANet ANet::create(const NetworkProfile& profile, std::mt19937_64& rng) {
  ANet net;
  net.body = FeatureNet(profile.anet_layers, profile.input_channels, rng);
  return net;
}

std::vector<ParamRef> ANet::parameters() {
  std::vector<ParamRef> out;
  body.append_params(out, "anet.");
  out.push_back({"anet.response_bias", &response_bias});
  return out;
}

std::vector<ConstParamRef> ANet::parameters() const {
  std::vector<ConstParamRef> out;
  body.append_params(out, "anet.");
  out.push_back({"anet.response_bias", &response_bias});
  return out;
}

SNet SNet::create(const NetworkProfile& profile, std::mt19937_64& rng) {
  SNet net;
  net.body = FeatureNet(profile.snet_layers, profile.input_channels, rng);
  net.taps = profile.snet_taps;
  return net;
}

std::vector<ParamRef> SNet::parameters() {
  std::vector<ParamRef> out;
  body.append_params(out, "snet.");
  return out;
}

std::vector<ConstParamRef> SNet::parameters() const {
  std::vector<ConstParamRef> out;
  body.append_params(out, "snet.");
  return out;
}

SemanticHead SemanticHead::create(const NetworkProfile& profile, SemanticVariant variant,
                                  std::mt19937_64& rng) {
  SemanticHead head;
  head.variant = variant;
  head.layers = variant.multilevel ? std::vector<std::size_t>{0, 1} : std::vector<std::size_t>{1};
  for (std::size_t tap : head.layers) {
    const std::size_t channels = profile.snet_tap_channels(tap);
    if (variant.attention) {
      const std::size_t cells = profile.attention_grid * profile.attention_grid;
      head.attention.push_back(
          {init_conv(1, cells, profile.attention_hidden, 1, rng),
           init_conv(1, profile.attention_hidden, 1, 1, rng)});
    }
    head.fusion.push_back(init_conv(1, channels, profile.fusion_out_channels, 1, rng));
  }
  return head;
}

namespace {

template <typename Ref, typename Head>
std::vector<Ref> semantic_params(Head& head) {
  std::vector<Ref> out;
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    const std::string layer = "sem.tap" + std::to_string(head.layers[i]) + ".";
    if (!head.attention.empty()) {
      auto& a = head.attention[i];
      out.push_back({layer + "attention.hidden.weight", &a.hidden.weights});
      out.push_back({layer + "attention.hidden.bias", &a.hidden.bias});
      out.push_back({layer + "attention.output.weight", &a.output.weights});
      out.push_back({layer + "attention.output.bias", &a.output.bias});
    }
    out.push_back({layer + "fusion.weight", &head.fusion[i].weights});
    out.push_back({layer + "fusion.bias", &head.fusion[i].bias});
  }
  out.push_back({"sem.response_bias", &head.response_bias});
  return out;
}

}  // namespace

std::vector<ParamRef> SemanticHead::parameters() { return semantic_params<ParamRef>(*this); }
std::vector<ConstParamRef> SemanticHead::parameters() const {
  return semantic_params<ConstParamRef>(*this);
}

// ---------------------------------------------------------------------------
// Plain forward

namespace {

void require_square_input(const Tensor& image, const NetworkProfile& profile, const char* net) {
  require_hwc(image, net);
  const std::size_t h = image.dim(0), w = image.dim(1);
  const bool ok = h == w && (h == profile.target_size || h == profile.search_size) &&
                  image.dim(2) == profile.input_channels;
  if (!ok) {
    throw ContractViolation(std::string(net) + ": unexpected input " +
                            shape_string(image.shape()) + " for profile '" + profile.name +
                            "' (expected " + std::to_string(profile.target_size) + " or " +
                            std::to_string(profile.search_size) + " square, " +
                            std::to_string(profile.input_channels) + " channels)");
  }
}

Tensor center_crop_to(const Tensor& feat, std::size_t extent) {
  const std::size_t top = center_offset(feat.dim(0), extent);
  const std::size_t left = center_offset(feat.dim(1), extent);
  if (top == 0 && left == 0) return feat;
  return crop(feat, top, left, extent, extent);
}

std::size_t common_search_extent(const SemanticHead& head, std::span<const Tensor> feats) {
  std::size_t extent = feats[0].dim(0);
  for (std::size_t i = 0; i < head.layers.size(); ++i) extent = std::min(extent, feats[i].dim(0));
  return extent;
}

}  // namespace

Tensor anet_forward(const Tensor& image, const ANet& net, const NetworkProfile& profile) {
  require_square_input(image, profile, "anet_forward");
  return net.body.forward(image);
}

SNetFeatures snet_forward(const Tensor& image, const SNet& net, const NetworkProfile& profile) {
  require_square_input(image, profile, "snet_forward");
  auto taps = net.body.forward_taps(image, net.taps);
  return SNetFeatures{{std::move(taps[0]), std::move(taps[1])}};
}

Tensor crop_center_features(const Tensor& feat_zs, std::size_t footprint) {
  require_hwc(feat_zs, "crop_center_features");
  if (footprint == 0 || footprint > feat_zs.dim(0) || footprint > feat_zs.dim(1)) {
    throw ContractViolation("crop_center_features: footprint " + std::to_string(footprint) +
                            " larger than features " + shape_string(feat_zs.shape()));
  }
  return crop(feat_zs, center_offset(feat_zs.dim(0), footprint),
              center_offset(feat_zs.dim(1), footprint), footprint, footprint);
}

std::vector<std::size_t> attention_grid_edges(std::size_t extent, std::size_t footprint) {
  if (extent < 3 || footprint + 2 > extent) {
    throw ContractViolation("attention grid: extent " + std::to_string(extent) +
                            " cannot be split into 3 cells around a " +
                            std::to_string(footprint) + " center");
  }
  const std::size_t side = center_offset(extent, footprint);
  return {0, side, side + footprint, extent};
}

std::size_t attention_evaluations() { return g_attention_calls.load(); }

std::vector<float> attention_weights(const Tensor& feat_zs, const AttentionMlp& mlp,
                                     std::size_t footprint) {
  g_attention_calls.fetch_add(1);
  require_hwc(feat_zs, "attention_weights");
  const auto rows = attention_grid_edges(feat_zs.dim(0), footprint);
  const auto cols = attention_grid_edges(feat_zs.dim(1), footprint);
  const Tensor pooled = grid_max_pool(feat_zs, rows, cols);
  const Tensor hidden = relu(conv2d(pooled, mlp.hidden));
  Tensor logits = conv2d(hidden, mlp.output);
  for (float& v : logits.data()) v = std::clamp(v, -kAttentionLogitLimit, kAttentionLogitLimit);
  const Tensor xi = sigmoid(logits);
  std::vector<float> out(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) out[i] = xi[i] + 0.5f;
  return out;
}

Tensor fuse(const Tensor& feat, const ConvKernel& kernel) {
  if (kernel.kernel_h() != 1 || kernel.kernel_w() != 1) {
    throw ContractViolation("fuse: fusion kernel must be 1x1");
  }
  return conv2d(feat, kernel);
}

ResponseMap appearance_response(const Tensor& z_feat, const Tensor& x_feat,
                                const NetworkProfile& profile) {
  return ResponseMap{cross_correlate(z_feat, x_feat), profile.total_stride};
}

SemanticTemplate semantic_template(const SNetFeatures& zs_feats, const SemanticHead& head,
                                   const NetworkProfile& profile) {
  SemanticTemplate out;
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    const Tensor& feat = zs_feats.taps.at(head.layers[i]);
    Tensor target = crop_center_features(feat, profile.target_footprint);
    std::vector<float> xi;
    if (head.variant.attention) {
      xi = attention_weights(feat, head.attention[i], profile.target_footprint);
      target = channel_scale(target, xi);
    } else {
      xi.assign(feat.dim(2), 1.0f);
    }
    out.fused.push_back(fuse(target, head.fusion[i]));
    out.channel_weights.push_back(std::move(xi));
  }
  return out;
}

std::vector<Tensor> semantic_search(const SNetFeatures& x_feats, const SemanticHead& head,
                                    const NetworkProfile& /*profile*/) {
  std::vector<Tensor> used;
  for (std::size_t tap : head.layers) used.push_back(x_feats.taps.at(tap));
  const std::size_t extent = common_search_extent(head, used);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < used.size(); ++i) {
    out.push_back(fuse(center_crop_to(used[i], extent), head.fusion[i]));
  }
  return out;
}

ResponseMap semantic_response(const SemanticTemplate& target, std::span<const Tensor> search,
                              const NetworkProfile& profile) {
  if (target.fused.size() != search.size() || search.empty()) {
    throw ContractViolation("semantic_response: layer count mismatch");
  }
  Tensor sum = cross_correlate(target.fused[0], search[0]);
  for (std::size_t i = 1; i < search.size(); ++i) {
    const Tensor layer = cross_correlate(target.fused[i], search[i]);
    if (layer.shape() != sum.shape()) {
      throw ContractViolation("semantic_response: per-layer response grids differ");
    }
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += layer[k];
  }
  return ResponseMap{std::move(sum), profile.total_stride};
}

ResponseMap semantic_response(const SNetFeatures& zs_feats, const SNetFeatures& x_feats,
                              const SemanticHead& head, const NetworkProfile& profile) {
  const SemanticTemplate target = semantic_template(zs_feats, head, profile);
  const std::vector<Tensor> search = semantic_search(x_feats, head, profile);
  return semantic_response(target, search, profile);
}

// ---------------------------------------------------------------------------
// Tape forward

std::vector<Var> SemanticBound::all() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < fusion_w.size(); ++i) {
    if (!att_hidden_w.empty()) {
      out.push_back(att_hidden_w[i]);
      out.push_back(att_hidden_b[i]);
      out.push_back(att_out_w[i]);
      out.push_back(att_out_b[i]);
    }
    out.push_back(fusion_w[i]);
    out.push_back(fusion_b[i]);
  }
  out.push_back(bias);
  return out;
}

SemanticBound bind_semantic(GradTape& tape, const SemanticHead& head, bool trainable) {
  auto bind = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  SemanticBound b;
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    if (!head.attention.empty()) {
      b.att_hidden_w.push_back(bind(head.attention[i].hidden.weights));
      b.att_hidden_b.push_back(bind(head.attention[i].hidden.bias));
      b.att_out_w.push_back(bind(head.attention[i].output.weights));
      b.att_out_b.push_back(bind(head.attention[i].output.bias));
    }
    b.fusion_w.push_back(bind(head.fusion[i].weights));
    b.fusion_b.push_back(bind(head.fusion[i].bias));
  }
  b.bias = bind(head.response_bias);
  return b;
}

std::vector<Var> semantic_template(GradTape& tape, const SemanticHead& head,
                                   const SemanticBound& bound, std::span<const Var> zs_taps,
                                   const NetworkProfile& profile, std::vector<Var>* xi_out) {
  std::vector<Var> out;
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    const Var feat = zs_taps[head.layers[i]];
    // A copy: recording nodes may reallocate the tape and move its values.
    const Shape shape = tape.value(feat).shape();
    const std::size_t fp = profile.target_footprint;
    Var target = tape.crop(feat, center_offset(shape[0], fp), center_offset(shape[1], fp), fp, fp);
    if (head.variant.attention) {
      const std::size_t channels = shape[2];
      Var pooled = tape.grid_max_pool(feat, attention_grid_edges(shape[0], fp),
                                      attention_grid_edges(shape[1], fp));
      Var hidden = tape.relu(tape.conv2d(pooled, bound.att_hidden_w[i], bound.att_hidden_b[i], 1, 0));
      Var logits = tape.clamp(tape.conv2d(hidden, bound.att_out_w[i], bound.att_out_b[i], 1, 0),
                              -kAttentionLogitLimit, kAttentionLogitLimit);
      Var xi = tape.reshape(tape.add_scalar(tape.sigmoid(logits), 0.5f), {channels});
      if (xi_out) xi_out->push_back(xi);
      target = tape.channel_scale(target, xi);
    }
    out.push_back(tape.conv2d(target, bound.fusion_w[i], bound.fusion_b[i], 1, 0));
  }
  return out;
}

std::vector<Var> semantic_search(GradTape& tape, const SemanticHead& head,
                                 const SemanticBound& bound, std::span<const Var> x_taps,
                                 const NetworkProfile& /*profile*/) {
  std::size_t extent = tape.value(x_taps[head.layers[0]]).dim(0);
  for (std::size_t tap : head.layers) extent = std::min(extent, tape.value(x_taps[tap]).dim(0));
  std::vector<Var> out;
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    Var feat = x_taps[head.layers[i]];
    const Shape shape = tape.value(feat).shape();
    if (shape[0] != extent) {
      feat = tape.crop(feat, center_offset(shape[0], extent), center_offset(shape[1], extent),
                       extent, extent);
    }
    out.push_back(tape.conv2d(feat, bound.fusion_w[i], bound.fusion_b[i], 1, 0));
  }
  return out;
}

Var semantic_correlation(GradTape& tape, std::span<const Var> templates,
                         std::span<const Var> searches) {
  if (templates.size() != searches.size() || templates.empty()) {
    throw ContractViolation("semantic_correlation: layer count mismatch");
  }
  Var sum = tape.cross_correlate(templates[0], searches[0]);
  for (std::size_t i = 1; i < templates.size(); ++i) {
    sum = tape.add(sum, tape.cross_correlate(templates[i], searches[i]));
  }
  return sum;
}

}  // namespace twofold
