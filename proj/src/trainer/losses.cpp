#include <algorithm>
#include <cmath>

#include "twofold/errors.hpp"
#include "twofold/trainer.hpp"

namespace twofold {

LabelMap make_label_map(std::size_t response_size, double radius) {
  if (response_size == 0 || response_size % 2 == 0) {
    throw ContractViolation("label map size must be odd, got " + std::to_string(response_size));
  }
  if (!(radius > 0.0)) throw ContractViolation("label radius must be positive");
  LabelMap map{Tensor({response_size, response_size, 1}), Tensor({response_size, response_size, 1})};
  const double c = static_cast<double>(response_size - 1) / 2.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < response_size; ++i)
    for (std::size_t j = 0; j < response_size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      const bool pos = std::sqrt(di * di + dj * dj) <= radius;
      map.labels[i * response_size + j] = pos ? 1.0f : -1.0f;
      positives += pos;
    }
  const std::size_t negatives = map.labels.size() - positives;
  if (negatives == 0) {
    throw ContractViolation("label radius " + std::to_string(radius) + " leaves no negatives on a " +
                            std::to_string(response_size) + "x" + std::to_string(response_size) + " map");
  }
  const float wp = static_cast<float>(0.5 / static_cast<double>(positives));
  const float wn = static_cast<float>(0.5 / static_cast<double>(negatives));
  for (std::size_t k = 0; k < map.labels.size(); ++k) map.weights[k] = map.labels[k] > 0.0f ? wp : wn;
  return map;
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_d(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

LossValue logistic_loss(const Tensor& h, const LabelMap& label) {
  if (h.shape() != label.labels.shape()) {
    throw ContractViolation("logistic_loss: response " + shape_string(h.shape()) + " vs labels " +
                            shape_string(label.labels.shape()));
  }
  LossValue out{0.0, Tensor(h.shape())};
  for (std::size_t p = 0; p < h.size(); ++p) {
    const double y = label.labels[p], w = label.weights[p];
    const double margin = y * static_cast<double>(h[p]);
    out.loss += w * softplus(-margin);
    // d/dh log(1 + exp(-y h)) = -y sigmoid(-y h)
    out.grad[p] = static_cast<float>(-w * y * sigmoid_d(-margin));
  }
  return out;
}

Var logistic_loss(GradTape& tape, Var h, const LabelMap& label) {
  LossValue lv = logistic_loss(tape.value(h), label);
  const Var ins[] = {h};
  Tensor grad = std::move(lv.grad);
  return tape.record(Tensor({1}, static_cast<float>(lv.loss)), ins,
                     [h, grad = std::move(grad)](GradTape& t, const Tensor& g) {
                       Tensor scaled = grad;
                       for (float& v : scaled.data()) v *= g[0];
                       t.accumulate(h, scaled);
                     });
}

LossValue softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ContractViolation("softmax_cross_entropy: label " + std::to_string(label) + " of " +
                            std::to_string(logits.size()) + " classes");
  }
  const float peak = logits.max_value();
  double z = 0.0;
  for (float v : logits.data()) z += std::exp(static_cast<double>(v - peak));
  LossValue out{std::log(z) - static_cast<double>(logits[label] - peak), Tensor(logits.shape())};
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double p = std::exp(static_cast<double>(logits[k] - peak)) / z;
    out.grad[k] = static_cast<float>(p - (k == label ? 1.0 : 0.0));
  }
  return out;
}

Var softmax_cross_entropy(GradTape& tape, Var logits, std::size_t label) {
  LossValue lv = softmax_cross_entropy(tape.value(logits), label);
  const Var ins[] = {logits};
  Tensor grad = std::move(lv.grad);
  return tape.record(Tensor({1}, static_cast<float>(lv.loss)), ins,
                     [logits, grad = std::move(grad)](GradTape& t, const Tensor& g) {
                       Tensor scaled = grad;
                       for (float& v : scaled.data()) v *= g[0];
                       t.accumulate(logits, scaled);
                     });
}

}  // namespace twofold
