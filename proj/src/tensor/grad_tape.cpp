#include "twofold/grad_tape.hpp"

#include <algorithm>
#include <string>

#include "twofold/errors.hpp"

namespace twofold {

using Var = GradTape::Var;

const GradTape::Node& GradTape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw ContractViolation("grad tape: variable " + std::to_string(v.id) + " not on this tape");
  }
  return nodes_[v.id];
}

GradTape::Node& GradTape::node(Var v) {
  return const_cast<Node&>(static_cast<const GradTape&>(*this).node(v));
}

Var GradTape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var{nodes_.size() - 1};
}

Var GradTape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, true, {}});
  return Var{nodes_.size() - 1};
}

const Tensor& GradTape::value(Var v) const { return node(v).value; }

const Tensor& GradTape::grad(Var v) const { return node(v).grad; }

bool GradTape::requires_grad(Var v) const { return node(v).requires_grad; }

std::size_t GradTape::parameter_count() const {
  std::size_t n = 0;
  for (const Node& node : nodes_) n += node.is_parameter ? 1 : 0;
  return n;
}

Var GradTape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

void GradTape::accumulate(Var v, const Tensor& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw ContractViolation("grad tape: gradient shape " + shape_string(g.shape()) +
                            " does not match value shape " + shape_string(n.value.shape()));
  }
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void GradTape::backward(Var out) { backward(out, Tensor(value(out).shape(), 1.0f)); }

void GradTape::backward(Var out, const Tensor& seed) {
  if (nodes_.empty()) throw ContractViolation("grad tape: backward called before any forward op");
  if (consumed_) throw ContractViolation("grad tape: backward already ran on this tape");
  consumed_ = true;
  node(out);
  visit_log_.clear();
  for (Node& n : nodes_) {
    if (n.is_parameter) n.grad = Tensor::zeros_like(n.value);
  }
  accumulate(out, seed);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    visit_log_.push_back(i);
    // The closure may append to other nodes' gradients but never to its own.
    const Tensor g = n.grad;
    n.backward(*this, g);
  }
}

Var GradTape::conv2d(Var x, Var weights, Var bias, int stride, int padding) {
  Tensor out = twofold::conv2d(value(x), value(weights), value(bias), stride, padding);
  const Var ins[] = {x, weights, bias};
  return record(std::move(out), ins, [=](GradTape& t, const Tensor& g) {
    Tensor gx, gw, gb;
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(weights);
    const bool need_b = t.requires_grad(bias);
    twofold::conv2d_backward(t.value(x), t.value(weights), stride, padding, g,
                             need_x ? &gx : nullptr, need_w ? &gw : nullptr,
                             need_b ? &gb : nullptr);
    if (need_x) t.accumulate(x, gx);
    if (need_w) t.accumulate(weights, gw);
    if (need_b) t.accumulate(bias, gb);
  });
}

Var GradTape::max_pool(Var x, Window window, Window stride) {
  const Var ins[] = {x};
  return record(twofold::max_pool(value(x), window, stride), ins,
                [=](GradTape& t, const Tensor& g) {
                  t.accumulate(x, twofold::max_pool_backward(t.value(x), window, stride, g));
                });
}

Var GradTape::relu(Var x) {
  const Var ins[] = {x};
  return record(twofold::relu(value(x)), ins, [=](GradTape& t, const Tensor& g) {
    t.accumulate(x, twofold::relu_backward(t.value(x), g));
  });
}

Var GradTape::sigmoid(Var x) {
  const Var ins[] = {x};
  Tensor out = twofold::sigmoid(value(x));
  const std::size_t self = nodes_.size();
  return record(std::move(out), ins, [=](GradTape& t, const Tensor& g) {
    t.accumulate(x, twofold::sigmoid_backward(t.nodes_[self].value, g));
  });
}

Var GradTape::add_scalar(Var x, float c) {
  Tensor out = value(x);
  for (float& v : out.data()) v += c;
  const Var ins[] = {x};
  return record(std::move(out), ins, [=](GradTape& t, const Tensor& g) { t.accumulate(x, g); });
}

Var GradTape::clamp(Var x, float lo, float hi) {
  Tensor out = value(x);
  for (float& v : out.data()) v = std::clamp(v, lo, hi);
  const Var ins[] = {x};
  return record(std::move(out), ins, [=](GradTape& t, const Tensor& g) {
    Tensor gx = g;
    const Tensor& in = t.value(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (!(in[i] > lo && in[i] < hi)) gx[i] = 0.0f;
    }
    t.accumulate(x, gx);
  });
}

Var GradTape::scale_shift(Var x, float scale, Var bias) {
  if (value(bias).size() != 1) throw ContractViolation("scale_shift: bias must have one element");
  Tensor out = value(x);
  const float b = value(bias)[0];
  for (float& v : out.data()) v = scale * v + b;
  const Var ins[] = {x, bias};
  return record(std::move(out), ins, [=](GradTape& t, const Tensor& g) {
    if (t.requires_grad(x)) {
      Tensor gx = g;
      for (float& v : gx.data()) v *= scale;
      t.accumulate(x, gx);
    }
    if (t.requires_grad(bias)) t.accumulate(bias, Tensor(t.value(bias).shape(), g.sum()));
  });
}

Var GradTape::add(Var a, Var b) { return weighted_sum(a, 1.0f, b, 1.0f); }

Var GradTape::weighted_sum(Var a, float wa, Var b, float wb) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.shape() != vb.shape()) {
    throw ContractViolation("weighted_sum: shape mismatch " + shape_string(va.shape()) + " vs " +
                            shape_string(vb.shape()));
  }
  Tensor out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wa * va[i] + wb * vb[i];
  const Var ins[] = {a, b};
  return record(std::move(out), ins, [=](GradTape& t, const Tensor& g) {
    auto scaled = [&g](float w) {
      Tensor r = g;
      for (float& v : r.data()) v *= w;
      return r;
    };
    t.accumulate(a, scaled(wa));
    t.accumulate(b, scaled(wb));
  });
}

Var GradTape::reshape(Var x, Shape shape) {
  const Shape original = value(x).shape();
  const Var ins[] = {x};
  return record(value(x).reshaped(std::move(shape)), ins, [=](GradTape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(original));
  });
}

Var GradTape::cross_correlate(Var templ, Var search) {
  const Var ins[] = {templ, search};
  return record(twofold::cross_correlate(value(templ), value(search)), ins,
                [=](GradTape& t, const Tensor& g) {
                  Tensor gt, gs;
                  const bool need_t = t.requires_grad(templ);
                  const bool need_s = t.requires_grad(search);
                  twofold::cross_correlate_backward(t.value(templ), t.value(search), g,
                                                    need_t ? &gt : nullptr,
                                                    need_s ? &gs : nullptr);
                  if (need_t) t.accumulate(templ, gt);
                  if (need_s) t.accumulate(search, gs);
                });
}

Var GradTape::channel_scale(Var x, Var weights) {
  const Var ins[] = {x, weights};
  return record(twofold::channel_scale(value(x), value(weights).data()), ins,
                [=](GradTape& t, const Tensor& g) {
                  Tensor gx, gw;
                  const bool need_x = t.requires_grad(x);
                  const bool need_w = t.requires_grad(weights);
                  twofold::channel_scale_backward(t.value(x), t.value(weights).data(), g,
                                                  need_x ? &gx : nullptr,
                                                  need_w ? &gw : nullptr);
                  if (need_x) t.accumulate(x, gx);
                  if (need_w) t.accumulate(weights, gw.reshaped(t.value(weights).shape()));
                });
}

Var GradTape::crop(Var x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const Var ins[] = {x};
  return record(twofold::crop(value(x), top, left, h, w), ins,
                [=](GradTape& t, const Tensor& g) {
                  t.accumulate(x, twofold::crop_backward(t.value(x).shape(), top, left, g));
                });
}

Var GradTape::grid_max_pool(Var x, std::vector<std::size_t> row_edges,
                            std::vector<std::size_t> col_edges) {
  const Var ins[] = {x};
  Tensor out = twofold::grid_max_pool(value(x), row_edges, col_edges);
  return record(std::move(out), ins,
                [=, rows = std::move(row_edges), cols = std::move(col_edges)](
                    GradTape& t, const Tensor& g) {
                  t.accumulate(x, twofold::grid_max_pool_backward(t.value(x), rows, cols, g));
                });
}

Var GradTape::global_average_pool(Var x) {
  const Var ins[] = {x};
  return record(twofold::global_average_pool(value(x)), ins, [=](GradTape& t, const Tensor& g) {
    t.accumulate(x, twofold::global_average_pool_backward(t.value(x).shape(), g));
  });
}

}  // namespace twofold
