#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "twofold/ops.hpp"
#include "twofold/tensor.hpp"

namespace twofold {

// Reverse-mode recorder for the handful of ops the networks use. Each
// forward call appends one node holding its output and a closure that
// pushes the output gradient into its inputs. backward() walks the nodes
// once, newest first. A tape is single-use and single-writer.
class GradTape {
 public:
  struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
    bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
  };
  using BackwardFn = std::function<void(GradTape&, const Tensor& grad_out)>;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Tensor& value(Var v) const;
  // After backward(): zeros for parameters no gradient reached; empty for
  // constants.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Extension point for ops defined outside the tensor core (losses).
  // `fn` is dropped when no input requires a gradient.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  void accumulate(Var v, const Tensor& g);

  Var conv2d(Var x, Var weights, Var bias, int stride, int padding);
  Var max_pool(Var x, Window window, Window stride);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add_scalar(Var x, float c);
  // Gradient passes only where lo < x < hi.
  Var clamp(Var x, float lo, float hi);
  // scale * x + bias, with `bias` a one-element tensor broadcast everywhere.
  Var scale_shift(Var x, float scale, Var bias);
  Var add(Var a, Var b);
  Var weighted_sum(Var a, float wa, Var b, float wb);
  Var reshape(Var x, Shape shape);
  Var cross_correlate(Var templ, Var search);
  Var channel_scale(Var x, Var weights);
  Var crop(Var x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);
  Var grid_max_pool(Var x, std::vector<std::size_t> row_edges, std::vector<std::size_t> col_edges);
  Var global_average_pool(Var x);

  // Seeds d(out) = 1 everywhere; `out` is normally a scalar loss.
  void backward(Var out);
  void backward(Var out, const Tensor& seed);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t parameter_count() const;
  // Nodes whose closure ran in the last backward pass, in visit order.
  const std::vector<std::size_t>& visit_log() const { return visit_log_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_parameter = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_log_;
  bool consumed_ = false;
};

}  // namespace twofold
