#pragma once

#include <cstddef>
#include <span>

#include "twofold/tensor.hpp"

namespace twofold {

// Convolution layer parameters. Weights are kH x kW x inC x outC.
struct ConvKernel {
  Tensor weights;
  Tensor bias;  // length outC
  int stride = 1;
  int padding = 0;

  std::size_t kernel_h() const { return weights.dim(0); }
  std::size_t kernel_w() const { return weights.dim(1); }
  std::size_t in_channels() const { return weights.dim(2); }
  std::size_t out_channels() const { return weights.dim(3); }
};

struct Window {
  std::size_t h = 1;
  std::size_t w = 1;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int stride, int padding);

// Cross-correlation style convolution with bias and zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
              int padding);
inline Tensor conv2d(const Tensor& input, const ConvKernel& k) {
  return conv2d(input, k.weights, k.bias, k.stride, k.padding);
}

// Any of the grad pointers may be null when that gradient is not needed.
void conv2d_backward(const Tensor& input, const Tensor& weights, int stride, int padding,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias);

Tensor max_pool(const Tensor& input, Window window, Window stride);
Tensor max_pool_backward(const Tensor& input, Window window, Window stride,
                         const Tensor& grad_out);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);
Tensor sigmoid(const Tensor& input);
// Takes the sigmoid output, not its input.
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

// corr(template, search): D x D x C against S x S x C gives
// (S-D+1) x (S-D+1) x 1. Rectangular extents are accepted as well.
Tensor cross_correlate(const Tensor& templ, const Tensor& search);
void cross_correlate_backward(const Tensor& templ, const Tensor& search, const Tensor& grad_out,
                              Tensor* grad_templ, Tensor* grad_search);

Tensor channel_scale(const Tensor& features, std::span<const float> weights);
void channel_scale_backward(const Tensor& features, std::span<const float> weights,
                            const Tensor& grad_out, Tensor* grad_features,
                            Tensor* grad_weights);

// Corner-aligned bilinear resampling of an H x W x C tensor: output corners
// map onto input corners. A single output row/column samples the input center.
Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w);

// Rectangular HWC slice [top, top+h) x [left, left+w).
Tensor crop(const Tensor& input, std::size_t top, std::size_t left, std::size_t h,
            std::size_t w);
Tensor crop_backward(const Shape& input_shape, std::size_t top, std::size_t left,
                     const Tensor& grad_out);

// Per-channel max over the cells of a grid. Row cell i spans
// [row_edges[i], row_edges[i+1]), likewise for columns. Output is
// 1 x C x (rows*cols): one pooled vector per channel, cells row-major.
Tensor grid_max_pool(const Tensor& input, std::span<const std::size_t> row_edges,
                     std::span<const std::size_t> col_edges);
Tensor grid_max_pool_backward(const Tensor& input, std::span<const std::size_t> row_edges,
                              std::span<const std::size_t> col_edges, const Tensor& grad_out);

// Mean over the spatial extent: H x W x C -> 1 x 1 x C.
Tensor global_average_pool(const Tensor& input);
Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& grad_out);

}  // namespace twofold
