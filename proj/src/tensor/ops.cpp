#include "twofold/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"
#include "twofold/errors.hpp"

namespace twofold {

namespace {

std::string axis_msg(const char* op, const char* axis, std::size_t got, std::size_t want) {
  return std::string(op) + ": " + axis + " mismatch (got " + std::to_string(got) +
         ", expected " + std::to_string(want) + ")";
}

struct ConvGeometry {
  std::size_t in_h, in_w, in_c;
  std::size_t k_h, k_w, out_c;
  std::size_t out_h, out_w;
  int stride, pad;

  std::size_t patch_len() const { return k_h * k_w * in_c; }
  std::size_t positions() const { return out_h * out_w; }
  bool is_pointwise() const { return k_h == 1 && k_w == 1 && stride == 1 && pad == 0; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weights, int stride, int padding) {
  require_hwc(input, "conv2d input");
  if (weights.rank() != 4) {
    throw ContractViolation("conv2d: weights must be kH x kW x inC x outC, got " +
                            shape_string(weights.shape()));
  }
  if (stride < 1) throw ContractViolation("conv2d: stride must be >= 1");
  if (padding < 0) throw ContractViolation("conv2d: padding must be >= 0");
  ConvGeometry g{};
  g.in_h = input.dim(0);
  g.in_w = input.dim(1);
  g.in_c = input.dim(2);
  g.k_h = weights.dim(0);
  g.k_w = weights.dim(1);
  g.out_c = weights.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (g.k_h < 1 || g.k_w < 1 || g.out_c < 1) {
    throw ContractViolation("conv2d: empty kernel " + shape_string(weights.shape()));
  }
  if (weights.dim(2) != g.in_c) {
    throw ContractViolation(axis_msg("conv2d", "channel axis", g.in_c, weights.dim(2)));
  }
  if (g.in_h + 2 * static_cast<std::size_t>(padding) < g.k_h) {
    throw ContractViolation(axis_msg("conv2d", "height axis too small for kernel", g.in_h, g.k_h));
  }
  if (g.in_w + 2 * static_cast<std::size_t>(padding) < g.k_w) {
    throw ContractViolation(axis_msg("conv2d", "width axis too small for kernel", g.in_w, g.k_w));
  }
  g.out_h = conv_output_extent(g.in_h, g.k_h, stride, padding);
  g.out_w = conv_output_extent(g.in_w, g.k_w, stride, padding);
  return g;
}

// Patch matrix: one row per output position, kH*kW*C columns.
std::vector<float> im2col(const Tensor& input, const ConvGeometry& g) {
  std::vector<float> cols(g.positions() * g.patch_len(), 0.0f);
  const float* src = input.raw();
  float* dst = cols.data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad;
        if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
          dst += g.k_w * g.in_c;
          continue;
        }
        const long ix0 = static_cast<long>(ox) * g.stride - g.pad;
        if (ix0 >= 0 && ix0 + static_cast<long>(g.k_w) <= static_cast<long>(g.in_w)) {
          const float* row = src + (iy * g.in_w + ix0) * g.in_c;
          std::copy(row, row + g.k_w * g.in_c, dst);
          dst += g.k_w * g.in_c;
          continue;
        }
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const long ix = ix0 + static_cast<long>(kx);
          if (ix >= 0 && ix < static_cast<long>(g.in_w)) {
            const float* px = src + (iy * g.in_w + ix) * g.in_c;
            std::copy(px, px + g.in_c, dst);
          }
          dst += g.in_c;
        }
      }
    }
  }
  return cols;
}

void col2im(const std::vector<float>& cols, const ConvGeometry& g, Tensor& grad_input) {
  float* dst = grad_input.raw();
  const float* src = cols.data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad;
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          const long ix = static_cast<long>(ox) * g.stride + static_cast<long>(kx) - g.pad;
          if (iy >= 0 && iy < static_cast<long>(g.in_h) && ix >= 0 &&
              ix < static_cast<long>(g.in_w)) {
            float* px = dst + (iy * g.in_w + ix) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) px[c] += src[c];
          }
          src += g.in_c;
        }
      }
    }
  }
}

float dot(const float* a, const float* b, std::size_t n) {
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
  }
  float acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
              ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                            " vs " + shape_string(b.shape()));
  }
}

void check_grid(const Tensor& input, std::span<const std::size_t> rows,
                std::span<const std::size_t> cols) {
  require_hwc(input, "grid_max_pool input");
  auto check_axis = [](std::span<const std::size_t> edges, std::size_t extent, const char* axis) {
    if (edges.size() < 2 || edges.front() != 0 || edges.back() != extent) {
      throw ContractViolation(std::string("grid_max_pool: ") + axis +
                              " edges must start at 0 and end at the extent " +
                              std::to_string(extent));
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
      if (edges[i] <= edges[i - 1]) {
        throw ContractViolation(std::string("grid_max_pool: empty ") + axis + " cell");
      }
    }
  };
  check_axis(rows, input.dim(0), "row");
  check_axis(cols, input.dim(1), "column");
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int stride, int padding) {
  const std::size_t padded = in + 2 * static_cast<std::size_t>(padding);
  if (padded < kernel || stride < 1) return 0;
  return (padded - kernel) / static_cast<std::size_t>(stride) + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
              int padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  if (bias.size() != g.out_c) {
    throw ContractViolation(axis_msg("conv2d", "bias length", bias.size(), g.out_c));
  }
  Tensor out({g.out_h, g.out_w, g.out_c});
  float* o = out.raw();
  for (std::size_t m = 0; m < g.positions(); ++m) {
    std::copy(bias.raw(), bias.raw() + g.out_c, o + m * g.out_c);
  }
  if (g.is_pointwise()) {
    detail::gemm_nn(g.positions(), g.out_c, g.in_c, input.raw(), weights.raw(), o);
  } else {
    const std::vector<float> cols = im2col(input, g);
    detail::gemm_nn(g.positions(), g.out_c, g.patch_len(), cols.data(), weights.raw(), o);
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weights, int stride, int padding,
                     const Tensor& grad_out, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  if (grad_out.shape() != Shape{g.out_h, g.out_w, g.out_c}) {
    throw ContractViolation("conv2d_backward: upstream gradient shape " +
                            shape_string(grad_out.shape()) + " does not match output");
  }
  const std::size_t m = g.positions();
  if (grad_bias) {
    *grad_bias = Tensor({g.out_c});
    for (std::size_t p = 0; p < m; ++p) {
      const float* row = grad_out.raw() + p * g.out_c;
      for (std::size_t o = 0; o < g.out_c; ++o) (*grad_bias)[o] += row[o];
    }
  }
  if (!grad_input && !grad_weights) return;

  std::vector<float> cols;
  const float* patches = input.raw();
  if (!g.is_pointwise()) {
    cols = im2col(input, g);
    patches = cols.data();
  }
  if (grad_weights) {
    *grad_weights = Tensor(weights.shape());
    detail::gemm_tn(m, g.out_c, g.patch_len(), patches, grad_out.raw(), grad_weights->raw());
  }
  if (grad_input) {
    std::vector<float> w_t(g.out_c * g.patch_len());
    for (std::size_t k = 0; k < g.patch_len(); ++k) {
      for (std::size_t o = 0; o < g.out_c; ++o) w_t[o * g.patch_len() + k] = weights[k * g.out_c + o];
    }
    *grad_input = Tensor(input.shape());
    if (g.is_pointwise()) {
      detail::gemm_nn(m, g.patch_len(), g.out_c, grad_out.raw(), w_t.data(), grad_input->raw());
    } else {
      std::vector<float> grad_cols(m * g.patch_len(), 0.0f);
      detail::gemm_nn(m, g.patch_len(), g.out_c, grad_out.raw(), w_t.data(), grad_cols.data());
      col2im(grad_cols, g, *grad_input);
    }
  }
}

Tensor max_pool(const Tensor& input, Window window, Window stride) {
  require_hwc(input, "max_pool input");
  if (window.h < 1 || window.w < 1 || stride.h < 1 || stride.w < 1) {
    throw ContractViolation("max_pool: window and stride must be positive");
  }
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (window.h > h || window.w > w) {
    throw ContractViolation("max_pool: window " + std::to_string(window.h) + "x" +
                            std::to_string(window.w) + " larger than input " +
                            shape_string(input.shape()));
  }
  const std::size_t oh = (h - window.h) / stride.h + 1;
  const std::size_t ow = (w - window.w) / stride.w + 1;
  Tensor out({oh, ow, c}, -std::numeric_limits<float>::infinity());
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      float* dst = out.ptr(oy, ox);
      for (std::size_t ky = 0; ky < window.h; ++ky) {
        for (std::size_t kx = 0; kx < window.w; ++kx) {
          const float* src = input.ptr(oy * stride.h + ky, ox * stride.w + kx);
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = std::max(dst[ch], src[ch]);
        }
      }
    }
  }
  return out;
}

Tensor max_pool_backward(const Tensor& input, Window window, Window stride,
                         const Tensor& grad_out) {
  const Tensor out = max_pool(input, window, stride);
  check_same_shape(out, grad_out, "max_pool_backward");
  const std::size_t c = input.dim(2);
  Tensor grad(input.shape());
  for (std::size_t oy = 0; oy < out.dim(0); ++oy) {
    for (std::size_t ox = 0; ox < out.dim(1); ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float best = out.at(oy, ox, ch);
        // First maximal element in scan order receives the gradient.
        bool routed = false;
        for (std::size_t ky = 0; ky < window.h && !routed; ++ky) {
          for (std::size_t kx = 0; kx < window.w && !routed; ++kx) {
            const std::size_t y = oy * stride.h + ky, x = ox * stride.w + kx;
            if (input.at(y, x, ch) == best) {
              grad.at(y, x, ch) += grad_out.at(oy, ox, ch);
              routed = true;
            }
          }
        }
      }
    }
  }
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  check_same_shape(input, grad_out, "relu_backward");
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > 0.0f ? grad_out[i] : 0.0f;
  return grad;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const float x = input[i];
    if (x >= 0.0f) {
      out[i] = 1.0f / (1.0f + std::exp(-x));
    } else {
      const float e = std::exp(x);
      out[i] = e / (1.0f + e);
    }
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
  check_same_shape(output, grad_out, "sigmoid_backward");
  Tensor grad(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    grad[i] = grad_out[i] * output[i] * (1.0f - output[i]);
  }
  return grad;
}

Tensor cross_correlate(const Tensor& templ, const Tensor& search) {
  require_hwc(templ, "cross_correlate template");
  require_hwc(search, "cross_correlate search");
  const std::size_t dh = templ.dim(0), dw = templ.dim(1), c = templ.dim(2);
  const std::size_t sh = search.dim(0), sw = search.dim(1);
  if (search.dim(2) != c) {
    throw ContractViolation(axis_msg("cross_correlate", "channel axis", search.dim(2), c));
  }
  if (dh > sh || dw > sw) {
    throw ContractViolation("cross_correlate: template " + shape_string(templ.shape()) +
                            " larger than search " + shape_string(search.shape()));
  }
  const std::size_t oh = sh - dh + 1, ow = sw - dw + 1;
  const std::size_t row_len = dw * c;
  Tensor out({oh, ow, 1});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      float acc = 0.0f;
      for (std::size_t r = 0; r < dh; ++r) {
        acc += dot(templ.ptr(r, 0), search.ptr(i + r, j), row_len);
      }
      out.at(i, j, 0) = acc;
    }
  }
  return out;
}

void cross_correlate_backward(const Tensor& templ, const Tensor& search, const Tensor& grad_out,
                              Tensor* grad_templ, Tensor* grad_search) {
  require_hwc(templ, "cross_correlate template");
  require_hwc(search, "cross_correlate search");
  const std::size_t dh = templ.dim(0), dw = templ.dim(1), c = templ.dim(2);
  if (search.dim(2) != c || dh > search.dim(0) || dw > search.dim(1)) {
    throw ContractViolation("cross_correlate_backward: incompatible operands");
  }
  const std::size_t oh = search.dim(0) - dh + 1, ow = search.dim(1) - dw + 1;
  if (grad_out.shape() != Shape{oh, ow, 1}) {
    throw ContractViolation("cross_correlate_backward: upstream gradient shape " +
                            shape_string(grad_out.shape()));
  }
  const std::size_t row_len = dw * c;
  if (grad_templ) *grad_templ = Tensor(templ.shape());
  if (grad_search) *grad_search = Tensor(search.shape());
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      const float g = grad_out.at(i, j, 0);
      if (g == 0.0f) continue;
      for (std::size_t r = 0; r < dh; ++r) {
        const float* s = search.ptr(i + r, j);
        const float* t = templ.ptr(r, 0);
        if (grad_templ) {
          float* gt = grad_templ->ptr(r, 0);
          for (std::size_t q = 0; q < row_len; ++q) gt[q] += g * s[q];
        }
        if (grad_search) {
          float* gs = grad_search->ptr(i + r, j);
          for (std::size_t q = 0; q < row_len; ++q) gs[q] += g * t[q];
        }
      }
    }
  }
}

Tensor channel_scale(const Tensor& features, std::span<const float> weights) {
  require_hwc(features, "channel_scale features");
  const std::size_t c = features.dim(2);
  if (weights.size() != c) {
    throw ContractViolation(axis_msg("channel_scale", "weight length", weights.size(), c));
  }
  Tensor out = features;
  float* p = out.raw();
  for (std::size_t i = 0; i < out.size(); i += c) {
    for (std::size_t ch = 0; ch < c; ++ch) p[i + ch] *= weights[ch];
  }
  return out;
}

void channel_scale_backward(const Tensor& features, std::span<const float> weights,
                            const Tensor& grad_out, Tensor* grad_features,
                            Tensor* grad_weights) {
  check_same_shape(features, grad_out, "channel_scale_backward");
  const std::size_t c = features.dim(2);
  if (weights.size() != c) {
    throw ContractViolation(axis_msg("channel_scale", "weight length", weights.size(), c));
  }
  if (grad_features) *grad_features = channel_scale(grad_out, weights);
  if (grad_weights) {
    *grad_weights = Tensor({c});
    std::vector<double> acc(c, 0.0);
    for (std::size_t i = 0; i < features.size(); i += c) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        acc[ch] += static_cast<double>(features[i + ch]) * grad_out[i + ch];
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) (*grad_weights)[ch] = static_cast<float>(acc[ch]);
  }
}

Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_hwc(image, "bilinear_resize image");
  if (out_h < 1 || out_w < 1) throw ContractViolation("bilinear_resize: empty output size");
  const std::size_t in_h = image.dim(0), in_w = image.dim(1), c = image.dim(2);
  auto source = [](std::size_t i, std::size_t in, std::size_t out) {
    if (out == 1) return (static_cast<double>(in) - 1.0) / 2.0;
    return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  Tensor out({out_h, out_w, c});
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = source(y, in_h, out_h);
    const std::size_t y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = source(x, in_w, out_w);
      const std::size_t x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, in_w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = image.at(y0, x0, ch) * (1.0 - fx) + image.at(y0, x1, ch) * fx;
        const double bottom = image.at(y1, x0, ch) * (1.0 - fx) + image.at(y1, x1, ch) * fx;
        out.at(y, x, ch) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& input, std::size_t top, std::size_t left, std::size_t h,
            std::size_t w) {
  require_hwc(input, "crop input");
  if (top + h > input.dim(0) || left + w > input.dim(1) || h == 0 || w == 0) {
    throw ContractViolation("crop: region " + std::to_string(h) + "x" + std::to_string(w) +
                            " at (" + std::to_string(top) + "," + std::to_string(left) +
                            ") exceeds input " + shape_string(input.shape()));
  }
  const std::size_t c = input.dim(2);
  Tensor out({h, w, c});
  for (std::size_t y = 0; y < h; ++y) {
    const float* src = input.ptr(top + y, left);
    std::copy(src, src + w * c, out.ptr(y, 0));
  }
  return out;
}

Tensor crop_backward(const Shape& input_shape, std::size_t top, std::size_t left,
                     const Tensor& grad_out) {
  Tensor grad(input_shape);
  const std::size_t h = grad_out.dim(0), w = grad_out.dim(1), c = grad_out.dim(2);
  for (std::size_t y = 0; y < h; ++y) {
    const float* src = grad_out.ptr(y, 0);
    std::copy(src, src + w * c, grad.ptr(top + y, left));
  }
  return grad;
}

Tensor grid_max_pool(const Tensor& input, std::span<const std::size_t> row_edges,
                     std::span<const std::size_t> col_edges) {
  check_grid(input, row_edges, col_edges);
  const std::size_t rows = row_edges.size() - 1, cols = col_edges.size() - 1;
  const std::size_t c = input.dim(2);
  const std::size_t cells = rows * cols;
  Tensor out({1, c, cells}, -std::numeric_limits<float>::infinity());
  for (std::size_t gr = 0; gr < rows; ++gr) {
    for (std::size_t gc = 0; gc < cols; ++gc) {
      const std::size_t cell = gr * cols + gc;
      for (std::size_t y = row_edges[gr]; y < row_edges[gr + 1]; ++y) {
        for (std::size_t x = col_edges[gc]; x < col_edges[gc + 1]; ++x) {
          const float* px = input.ptr(y, x);
          for (std::size_t ch = 0; ch < c; ++ch) {
            float& slot = out[ch * cells + cell];
            slot = std::max(slot, px[ch]);
          }
        }
      }
    }
  }
  return out;
}

Tensor grid_max_pool_backward(const Tensor& input, std::span<const std::size_t> row_edges,
                              std::span<const std::size_t> col_edges, const Tensor& grad_out) {
  const Tensor pooled = grid_max_pool(input, row_edges, col_edges);
  check_same_shape(pooled, grad_out, "grid_max_pool_backward");
  const std::size_t rows = row_edges.size() - 1, cols = col_edges.size() - 1;
  const std::size_t c = input.dim(2), cells = rows * cols;
  Tensor grad(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t gr = 0; gr < rows; ++gr) {
      for (std::size_t gc = 0; gc < cols; ++gc) {
        const std::size_t cell = gr * cols + gc;
        const float best = pooled[ch * cells + cell];
        bool routed = false;
        for (std::size_t y = row_edges[gr]; y < row_edges[gr + 1] && !routed; ++y) {
          for (std::size_t x = col_edges[gc]; x < col_edges[gc + 1] && !routed; ++x) {
            if (input.at(y, x, ch) == best) {
              grad.at(y, x, ch) += grad_out[ch * cells + cell];
              routed = true;
            }
          }
        }
      }
    }
  }
  return grad;
}

Tensor global_average_pool(const Tensor& input) {
  require_hwc(input, "global_average_pool input");
  const std::size_t c = input.dim(2), n = input.dim(0) * input.dim(1);
  std::vector<double> acc(c, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += input[p * c + ch];
  }
  Tensor out({1, 1, c});
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = static_cast<float>(acc[ch] / n);
  return out;
}

Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
  Tensor grad(input_shape);
  const std::size_t c = input_shape.at(2), n = input_shape.at(0) * input_shape.at(1);
  const float inv = 1.0f / static_cast<float>(n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) grad[p * c + ch] = grad_out[ch] * inv;
  }
  return grad;
}

}  // namespace twofold
