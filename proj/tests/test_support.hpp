#pragma once

// Shared helpers for the unit and acceptance suites: random tensors,
// normwise relative error, central finite differences, and the
// brute-force reference kernels every optimized op is checked against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "twofold/tensor.hpp"

namespace twofold::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = dist(rng);
  return t;
}

// Distinct nonzero values spaced 2/size apart in random order, so max-type ops keep
// their argmax under finite-difference perturbations smaller than the gap.
inline Tensor separated_tensor(std::mt19937_64& rng, Shape shape) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size(); ++i) {
    t[order[i]] = -1.0f + (2.0f * static_cast<float>(i) + 1.0f) / static_cast<float>(order.size());
  }
  return t;
}

// max |a-b| / max |b|; both tensors must have the same size.
inline double rel_error(std::span<const float> a, std::span<const float> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(static_cast<double>(a[i]) - b[i]));
    den = std::max(den, std::abs(static_cast<double>(b[i])));
  }
  return den > 0.0 ? num / den : num;
}
inline double rel_error(const Tensor& a, const Tensor& b) { return rel_error(a.data(), b.data()); }

inline double rel_error(std::span<const float> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(static_cast<double>(a[i]) - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0.0 ? num / den : num;
}

// ||a-b||_2 / ||b||_2, used for gradient comparisons.
inline double rel_l2(std::span<const float> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.raw(), b.raw(), a.size() * sizeof(float)) == 0;
}

// Central differences of a scalar function of one tensor argument.
inline std::vector<double> finite_difference(const std::function<double(const Tensor&)>& f,
                                             Tensor x, double eps = 1e-3) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float saved = x[i];
    x[i] = static_cast<float>(saved + eps);
    const double up = f(x);
    x[i] = static_cast<float>(saved - eps);
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

// Fixed random projection of a tensor to a scalar: sum_i r_i * t_i.
inline double project(const Tensor& t, const std::vector<double>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += r[i] * t[i];
  return acc;
}

inline std::vector<double> random_weights(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> r(n);
  for (double& v : r) v = dist(rng);
  return r;
}

inline Tensor to_tensor(const std::vector<double>& v, Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

// ---------------------------------------------------------------------------
// Brute-force references. Double accumulation, direct index arithmetic, no
// shared code with the optimized kernels.

inline std::vector<double> oracle_conv2d(const Tensor& in, const Tensor& w, const Tensor& b,
                                         int stride, int pad, std::size_t& oh, std::size_t& ow) {
  const long H = static_cast<long>(in.dim(0)), W = static_cast<long>(in.dim(1));
  const long C = static_cast<long>(in.dim(2));
  const long KH = static_cast<long>(w.dim(0)), KW = static_cast<long>(w.dim(1));
  const long O = static_cast<long>(w.dim(3));
  oh = static_cast<std::size_t>((H + 2 * pad - KH) / stride + 1);
  ow = static_cast<std::size_t>((W + 2 * pad - KW) / stride + 1);
  std::vector<double> out(oh * ow * O);
  for (long y = 0; y < static_cast<long>(oh); ++y)
    for (long x = 0; x < static_cast<long>(ow); ++x)
      for (long o = 0; o < O; ++o) {
        double acc = b[o];
        for (long ky = 0; ky < KH; ++ky)
          for (long kx = 0; kx < KW; ++kx)
            for (long c = 0; c < C; ++c) {
              const long iy = y * stride + ky - pad, ix = x * stride + kx - pad;
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              acc += static_cast<double>(in[(iy * W + ix) * C + c]) *
                     w[((ky * KW + kx) * C + c) * O + o];
            }
        out[(y * ow + x) * O + o] = acc;
      }
  return out;
}

inline std::vector<float> oracle_max_pool(const Tensor& in, std::size_t wh, std::size_t ww,
                                          std::size_t sh, std::size_t sw) {
  const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
  const std::size_t oh = (H - wh) / sh + 1, ow = (W - ww) / sw + 1;
  std::vector<float> out;
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < C; ++c) {
        float best = in[((y * sh) * W + x * sw) * C + c];
        for (std::size_t ky = 0; ky < wh; ++ky)
          for (std::size_t kx = 0; kx < ww; ++kx)
            best = std::max(best, in[((y * sh + ky) * W + x * sw + kx) * C + c]);
        out.push_back(best);
      }
  return out;
}

inline std::vector<double> oracle_xcorr(const Tensor& t, const Tensor& s) {
  const std::size_t D = t.dim(0), DW = t.dim(1), C = t.dim(2);
  const std::size_t S = s.dim(0), SW = s.dim(1);
  std::vector<double> out;
  for (std::size_t i = 0; i + D <= S; ++i)
    for (std::size_t j = 0; j + DW <= SW; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < D; ++r)
        for (std::size_t q = 0; q < DW; ++q)
          for (std::size_t c = 0; c < C; ++c)
            acc += static_cast<double>(t[(r * DW + q) * C + c]) * s[((i + r) * SW + j + q) * C + c];
      out.push_back(acc);
    }
  return out;
}

// 1x1 convolution as an explicit per-pixel matrix-vector product.
inline std::vector<double> oracle_pointwise(const Tensor& in, const Tensor& w, const Tensor& b) {
  const std::size_t P = in.dim(0) * in.dim(1), C = in.dim(2), O = w.dim(3);
  std::vector<double> out(P * O);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t o = 0; o < O; ++o) {
      double acc = b[o];
      for (std::size_t c = 0; c < C; ++c) acc += static_cast<double>(in[p * C + c]) * w[c * O + o];
      out[p * O + o] = acc;
    }
  return out;
}

}  // namespace twofold::testing
