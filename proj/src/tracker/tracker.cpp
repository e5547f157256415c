#include "twofold/tracker.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <ostream>

#include "twofold/errors.hpp"

namespace twofold {

double context_side(const BoundingBox& box) {
  const double p = (box.w + box.h) / 2.0;
  return std::sqrt((box.w + p) * (box.h + p));
}

std::vector<float> channel_mean(const Tensor& frame) {
  require_hwc(frame, "channel_mean");
  const std::size_t C = frame.channels();
  std::vector<double> acc(C, 0.0);
  for (std::size_t i = 0; i < frame.size(); ++i) acc[i % C] += frame[i];
  std::vector<float> out(C);
  const double n = static_cast<double>(frame.height() * frame.width());
  for (std::size_t c = 0; c < C; ++c) out[c] = static_cast<float>(acc[c] / n);
  return out;
}

Tensor crop_square(const Tensor& frame, double cx, double cy, double side, std::size_t out_size,
                   const float* mean) {
  require_hwc(frame, "crop_square");
  if (!(side > 0.0) || out_size == 0) throw ContractViolation("crop_square: empty crop");
  const std::size_t C = frame.channels();
  std::vector<float> own_mean;
  if (!mean) {
    own_mean = channel_mean(frame);
    mean = own_mean.data();
  }
  const long H = static_cast<long>(frame.height()), W = static_cast<long>(frame.width());
  const double step = side / static_cast<double>(out_size);
  const double x_origin = cx - side / 2.0 - 0.5, y_origin = cy - side / 2.0 - 0.5;

  // Column taps are shared by every row.
  std::vector<long> x0(out_size);
  std::vector<float> ax(out_size);
  for (std::size_t j = 0; j < out_size; ++j) {
    const double fx = x_origin + (static_cast<double>(j) + 0.5) * step;
    const double fl = std::floor(fx);
    x0[j] = static_cast<long>(fl);
    ax[j] = static_cast<float>(fx - fl);
  }
  auto pixel = [&](long y, long x) -> const float* {
    return (y < 0 || x < 0 || y >= H || x >= W)
               ? mean
               : frame.ptr(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };

  Tensor out({out_size, out_size, C});
  for (std::size_t i = 0; i < out_size; ++i) {
    const double fy = y_origin + (static_cast<double>(i) + 0.5) * step;
    const long y0 = static_cast<long>(std::floor(fy));
    const float ay = static_cast<float>(fy - std::floor(fy));
    float* dst = out.ptr(i, 0);
    for (std::size_t j = 0; j < out_size; ++j) {
      const float* p00 = pixel(y0, x0[j]);
      const float* p01 = pixel(y0, x0[j] + 1);
      const float* p10 = pixel(y0 + 1, x0[j]);
      const float* p11 = pixel(y0 + 1, x0[j] + 1);
      const float a = ax[j];
      for (std::size_t c = 0; c < C; ++c) {
        const float top = p00[c] + a * (p01[c] - p00[c]);
        const float bottom = p10[c] + a * (p11[c] - p10[c]);
        dst[j * C + c] = top + ay * (bottom - top);
      }
    }
  }
  return out;
}

Tensor crop_with_context(const Tensor& frame, const BoundingBox& box, std::size_t out_size,
                         const NetworkProfile& profile, double scale) {
  require_hwc(frame, "crop_with_context");
  if (!box.valid()) throw ContractViolation("crop_with_context: invalid box");
  if (box.right() <= 0.0 || box.bottom() <= 0.0 ||
      box.left() >= static_cast<double>(frame.width()) ||
      box.top() >= static_cast<double>(frame.height())) {
    throw ContractViolation("crop_with_context: box lies entirely outside the frame");
  }
  const double side = context_side(box) * static_cast<double>(profile.search_size) /
                      static_cast<double>(profile.target_size) * scale;
  return crop_square(frame, box.cx, box.cy, side, out_size);
}

Tensor target_from_context(const Tensor& zs, const NetworkProfile& profile) {
  const std::size_t off = center_offset(zs.dim(0), profile.target_size);
  return crop(zs, off, off, profile.target_size, profile.target_size);
}

Tensor bicubic_upsample(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  require_hwc(map, "bicubic_upsample");
  if (map.channels() != 1) throw ContractViolation("bicubic_upsample: expected one channel");
  const long H = static_cast<long>(map.height()), W = static_cast<long>(map.width());
  auto weights = [](double t, double w[4]) {
    constexpr double a = -0.75;
    auto near = [](double x) { return ((a + 2) * x - (a + 3)) * x * x + 1; };
    auto far = [](double x) { return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a; };
    w[0] = far(1 + t);
    w[1] = near(t);
    w[2] = near(1 - t);
    w[3] = far(2 - t);
  };
  struct Taps {
    long base;
    double w[4];
  };
  auto taps_for = [&](std::size_t out, long in) {
    std::vector<Taps> taps(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      const double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      const double fl = std::floor(src);
      taps[i].base = static_cast<long>(fl) - 1;
      weights(src - fl, taps[i].w);
    }
    return taps;
  };
  const auto ty = taps_for(out_h, H), tx = taps_for(out_w, W);
  auto clamp_index = [](long v, long n) { return std::clamp(v, 0L, n - 1); };

  // Separable: rows first into a double buffer, then columns.
  std::vector<double> rows(static_cast<std::size_t>(H) * out_w);
  for (long y = 0; y < H; ++y)
    for (std::size_t j = 0; j < out_w; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        acc += tx[j].w[k] * map[static_cast<std::size_t>(y * W + clamp_index(tx[j].base + k, W))];
      }
      rows[static_cast<std::size_t>(y) * out_w + j] = acc;
    }
  Tensor out({out_h, out_w, 1});
  for (std::size_t i = 0; i < out_h; ++i)
    for (std::size_t j = 0; j < out_w; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        acc += ty[i].w[k] * rows[static_cast<std::size_t>(clamp_index(ty[i].base + k, H)) * out_w + j];
      }
      out[i * out_w + j] = static_cast<float>(acc);
    }
  return out;
}

void TrackConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractViolation("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (scales.empty() || scales.size() % 2 == 0) {
    throw ContractViolation("scale set must have an odd number of entries");
  }
  if (!std::is_sorted(scales.begin(), scales.end()) || scales[scales.size() / 2] != 1.0) {
    throw ContractViolation("scales must be ascending with 1 in the middle");
  }
  for (double s : scales) {
    if (!(s > 0.0)) throw ContractViolation("scales must be positive");
  }
  if (!(scale_damping >= 0.0 && scale_damping <= 1.0)) {
    throw ContractViolation("scale damping must lie in [0, 1]");
  }
  if (!(window_influence >= 0.0 && window_influence <= 1.0)) {
    throw ContractViolation("window influence must lie in [0, 1]");
  }
  if (!(scale_penalty > 0.0 && scale_penalty <= 1.0)) {
    throw ContractViolation("scale penalty must lie in (0, 1]");
  }
  if (upsample == 0) throw ContractViolation("upsample factor must be positive");
}

ResponseMap combine_responses(const ResponseMap& h_a, const ResponseMap& h_s, double lambda) {
  if (h_a.scores.shape() != h_s.scores.shape()) {
    throw ContractViolation("combine_responses: " + shape_string(h_a.scores.shape()) + " vs " +
                            shape_string(h_s.scores.shape()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractViolation("combine_responses: lambda outside [0, 1]");
  // The endpoints return one branch untouched; 1*a + 0*b would turn -0 into +0.
  if (lambda == 1.0) return h_a;
  if (lambda == 0.0) return ResponseMap{h_s.scores, h_a.stride};
  const float la = static_cast<float>(lambda), ls = static_cast<float>(1.0 - lambda);
  Tensor h(h_a.scores.shape());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = la * h_a.scores[i] + ls * h_s.scores[i];
  return ResponseMap{std::move(h), h_a.stride};
}

void normalize_jointly(std::vector<Tensor>& maps) {
  float lo = INFINITY, hi = -INFINITY;
  for (const Tensor& m : maps) {
    lo = std::min(lo, m.min_value());
    hi = std::max(hi, m.max_value());
  }
  const float range = hi - lo;
  for (Tensor& m : maps) {
    for (float& v : m.data()) v = range > 0.0f ? (v - lo) / range : 0.0f;
  }
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

void require_finite(const Tensor& t, const char* what, std::size_t frame) {
  if (!t.all_finite()) {
    throw NumericError(std::string(what) + " response is not finite at frame " + std::to_string(frame));
  }
}

Tensor scaled_scores(Tensor raw, const NetworkProfile& profile, const Tensor& bias) {
  for (float& v : raw.data()) v = v * profile.response_scale + bias[0];
  return raw;
}

std::vector<float> hann_window(std::size_t n) {
  std::vector<float> w1(n);
  for (std::size_t i = 0; i < n; ++i) {
    w1[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 1.0) /
                                                    (static_cast<double>(n) + 1.0)));
  }
  std::vector<float> w(n * n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sum += w[i * n + j] = w1[i] * w1[j];
  for (float& v : w) v = static_cast<float>(v / sum);
  return w;
}

}  // namespace

TrackerState init(const Tensor& frame, const BoundingBox& box, const TwofoldModel& model,
                  const TrackConfig& config) {
  config.validate();
  if (!model.has_appearance() && !model.has_semantic()) {
    throw ContractViolation("init: model has neither branch");
  }
  TrackerState state;
  state.model = &model;
  state.config = config;
  state.box = box;
  state.initial_box = box;
  state.last_scale_index = config.scales.size() / 2;

  const NetworkProfile& p = model.profile;
  const Tensor zs = crop_with_context(frame, box, p.search_size, p);
  if (model.has_appearance()) {
    state.z_feat = anet_forward(target_from_context(zs, p), *model.anet, p);
  }
  if (model.has_semantic()) {
    state.semantic = semantic_template(snet_forward(zs, *model.snet, p), *model.head, p);
  }
  return state;
}

BoundingBox track_frame(TrackerState& state, const Tensor& frame) {
  if (!state.model) throw ContractViolation("track_frame: tracker not initialized");
  const TwofoldModel& model = *state.model;
  const NetworkProfile& p = model.profile;
  const TrackConfig& cfg = state.config;
  const std::size_t S = cfg.scales.size();
  ++state.frame_index;

  std::vector<Tensor> app, sem;
  for (double scale : cfg.scales) {
    const Tensor x = crop_with_context(frame, state.box, p.search_size, p, scale);
    if (model.has_appearance()) {
      Tensor h = scaled_scores(appearance_response(state.z_feat, anet_forward(x, *model.anet, p), p).scores,
                               p, model.anet->response_bias);
      require_finite(h, "appearance", state.frame_index);
      app.push_back(std::move(h));
    }
    if (model.has_semantic()) {
      const std::vector<Tensor> search = semantic_search(snet_forward(x, *model.snet, p), *model.head, p);
      Tensor h = scaled_scores(semantic_response(state.semantic, search, p).scores, p,
                               model.head->response_bias);
      require_finite(h, "semantic", state.frame_index);
      sem.push_back(std::move(h));
    }
  }
  if (cfg.normalize) {
    if (!app.empty()) normalize_jointly(app);
    if (!sem.empty()) normalize_jointly(sem);
  }

  std::vector<Tensor> combined(S);
  for (std::size_t s = 0; s < S; ++s) {
    if (!app.empty() && !sem.empty()) {
      combined[s] = combine_responses({app[s], p.total_stride}, {sem[s], p.total_stride}, cfg.lambda).scores;
    } else {
      combined[s] = app.empty() ? sem[s] : app[s];
    }
  }

  const std::size_t R = combined[0].height();
  const std::size_t U = R * cfg.upsample;
  const std::size_t mid = S / 2;
  std::vector<Tensor> up(S);
  std::size_t best = mid;
  float best_peak = -INFINITY;
  // Visit the unscaled search first so ties keep the current size.
  for (std::size_t k = 0; k < S; ++k) {
    const std::size_t s = (mid + k) % S;
    up[s] = bicubic_upsample(combined[s], U, U);
    const float penalty = s == mid ? 1.0f : static_cast<float>(cfg.scale_penalty);
    for (float& v : up[s].data()) v *= penalty;
    const float peak = up[s].max_value();
    if (peak > best_peak) {
      best_peak = peak;
      best = s;
    }
  }

  Tensor& r = up[best];
  const float lo = r.min_value();
  double sum = 0.0;
  for (float& v : r.data()) sum += (v -= lo);
  if (sum > 0.0) {
    for (float& v : r.data()) v = static_cast<float>(v / sum);
  }
  static thread_local std::vector<float> window;
  if (window.size() != U * U) window = hann_window(U);
  const float wi = static_cast<float>(cfg.window_influence);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (1.0f - wi) * r[i] + wi * window[i];

  const std::size_t peak = argmax(r.data());
  const double centre = (static_cast<double>(U) - 1.0) / 2.0;
  const double dy = (static_cast<double>(peak / U) - centre) / static_cast<double>(cfg.upsample);
  const double dx = (static_cast<double>(peak % U) - centre) / static_cast<double>(cfg.upsample);
  const double scale = cfg.scales[best];
  const double side = context_side(state.box) * static_cast<double>(p.search_size) /
                      static_cast<double>(p.target_size) * scale;
  const double to_frame = static_cast<double>(p.total_stride) * side / static_cast<double>(p.search_size);

  BoundingBox next = state.box;
  next.cx = std::clamp(state.box.cx + dx * to_frame, 0.0, static_cast<double>(frame.width()));
  next.cy = std::clamp(state.box.cy + dy * to_frame, 0.0, static_cast<double>(frame.height()));
  const double factor = (1.0 - cfg.scale_damping) + cfg.scale_damping * scale;
  next.w = std::clamp(state.box.w * factor, state.initial_box.w * cfg.min_size_factor,
                      state.initial_box.w * cfg.max_size_factor);
  next.h = std::clamp(state.box.h * factor, state.initial_box.h * cfg.min_size_factor,
                      state.initial_box.h * cfg.max_size_factor);

  state.box = next;
  state.last_scale_index = best;
  state.last_responses = std::move(combined);
  return next;
}

std::vector<BoundingBox> track_sequence(const Sequence& seq, const TwofoldModel& model,
                                        const TrackConfig& config, std::ostream* responses) {
  std::vector<BoundingBox> boxes;
  boxes.reserve(seq.size());
  const BoundingBox& first = seq.first_box();
  Tensor frame = seq.frame(0);
  const Shape frame_shape = frame.shape();
  TrackerState state = init(frame, first, model, config);
  boxes.push_back(first);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    frame = seq.frame(t);
    if (frame.shape() != frame_shape) {
      throw LoadError("sequence '" + seq.name + "': frame " + std::to_string(t) + " is " +
                      shape_string(frame.shape()) + ", first frame " + shape_string(frame_shape));
    }
    boxes.push_back(track_frame(state, frame));
    if (responses) write_response_record(*responses, t, state.last_responses);
  }
  return boxes;
}

void write_track(std::ostream& out, const std::vector<BoundingBox>& boxes) {
  const auto old = out.precision(10);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoundingBox& b = boxes[i];
    out << i << ',' << b.left() << ',' << b.top() << ',' << b.w << ',' << b.h << '\n';
  }
  out.precision(old);
}

void write_response_record(std::ostream& out, std::size_t frame_index,
                           const std::vector<Tensor>& maps) {
  auto u32 = [&](std::size_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
  };
  out.write("TWFRSP01", 8);
  u32(frame_index);
  u32(maps.size());
  u32(maps.empty() ? 0 : maps[0].height());
  u32(maps.empty() ? 0 : maps[0].width());
  for (const Tensor& m : maps) {
    for (float f : m.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
      out.write(b, 4);
    }
  }
}

std::vector<AttentionRow> dump_attention(const TrackerState& state) {
  if (!state.model) throw ContractViolation("dump_attention: tracker not initialized");
  std::vector<AttentionRow> rows;
  if (!state.model->has_semantic()) return rows;
  const SemanticHead& head = *state.model->head;
  for (std::size_t l = 0; l < state.semantic.channel_weights.size(); ++l) {
    const std::vector<float>& xi = state.semantic.channel_weights[l];
    std::vector<std::size_t> order(xi.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xi[a] > xi[b]; });
    for (std::size_t r = 0; r < order.size(); ++r) {
      rows.push_back({head.layers[l], r, order[r], xi[order[r]]});
    }
  }
  return rows;
}

void write_attention_csv(std::ostream& out, const std::vector<AttentionRow>& rows) {
  const auto old = out.precision(9);
  out << "layer,rank,channel_index,weight\n";
  for (const AttentionRow& r : rows) {
    out << r.layer << ',' << r.rank << ',' << r.channel << ',' << r.weight << '\n';
  }
  out.precision(old);
}

}  // namespace twofold
