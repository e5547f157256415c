#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "twofold/box.hpp"
#include "twofold/model.hpp"
#include "twofold/networks.hpp"
#include "twofold/sequence.hpp"

namespace twofold {

// Frame coordinates are continuous: pixel (x, y) covers [x, x+1) x [y, y+1).

// Side of the square context region around a box: sqrt((w+p)(h+p)),
// p = (w+h)/2.
double context_side(const BoundingBox& box);

// Square patch of `side` frame pixels centered at (cx, cy), sampled
// bilinearly into out_size x out_size. Pixels outside the frame read as
// the frame's per-channel mean.
Tensor crop_square(const Tensor& frame, double cx, double cy, double side, std::size_t out_size,
                   const float* channel_mean = nullptr);
std::vector<float> channel_mean(const Tensor& frame);

// Search-sized crop around the box with context: side
// context_side(box) * search_size / target_size, times `scale`. Throws when
// the box lies entirely outside the frame.
Tensor crop_with_context(const Tensor& frame, const BoundingBox& box, std::size_t out_size,
                         const NetworkProfile& profile, double scale = 1.0);

// Center target_size x target_size patch of a search-sized crop.
Tensor target_from_context(const Tensor& zs, const NetworkProfile& profile);

// Bicubic (a = -0.75) resize of an H x W x 1 map with half-pixel centers
// and clamped borders.
Tensor bicubic_upsample(const Tensor& map, std::size_t out_h, std::size_t out_w);

struct TrackConfig {
  double lambda = 0.3;
  std::vector<double> scales{1.0 / 1.025, 1.0, 1.025};
  double scale_penalty = 0.9745;
  double scale_damping = 0.59;
  double window_influence = 0.176;
  std::size_t upsample = 16;
  // Min-max normalize each branch jointly over the scales before mixing.
  bool normalize = true;
  // Box size stays within these multiples of the initial size.
  double min_size_factor = 0.2, max_size_factor = 5.0;

  void validate() const;
};

// h = lambda h_a + (1 - lambda) h_s.
ResponseMap combine_responses(const ResponseMap& h_a, const ResponseMap& h_s, double lambda);

// Rescales all maps jointly to [0, 1]; a flat set becomes all zeros.
void normalize_jointly(std::vector<Tensor>& maps);

// Index of the maximum; ties go to the lowest row-major index.
std::size_t argmax(std::span<const float> values);

struct TrackerState {
  const TwofoldModel* model = nullptr;
  TrackConfig config;
  Tensor z_feat;                 // f_a(z)
  SemanticTemplate semantic;     // g(xi * f_s(z)) and xi per used layer
  BoundingBox box;
  BoundingBox initial_box;
  std::size_t frame_index = 0;
  std::size_t last_scale_index = 1;
  // Per-scale combined responses of the last tracked frame.
  std::vector<Tensor> last_responses;
};

TrackerState init(const Tensor& frame, const BoundingBox& box, const TwofoldModel& model,
                  const TrackConfig& config);
BoundingBox track_frame(TrackerState& state, const Tensor& frame);

// Per-frame boxes, the first being the given initial box. When `responses`
// is set, every tracked frame's per-scale maps are appended in the dump
// format below.
std::vector<BoundingBox> track_sequence(const Sequence& seq, const TwofoldModel& model,
                                        const TrackConfig& config,
                                        std::ostream* responses = nullptr);

// `frame_index,x,y,w,h` (top-left) per line.
void write_track(std::ostream& out, const std::vector<BoundingBox>& boxes);

// Response dump record: magic "TWFRSP01", then uint32 little-endian frame
// index, scale count, height, width, then scale_count * height * width
// float32 little-endian values.
void write_response_record(std::ostream& out, std::size_t frame_index,
                           const std::vector<Tensor>& maps);

struct AttentionRow {
  std::size_t layer;    // S-Net tap index
  std::size_t rank;     // 0 = largest weight
  std::size_t channel;
  float weight;
};
// Weights sorted descending per layer; equal weights keep channel order.
std::vector<AttentionRow> dump_attention(const TrackerState& state);
void write_attention_csv(std::ostream& out, const std::vector<AttentionRow>& rows);

}  // namespace twofold
