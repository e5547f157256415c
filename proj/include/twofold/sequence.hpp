#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "twofold/box.hpp"
#include "twofold/tensor.hpp"

namespace twofold {

// A video with per-frame annotations. Frames live either on disk
// (frame_paths) or in memory (frames); never both.
struct Sequence {
  std::string name;
  std::vector<std::filesystem::path> frame_paths;
  std::vector<Tensor> frames;
  // One entry per frame; nullopt where the annotation is absent or unusable.
  std::vector<std::optional<BoundingBox>> boxes;

  std::size_t size() const { return frames.empty() ? frame_paths.size() : frames.size(); }
  Tensor frame(std::size_t index) const;
  const BoundingBox& first_box() const;
};

// Parses `x,y,w,h` lines (comma, tab or space separated, top-left
// convention). Non-finite or non-positive sizes become nullopt.
std::vector<std::optional<BoundingBox>> parse_annotations(const std::string& text,
                                                          const std::string& origin);
std::vector<std::optional<BoundingBox>> read_annotations(const std::filesystem::path& path);
// Writes `x,y,w,h` lines; missing boxes are written as NaN.
void write_annotations(const std::filesystem::path& path,
                       const std::vector<std::optional<BoundingBox>>& boxes);

// OTB layout: <dir>/img/<frames>.ppm|.pgm and <dir>/groundtruth_rect.txt.
// The annotation file holds one line per frame, or a single line for the
// first frame only. Frames are ordered by file name.
Sequence load_sequence(const std::filesystem::path& dir);

// Writes `seq` in the layout load_sequence reads (frames as 0001.ppm, ...).
void save_sequence(const Sequence& seq, const std::filesystem::path& dir);

// Sub-directories of `root` that contain a groundtruth_rect.txt, by name.
std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root);

}  // namespace twofold
