#include "twofold/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "twofold/errors.hpp"
#include "twofold/image_io.hpp"

namespace twofold {

namespace fs = std::filesystem;

Tensor Sequence::frame(std::size_t index) const {
  if (index >= size()) {
    throw ContractViolation("sequence '" + name + "': frame " + std::to_string(index) +
                            " out of range (" + std::to_string(size()) + " frames)");
  }
  if (!frames.empty()) return frames[index];
  return load_image(frame_paths[index]);
}

const BoundingBox& Sequence::first_box() const {
  if (boxes.empty() || !boxes.front()) {
    throw LoadError("sequence '" + name + "' has no first-frame annotation");
  }
  return *boxes.front();
}

std::vector<std::optional<BoundingBox>> parse_annotations(const std::string& text,
                                                          const std::string& origin) {
  std::vector<std::optional<BoundingBox>> boxes;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    for (char& c : line) {
      if (c == ',' || c == '\t' || c == '\r') c = ' ';
    }
    if (line.find_first_not_of(' ') == std::string::npos) continue;
    std::istringstream fields(line);
    double v[4];
    std::string token;
    int n = 0;
    while (fields >> token) {
      if (n == 4) throw FormatError(origin + ":" + std::to_string(line_no) + ": more than 4 fields");
      try {
        std::size_t used = 0;
        v[n] = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        if (token == "NaN" || token == "nan") {
          v[n] = std::nan("");
        } else {
          throw FormatError(origin + ":" + std::to_string(line_no) + ": bad number '" + token + "'");
        }
      }
      ++n;
    }
    if (n != 4) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": expected x,y,w,h");
    }
    const BoundingBox box = BoundingBox::from_top_left(v[0], v[1], v[2], v[3]);
    boxes.push_back(box.valid() ? std::optional<BoundingBox>(box) : std::nullopt);
  }
  return boxes;
}

std::vector<std::optional<BoundingBox>> read_annotations(const fs::path& path) {
  std::ifstream file(path);
  if (!file) throw LoadError("missing annotation file " + path.string());
  std::ostringstream text;
  text << file.rdbuf();
  return parse_annotations(text.str(), path.string());
}

void write_annotations(const fs::path& path, const std::vector<std::optional<BoundingBox>>& boxes) {
  std::ofstream file(path);
  if (!file) throw LoadError("cannot write " + path.string());
  file << std::setprecision(10);
  for (const auto& b : boxes) {
    if (b) {
      file << b->left() << ',' << b->top() << ',' << b->w << ',' << b->h << '\n';
    } else {
      file << "NaN,NaN,NaN,NaN\n";
    }
  }
}

Sequence load_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("not a sequence directory: " + dir.string());
  Sequence seq;
  seq.name = dir.filename().string();
  if (seq.name.empty()) seq.name = dir.parent_path().filename().string();

  const fs::path img = dir / "img";
  if (!fs::is_directory(img)) throw LoadError(dir.string() + ": missing img/ directory");
  for (const auto& entry : fs::directory_iterator(img)) {
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) {
      seq.frame_paths.push_back(entry.path());
    }
  }
  std::sort(seq.frame_paths.begin(), seq.frame_paths.end());
  if (seq.frame_paths.empty()) throw LoadError(img.string() + ": no .ppm/.pgm frames");

  seq.boxes = read_annotations(dir / "groundtruth_rect.txt");
  if (seq.boxes.size() == 1) {
    seq.boxes.resize(seq.frame_paths.size());
  } else if (seq.boxes.size() != seq.frame_paths.size()) {
    throw LoadError(dir.string() + ": " + std::to_string(seq.frame_paths.size()) +
                    " frames but " + std::to_string(seq.boxes.size()) + " annotation lines");
  }
  if (!seq.boxes.front()) throw LoadError(dir.string() + ": first-frame annotation missing");

  // Fail early on an unreadable first frame; later frames are checked as read.
  (void)load_image(seq.frame_paths.front());
  return seq;
}

void save_sequence(const Sequence& seq, const fs::path& dir) {
  fs::create_directories(dir / "img");
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.ppm", i + 1);
    save_ppm(dir / "img" / name, seq.frame(i));
  }
  write_annotations(dir / "groundtruth_rect.txt", seq.boxes);
}

std::vector<fs::path> list_sequences(const fs::path& root) {
  if (!fs::is_directory(root)) throw LoadError("not a dataset directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "groundtruth_rect.txt")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace twofold
