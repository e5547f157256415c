#include "twofold/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "twofold/errors.hpp"

namespace twofold {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  std::size_t number(const char* field) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (++digits > 9) fail(std::string("absurd ") + field);
      ++pos_;
    }
    if (digits == 0) fail(std::string("missing ") + field);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing separator before pixel data");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(origin_ + ": " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_pnm(const std::string& bytes, const std::string& origin) {
  HeaderReader in(bytes, origin);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    const std::string magic = bytes.substr(0, std::min<std::size_t>(2, bytes.size()));
    in.fail("unsupported magic '" + magic + "' (expected P5 or P6)");
  }
  const bool color = bytes[1] == '6';
  in.seek(2);
  const std::size_t width = in.number("width");
  const std::size_t height = in.number("height");
  const std::size_t maxval = in.number("maxval");
  in.single_space();
  if (width == 0 || height == 0) in.fail("zero image dimension");
  if (maxval == 0 || maxval > 255) {
    in.fail("maxval " + std::to_string(maxval) + " unsupported (8-bit only)");
  }
  const std::size_t samples = width * height * (color ? 3 : 1);
  const std::size_t available = bytes.size() - in.pos();
  if (available < samples) {
    in.fail("truncated pixel data: " + std::to_string(available) + " of " +
            std::to_string(samples) + " bytes");
  }
  Tensor image({height, width, 3});
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + in.pos());
  const float denom = static_cast<float>(maxval);
  float* dst = image.raw();
  if (color) {
    for (std::size_t i = 0; i < samples; ++i) dst[i] = static_cast<float>(src[i]) / denom;
  } else {
    for (std::size_t i = 0; i < samples; ++i) {
      dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = static_cast<float>(src[i]) / denom;
    }
  }
  return image;
}

Tensor load_image(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw LoadError("cannot open image " + path.string());
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return decode_pnm(buffer.str(), path.string());
}

std::string encode_ppm(const Tensor& image) {
  require_hwc(image, "encode_ppm");
  if (image.channels() != 3) {
    throw ContractViolation("encode_ppm: expected 3 channels, got " +
                            std::to_string(image.channels()));
  }
  std::string out = "P6\n" + std::to_string(image.width()) + " " +
                    std::to_string(image.height()) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    out[header + i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  return out;
}

void save_ppm(const std::filesystem::path& path, const Tensor& image) {
  const std::string bytes = encode_ppm(image);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw LoadError("cannot write image " + path.string());
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw LoadError("short write to " + path.string());
}

}  // namespace twofold
