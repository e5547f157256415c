#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace twofold {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

// Dense float tensor, row-major. Feature maps are rank 3 laid out
// height x width x channels with channels innermost; conv weights are
// rank 4 kH x kW x inC x outC.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 HWC accessors.
  std::size_t height() const { return shape_.at(0); }
  std::size_t width() const { return shape_.at(1); }
  std::size_t channels() const { return shape_.at(2); }
  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }

  float* ptr(std::size_t y, std::size_t x, std::size_t c = 0) {
    return data_.data() + (y * shape_[1] + x) * shape_[2] + c;
  }
  const float* ptr(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data_.data() + (y * shape_[1] + x) * shape_[2] + c;
  }

  // Same data, new shape of equal volume.
  Tensor reshaped(Shape shape) const;

  void fill(float value);
  bool all_finite() const;
  float sum() const;
  float max_value() const;
  float min_value() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Throws ContractViolation naming `what` unless the tensor is rank 3.
void require_hwc(const Tensor& t, const char* what);

}  // namespace twofold
