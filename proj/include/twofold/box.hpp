#pragma once

#include <cmath>

namespace twofold {

// Axis-aligned box stored as center and size, in pixels. Files use the
// top-left convention; convert at the boundary.
struct BoundingBox {
  double cx = 0.0, cy = 0.0;
  double w = 0.0, h = 0.0;

  static BoundingBox from_top_left(double x, double y, double w, double h) {
    return {x + w / 2.0, y + h / 2.0, w, h};
  }
  double left() const { return cx - w / 2.0; }
  double top() const { return cy - h / 2.0; }
  double right() const { return cx + w / 2.0; }
  double bottom() const { return cy + h / 2.0; }
  double area() const { return w * h; }
  bool valid() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) &&
           w > 0.0 && h > 0.0;
  }
  bool operator==(const BoundingBox&) const = default;
};

}  // namespace twofold
