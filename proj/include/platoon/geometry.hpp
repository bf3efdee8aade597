#pragma once

#include <algorithm>

namespace platoon::cutin {

// Axis-aligned rectangle in the road frame: x longitudinal (direction of
// travel), y lateral. Degenerate (zero-area) rectangles are legal inputs to
// intersection_area but not to intersection_ratio.
struct Rect {
  double x_lo = 0.0;
  double x_hi = 0.0;
  double y_lo = 0.0;
  double y_hi = 0.0;

  double width() const { return x_hi - x_lo; }
  double height() const { return y_hi - y_lo; }
  double area() const {
    return std::max(0.0, width()) * std::max(0.0, height());
  }
  bool contains(double x, double y) const {
    return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi;
  }
};

inline Rect rect_from_center(double cx, double cy, double half_x,
                             double half_y) {
  return Rect{cx - half_x, cx + half_x, cy - half_y, cy + half_y};
}

inline double intersection_area(const Rect& a, const Rect& b) {
  const double dx =
      std::min(a.x_hi, b.x_hi) - std::max(a.x_lo, b.x_lo);
  const double dy =
      std::min(a.y_hi, b.y_hi) - std::max(a.y_lo, b.y_lo);
  if (dx <= 0.0 || dy <= 0.0) return 0.0;
  return dx * dy;
}

// Fraction of rectangle `r` covered by `region`, in [0, 1].
inline double rect_intersection_ratio(const Rect& r, const Rect& region) {
  const double a = r.area();
  if (a <= 0.0) {
    // Point-like prediction: inside-ness decides fully.
    const double cx = 0.5 * (r.x_lo + r.x_hi);
    const double cy = 0.5 * (r.y_lo + r.y_hi);
    return region.contains(cx, cy) ? 1.0 : 0.0;
  }
  return std::clamp(intersection_area(r, region) / a, 0.0, 1.0);
}

}  // namespace platoon::cutin
