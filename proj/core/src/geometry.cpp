#include "sfot/geometry.hpp"

#include <algorithm>
#include <string>

#include "sfot/error.hpp"

namespace sfot {

bool is_valid(const BBox& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) &&
         std::isfinite(b.h) && b.w > 0.0 && b.h > 0.0;
}

BBox BBox::make(double x, double y, double w, double h) {
  BBox b{x, y, w, h};
  if (!is_valid(b)) {
    throw InputError("invalid box (" + std::to_string(x) + ", " + std::to_string(y) + ", " +
                     std::to_string(w) + ", " + std::to_string(h) + ")");
  }
  return b;
}

BBox BBox::from_center(Point c, double w, double h) {
  return make(c.x - w / 2.0, c.y - h / 2.0, w, h);
}

Point center(const BBox& b) { return {b.x + b.w / 2.0, b.y + b.h / 2.0}; }

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double iou(const BBox& a, const BBox& b) {
  if (a == b) return 1.0;
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_error(const BBox& a, const BBox& b) { return distance(center(a), center(b)); }

double relative_speed(const BBox& prev, const BBox& cur) {
  const double mean_area = (prev.area() + cur.area()) / 2.0;
  return distance(center(prev), center(cur)) / std::sqrt(mean_area);
}

}  // namespace sfot
