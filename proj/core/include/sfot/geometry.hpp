#pragma once

#include <cmath>

namespace sfot {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box in continuous pixel coordinates; (x, y) is the top-left
/// corner. Construction through make() rejects non-finite values and
/// non-positive extents.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  static BBox make(double x, double y, double w, double h);
  static BBox from_center(Point c, double w, double h);

  double area() const { return w * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

bool is_valid(const BBox& b);

Point center(const BBox& b);

double distance(Point a, Point b);

/// Intersection over union, in [0, 1].
double iou(const BBox& a, const BBox& b);

/// Euclidean distance between the two box centers, in pixels.
double center_error(const BBox& a, const BBox& b);

/// Center displacement between two neighbouring frames divided by the square
/// root of the mean of the two box areas.
double relative_speed(const BBox& prev, const BBox& cur);

}  // namespace sfot
