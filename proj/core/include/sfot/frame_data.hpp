#pragma once

#include <cstddef>
#include <vector>

#include "sfot/geometry.hpp"

namespace sfot {

/// Target score map over a grid of cells; cell (r, c) covers pixels
/// [c*stride, (c+1)*stride) x [r*stride, (r+1)*stride).
struct ScoreMap {
  std::size_t width = 0;   // cells
  std::size_t height = 0;  // cells
  double stride = 1.0;     // pixels per cell
  std::vector<double> values;  // height x width, row-major

  ScoreMap() = default;
  ScoreMap(std::size_t width, std::size_t height, double stride);

  double& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  Point cell_center(std::size_t r, std::size_t c) const;
  /// Throws InputError on non-finite values, bad stride or size mismatch.
  void validate() const;
};

/// Appearance observation of one visible object in one frame.
struct FeatureRecord {
  Point pos;
  double score = 0.0;
  std::vector<double> feat_low;
  std::vector<double> feat_high;
  long long object_id = -1;
};

using FrameFeatures = std::vector<FeatureRecord>;

}  // namespace sfot
