#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "sfot/dataset.hpp"
#include "sfot/geometry.hpp"

namespace sfot {

struct Curve {
  std::vector<double> thresholds;
  std::vector<double> values;

  /// Value at an exact threshold; throws InputError if absent.
  double at(double threshold) const;
};

struct SequenceScores {
  double prc = 0.0;
  double auc = 0.0;
  double success_at_half = 0.0;
  Curve precision;
  Curve success;
  std::size_t evaluated_frames = 0;
};

struct EvalResult {
  std::map<std::string, SequenceScores> per_sequence;
  /// Unweighted means over sequences; curves are pointwise means.
  SequenceScores aggregate;
  std::size_t evaluated_frames = 0;
};

enum class RankKey { prc, auc };

namespace ope {
inline constexpr int kMaxPrecisionThreshold = 50;  // px, unit steps from 0
inline constexpr int kSuccessSteps = 20;           // 0, 0.05, ..., 1.0
inline constexpr double kPrcThreshold = 20.0;

std::vector<double> precision_thresholds();
std::vector<double> success_thresholds();
}  // namespace ope

/// Fraction of present ground-truth frames with center error <= threshold.
Curve precision_curve(const Sequence& gt, const std::vector<BBox>& pred);
/// Fraction of present ground-truth frames with IoU strictly above threshold.
Curve success_curve(const Sequence& gt, const std::vector<BBox>& pred);
double prc(const Curve& precision);
double auc(const Curve& success);
double success_rate_at_half(const Sequence& gt, const std::vector<BBox>& pred);

SequenceScores score_sequence(const Sequence& gt, const std::vector<BBox>& pred);

/// One-pass evaluation. results must hold an entry for every sequence.
EvalResult evaluate(const std::vector<Sequence>& dataset,
                    const std::map<std::string, std::vector<BBox>>& results);

/// Per-attribute evaluation over the sequences carrying each attribute.
/// Attributes carried by no sequence are omitted.
std::map<Attribute, EvalResult> attribute_breakdown(const EvalResult& eval,
                                                    const std::vector<Sequence>& dataset);

/// Tracker names ordered by descending key, ties by ascending name.
std::vector<std::string> rank(const std::map<std::string, EvalResult>& evals, RankKey key);

}  // namespace sfot
