#include "sfot/metrics.hpp"

#include <algorithm>

#include "sfot/error.hpp"

namespace sfot {

namespace ope {

std::vector<double> precision_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= kMaxPrecisionThreshold; ++i) t.push_back(static_cast<double>(i));
  return t;
}

std::vector<double> success_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= kSuccessSteps; ++i) t.push_back(static_cast<double>(i) / kSuccessSteps);
  return t;
}

}  // namespace ope

namespace {

void check_lengths(const Sequence& gt, const std::vector<BBox>& pred) {
  if (pred.size() != gt.size()) {
    throw InputError(gt.name + ": " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(gt.size()) + " frames");
  }
}

// Per-frame measurements over frames with a present ground-truth box.
template <typename Fn>
std::vector<double> present_frame_values(const Sequence& gt, const std::vector<BBox>& pred, Fn&& fn) {
  check_lengths(gt, pred);
  std::vector<double> out;
  out.reserve(gt.size());
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (gt.frames[t].box) out.push_back(fn(*gt.frames[t].box, pred[t]));
  }
  return out;
}

Curve curve_from(const std::vector<double>& thresholds, const std::vector<double>& measurements,
                 bool (*hit)(double value, double threshold)) {
  Curve c;
  c.thresholds = thresholds;
  c.values.reserve(thresholds.size());
  const double n = static_cast<double>(measurements.size());
  for (double tau : thresholds) {
    std::size_t hits = 0;
    for (double m : measurements) hits += hit(m, tau) ? 1 : 0;
    c.values.push_back(measurements.empty() ? 0.0 : static_cast<double>(hits) / n);
  }
  return c;
}

bool within(double err, double tau) { return err <= tau; }
bool above(double overlap, double tau) { return overlap > tau; }

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Curve mean_curve(const std::vector<const Curve*>& curves) {
  Curve out;
  if (curves.empty()) return out;
  out.thresholds = curves.front()->thresholds;
  out.values.assign(out.thresholds.size(), 0.0);
  for (const auto* c : curves) {
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += c->values[i];
  }
  for (auto& v : out.values) v /= static_cast<double>(curves.size());
  return out;
}

EvalResult aggregate(std::map<std::string, SequenceScores> per_sequence) {
  EvalResult r;
  std::vector<const Curve*> prec;
  std::vector<const Curve*> succ;
  std::vector<double> prcs;
  std::vector<double> aucs;
  std::vector<double> sr;
  for (const auto& [name, s] : per_sequence) {
    prec.push_back(&s.precision);
    succ.push_back(&s.success);
    prcs.push_back(s.prc);
    aucs.push_back(s.auc);
    sr.push_back(s.success_at_half);
    r.evaluated_frames += s.evaluated_frames;
  }
  r.aggregate.prc = mean(prcs);
  r.aggregate.auc = mean(aucs);
  r.aggregate.success_at_half = mean(sr);
  r.aggregate.precision = mean_curve(prec);
  r.aggregate.success = mean_curve(succ);
  r.aggregate.evaluated_frames = r.evaluated_frames;
  r.per_sequence = std::move(per_sequence);
  return r;
}

}  // namespace

double Curve::at(double threshold) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] == threshold) return values[i];
  }
  throw InputError("curve has no threshold " + std::to_string(threshold));
}

Curve precision_curve(const Sequence& gt, const std::vector<BBox>& pred) {
  const auto errors = present_frame_values(gt, pred, [](const BBox& g, const BBox& p) { return center_error(g, p); });
  return curve_from(ope::precision_thresholds(), errors, within);
}

Curve success_curve(const Sequence& gt, const std::vector<BBox>& pred) {
  const auto overlaps = present_frame_values(gt, pred, [](const BBox& g, const BBox& p) { return iou(g, p); });
  return curve_from(ope::success_thresholds(), overlaps, above);
}

double prc(const Curve& precision) { return precision.at(ope::kPrcThreshold); }

double auc(const Curve& success) { return mean(success.values); }

double success_rate_at_half(const Sequence& gt, const std::vector<BBox>& pred) {
  const auto overlaps = present_frame_values(gt, pred, [](const BBox& g, const BBox& p) { return iou(g, p); });
  return curve_from({0.5}, overlaps, above).values.front();
}

SequenceScores score_sequence(const Sequence& gt, const std::vector<BBox>& pred) {
  SequenceScores s;
  s.precision = precision_curve(gt, pred);
  s.success = success_curve(gt, pred);
  s.prc = prc(s.precision);
  s.auc = auc(s.success);
  s.success_at_half = s.success.at(0.5);
  s.evaluated_frames = static_cast<std::size_t>(
      std::count_if(gt.frames.begin(), gt.frames.end(), [](const FrameAnnotation& f) { return !f.absent(); }));
  return s;
}

EvalResult evaluate(const std::vector<Sequence>& dataset, const std::map<std::string, std::vector<BBox>>& results) {
  if (dataset.empty()) throw InputError("evaluate: empty dataset");
  std::map<std::string, SequenceScores> per_sequence;
  for (const auto& seq : dataset) {
    const auto it = results.find(seq.name);
    if (it == results.end()) throw InputError("evaluate: no results for sequence " + seq.name);
    per_sequence[seq.name] = score_sequence(seq, it->second);
  }
  return aggregate(std::move(per_sequence));
}

std::map<Attribute, EvalResult> attribute_breakdown(const EvalResult& eval, const std::vector<Sequence>& dataset) {
  std::map<Attribute, EvalResult> out;
  std::vector<AttributeSet> attrs;
  attrs.reserve(dataset.size());
  for (const auto& s : dataset) attrs.push_back(resolved_attributes(s));
  for (auto a : all_attributes()) {
    std::map<std::string, SequenceScores> subset;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!attrs[i].contains(a)) continue;
      const auto it = eval.per_sequence.find(dataset[i].name);
      if (it == eval.per_sequence.end()) throw InputError("attribute_breakdown: " + dataset[i].name + " not evaluated");
      subset.emplace(it->first, it->second);
    }
    if (!subset.empty()) out.emplace(a, aggregate(std::move(subset)));
  }
  return out;
}

std::vector<std::string> rank(const std::map<std::string, EvalResult>& evals, RankKey key) {
  std::vector<std::string> names;
  for (const auto& [name, e] : evals) names.push_back(name);
  const auto value = [&](const std::string& n) {
    const auto& agg = evals.at(n).aggregate;
    return key == RankKey::prc ? agg.prc : agg.auc;
  };
  std::stable_sort(names.begin(), names.end(), [&](const std::string& a, const std::string& b) {
    const double va = value(a);
    const double vb = value(b);
    if (va != vb) return va > vb;
    return a < b;
  });
  return names;
}

}  // namespace sfot
