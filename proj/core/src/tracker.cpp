#include "sfot/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfot/error.hpp"
#include "sfot/text_io.hpp"

namespace sfot {

double candidate_threshold(const ScoreMap& map, const TrackerConfig& cfg) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : map.values) peak = std::max(peak, v);
  return std::max(cfg.tau_cand_fraction * peak, cfg.tau_cand_floor);
}

CandidateSet extract_candidates(const ScoreMap& map, const FrameFeatures& features, double image_width,
                                double image_height, const TrackerConfig& cfg) {
  map.validate();
  CandidateSet set;
  set.image_width = image_width;
  set.image_height = image_height;
  if (map.values.empty()) return set;

  const double tau = candidate_threshold(map, cfg);
  const auto half = static_cast<long long>(cfg.nms_window / 2);
  const auto h = static_cast<long long>(map.height);
  const auto w = static_cast<long long>(map.width);

  struct Peak {
    double score;
    std::size_t index;
  };
  std::vector<Peak> peaks;
  for (long long r = 0; r < h; ++r) {
    for (long long c = 0; c < w; ++c) {
      const double v = map.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      if (v < tau) continue;
      bool is_max = true;
      for (long long dr = -half; dr <= half && is_max; ++dr) {
        for (long long dc = -half; dc <= half && is_max; ++dc) {
          const long long rr = r + dr;
          const long long cc = c + dc;
          if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
          const double u = map.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
          // Plateaus keep only their first cell in row-major order.
          const bool earlier = rr < r || (rr == r && cc < c);
          is_max = earlier ? v > u : v >= u;
        }
      }
      if (is_max) peaks.push_back({v, static_cast<std::size_t>(r * w + c)});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (peaks.size() > cfg.max_candidates) peaks.resize(cfg.max_candidates);

  const double radius = cfg.feature_radius_cells * map.stride;
  std::size_t width = 0;
  for (const auto& rec : features) width = std::max(width, rec.feat_high.size());
  for (const auto& p : peaks) {
    Candidate cand;
    cand.position = map.cell_center(p.index / map.width, p.index % map.width);
    cand.score = std::clamp(p.score, 0.0, 1.0);
    const FeatureRecord* best = nullptr;
    double best_dist = radius;
    for (const auto& rec : features) {
      const double dist = distance(rec.pos, cand.position);
      if (dist <= best_dist) {
        best_dist = dist;
        best = &rec;
      }
    }
    if (best) {
      cand.feat_high = best->feat_high;
      cand.feat_low = best->feat_low;
      cand.object_id = best->object_id;
    } else {
      cand.feat_high.assign(width, 0.0);
      cand.feat_low.assign(width, 0.0);
    }
    set.candidates.push_back(std::move(cand));
  }
  return set;
}

std::optional<long long> ObjectDatabase::target_id() const {
  for (const auto& [id, obj] : objects) {
    if (obj.is_target) return id;
  }
  return std::nullopt;
}

const TrackedObject* ObjectDatabase::target() const {
  for (const auto& [id, obj] : objects) {
    if (obj.is_target) return &obj;
  }
  return nullptr;
}

namespace {

TrackedObject make_object(ObjectDatabase& db, const CandidateSet& set, std::size_t index, std::size_t frame) {
  TrackedObject o;
  o.id = db.next_id++;
  o.last_candidate = set.candidates[index];
  o.candidate_index = index;
  o.last_seen_frame = frame;
  o.appearance_high = o.last_candidate.feat_high;
  o.appearance_low = o.last_candidate.feat_low;
  return o;
}

TrackedObject* find_target(ObjectDatabase& db) {
  for (auto& [id, obj] : db.objects) {
    if (obj.is_target) return &obj;
  }
  return nullptr;
}

}  // namespace

ObjectDatabase init(const BBox& first_frame_gt, const CandidateSet& first_frame_candidates, const TrackerConfig& cfg,
                    double stride) {
  if (!is_valid(first_frame_gt)) throw InputError("init: the first frame needs a valid ground-truth box");
  ObjectDatabase db;
  db.current = first_frame_candidates;
  db.target_box = first_frame_gt;
  db.target_confidence = 1.0;

  const Point c = center(first_frame_gt);
  const double radius = cfg.feature_radius_cells * stride;
  std::optional<std::size_t> target_index;
  double best = radius;
  for (std::size_t i = 0; i < db.current.size(); ++i) {
    const double d = distance(db.current.candidates[i].position, c);
    if (d <= best) {
      best = d;
      target_index = i;
    }
  }
  if (!target_index) {
    Candidate seed;
    seed.position = c;
    seed.score = 1.0;
    std::size_t width = 0;
    for (const auto& cand : db.current.candidates) width = std::max(width, cand.feat_high.size());
    seed.feat_high.assign(width, 0.0);
    seed.feat_low.assign(width, 0.0);
    db.current.candidates.push_back(std::move(seed));
    target_index = db.current.size() - 1;
  }
  for (std::size_t i = 0; i < db.current.size(); ++i) {
    if (i != *target_index && db.current.candidates[i].score < cfg.tau_new) continue;
    auto obj = make_object(db, db.current, i, 0);
    obj.is_target = i == *target_index;
    db.objects.emplace(obj.id, std::move(obj));
  }
  db.target_matched = true;
  return db;
}

void associate(ObjectDatabase& db, const MatchSet& matches, const CandidateSet& prev_set, const CandidateSet& cur_set,
               std::size_t frame_index, const TrackerConfig& cfg) {
  std::vector<std::size_t> cur_of_prev(prev_set.size(), cur_set.size());
  for (const auto& [i, j] : matches.matches) {
    if (i >= prev_set.size() || j >= cur_set.size()) throw InputError("associate: match index out of range");
    cur_of_prev[i] = j;
  }

  std::vector<bool> claimed(cur_set.size(), false);
  db.target_matched = false;
  for (auto it = db.objects.begin(); it != db.objects.end();) {
    auto& obj = it->second;
    const std::size_t j = obj.candidate_index < prev_set.size() ? cur_of_prev[obj.candidate_index] : cur_set.size();
    if (j == cur_set.size() || claimed[j]) {
      it = db.objects.erase(it);  // disappeared
      continue;
    }
    claimed[j] = true;
    obj.candidate_index = j;
    obj.last_candidate = cur_set.candidates[j];
    obj.last_seen_frame = frame_index;
    if (!obj.is_target) {
      obj.appearance_high = obj.last_candidate.feat_high;
      obj.appearance_low = obj.last_candidate.feat_low;
    } else {
      db.target_matched = true;
    }
    ++it;
  }

  for (std::size_t j = 0; j < cur_set.size(); ++j) {
    if (claimed[j] || cur_set.candidates[j].score < cfg.tau_new) continue;
    auto obj = make_object(db, cur_set, j, frame_index);
    db.objects.emplace(obj.id, std::move(obj));
  }
  db.current = cur_set;
}

TargetEstimate select_target(ObjectDatabase& db, const CandidateSet& cur_set, double target_w, double target_h,
                             const TrackerConfig& cfg) {
  TrackedObject* target = find_target(db);
  TargetEstimate est{db.target_box, 0.0};

  if (target && db.target_matched) {
    est.beta = std::clamp(target->last_candidate.score, 0.0, 1.0);
    est.box = BBox::from_center(target->last_candidate.position, target_w, target_h);
  } else {
    if (target) target->is_target = false;
    std::vector<std::size_t> order(cur_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cur_set.candidates[a].score > cur_set.candidates[b].score;
    });
    const bool has_best = !order.empty() && cur_set.candidates[order[0]].score >= cfg.tau_redetect;
    const bool unambiguous =
        order.size() < 2 ||
        cur_set.candidates[order[0]].score - cur_set.candidates[order[1]].score >= cfg.redetect_margin;
    if (has_best && unambiguous) {
      const std::size_t j = order[0];
      TrackedObject* owner = nullptr;
      for (auto& [id, obj] : db.objects) {
        if (obj.candidate_index == j) owner = &obj;
      }
      if (!owner) {
        auto obj = make_object(db, cur_set, j, 0);
        owner = &db.objects.emplace(obj.id, std::move(obj)).first->second;
      }
      owner->is_target = true;
      const double score = std::clamp(cur_set.candidates[j].score, 0.0, 1.0);
      est.beta = score * cfg.redetect_beta_factor;
      est.box = BBox::from_center(cur_set.candidates[j].position, target_w, target_h);
    }
  }

  if (TrackedObject* t = find_target(db); t && est.beta >= cfg.memory_beta) {
    t->appearance_high = t->last_candidate.feat_high;
    t->appearance_low = t->last_candidate.feat_low;
  }
  db.target_box = est.box;
  db.target_confidence = est.beta;
  return est;
}

TrackOutput run_sequence(const SimSequence& seq, const MatcherParams& params, const TrackerConfig& cfg) {
  if (seq.size() == 0 || seq.score_maps.size() != seq.size() || seq.features.size() != seq.size()) {
    throw InputError("run_sequence: malformed sequence data for " + seq.groundtruth.name);
  }
  const auto& first = seq.groundtruth.frames.front();
  if (!first.box) throw InputError("run_sequence: first frame of " + seq.groundtruth.name + " is absent");
  const auto scale_at = [&](std::size_t t) { return t < seq.scale_factors.size() ? seq.scale_factors[t] : 1.0; };

  TrackOutput out;
  out.boxes.reserve(seq.size());
  out.betas.reserve(seq.size());

  const auto first_set =
      extract_candidates(seq.score_maps[0], seq.features[0], seq.image_width, seq.image_height, cfg);
  ObjectDatabase db = init(*first.box, first_set, cfg, seq.score_maps[0].stride);
  out.boxes.push_back(*first.box);
  out.betas.push_back(1.0);

  for (std::size_t t = 1; t < seq.size(); ++t) {
    const auto cur =
        extract_candidates(seq.score_maps[t], seq.features[t], seq.image_width, seq.image_height, cfg);
    const CandidateSet prev = db.current;
    const auto assignment = match(params, prev, cur, cfg.mode);
    const auto matches = decode_matches(assignment, params.config.tau_match);
    associate(db, matches, prev, cur, t, cfg);
    const double s = scale_at(t);
    const auto est = select_target(db, cur, first.box->w * s, first.box->h * s, cfg);
    out.boxes.push_back(est.box);
    out.betas.push_back(est.beta);
  }
  return out;
}

std::vector<TrainingPair> training_pairs(const SimSequence& seq, const TrackerConfig& cfg) {
  std::vector<TrainingPair> pairs;
  if (seq.size() < 2) return pairs;
  std::vector<CandidateSet> sets;
  sets.reserve(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    sets.push_back(extract_candidates(seq.score_maps[t], seq.features[t], seq.image_width, seq.image_height, cfg));
  }
  const auto ids = [](const CandidateSet& s) {
    std::vector<long long> out;
    for (const auto& c : s.candidates) out.push_back(c.object_id);
    return out;
  };
  for (std::size_t t = 1; t < sets.size(); ++t) {
    TrainingPair p;
    p.prev = sets[t - 1];
    p.cur = sets[t];
    p.gt = match_by_identity(ids(p.prev), ids(p.cur));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void save_confidences(const std::filesystem::path& path, const std::vector<double>& betas) {
  std::string out;
  for (double b : betas) {
    out += text::format_double(b);
    out += '\n';
  }
  text::write_file_atomic(path, out);
}

std::vector<double> load_confidences(const std::filesystem::path& path) {
  std::vector<double> out;
  for (const auto& line : text::read_lines(path)) out.push_back(text::parse_double(line));
  return out;
}

}  // namespace sfot
