#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "sfot/frame_data.hpp"
#include "sfot/geometry.hpp"
#include "sfot/matcher.hpp"
#include "sfot/sim.hpp"

namespace sfot {

struct TrackerConfig {
  double tau_cand_fraction = 0.05;  // of the map maximum
  double tau_cand_floor = 0.1;      // absolute lower bound on the candidate threshold
  std::size_t nms_window = 5;       // cells, odd
  std::size_t max_candidates = 16;
  double feature_radius_cells = 2.0;  // feature lookup radius around a peak
  double tau_new = 0.25;
  double tau_redetect = 0.25;
  double redetect_margin = 0.05;
  double redetect_beta_factor = 0.5;
  double memory_beta = 0.5;  // below this the target's appearance record is frozen
  MatchMode mode = MatchMode::fused;
};

/// Local maxima of the map under window NMS with score >= the candidate
/// threshold, strongest first, capped at max_candidates. Each candidate takes
/// the appearance of the nearest feature record within the lookup radius.
CandidateSet extract_candidates(const ScoreMap& map, const FrameFeatures& features, double image_width,
                                double image_height, const TrackerConfig& cfg);

/// Threshold used by extract_candidates for this map.
double candidate_threshold(const ScoreMap& map, const TrackerConfig& cfg);

struct TrackedObject {
  long long id = 0;
  Candidate last_candidate;
  std::size_t candidate_index = 0;  // row in the database's current candidate set
  std::size_t last_seen_frame = 0;
  bool is_target = false;
  std::vector<double> appearance_high;
  std::vector<double> appearance_low;
};

struct ObjectDatabase {
  std::map<long long, TrackedObject> objects;
  long long next_id = 0;
  double target_confidence = 0.0;
  BBox target_box;
  /// Candidates of the latest frame; the previous set for the next match.
  CandidateSet current;
  bool target_matched = false;

  std::optional<long long> target_id() const;
  const TrackedObject* target() const;
};

/// Seeds the database from the first-frame box. The candidate closest to the
/// box center (within the lookup radius) becomes the target; if there is none
/// a synthetic candidate is added at the center.
ObjectDatabase init(const BBox& first_frame_gt, const CandidateSet& first_frame_candidates,
                    const TrackerConfig& cfg, double stride = 1.0);

/// Moves matched objects onto their new candidates, drops unmatched ones and
/// registers unclaimed current candidates scoring at least tau_new.
void associate(ObjectDatabase& db, const MatchSet& matches, const CandidateSet& prev_set,
               const CandidateSet& cur_set, std::size_t frame_index, const TrackerConfig& cfg);

struct TargetEstimate {
  BBox box;
  double beta = 0.0;
};

/// target_size is the (scaled) box extent reported around the chosen
/// candidate.
TargetEstimate select_target(ObjectDatabase& db, const CandidateSet& cur_set, double target_w, double target_h,
                             const TrackerConfig& cfg);

struct TrackOutput {
  std::vector<BBox> boxes;
  std::vector<double> betas;
};

/// One-pass tracking from the first-frame ground truth.
TrackOutput run_sequence(const SimSequence& seq, const MatcherParams& params, const TrackerConfig& cfg);

/// Frame pairs with identity-derived ground truth for matcher training,
/// using the same candidate extraction as the tracker.
std::vector<TrainingPair> training_pairs(const SimSequence& seq, const TrackerConfig& cfg);

void save_confidences(const std::filesystem::path& path, const std::vector<double>& betas);
std::vector<double> load_confidences(const std::filesystem::path& path);

}  // namespace sfot
