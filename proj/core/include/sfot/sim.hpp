#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfot/dataset.hpp"
#include "sfot/frame_data.hpp"
#include "sfot/matcher.hpp"

namespace sfot {

struct SimConfig {
  std::size_t num_frames = 100;
  double image_size = 256.0;   // square image side, pixels
  double target_size = 10.0;   // box side, pixels
  double speed = 1.0;          // displacement per frame as a fraction of target_size
  std::size_t num_distractors = 3;
  double distractor_spawn_rate = 0.02;  // per-frame vanish / reappear probability
  double occlusion_probability = 0.0;   // per-frame chance an occlusion starts
  double noise_sigma = 0.02;            // score-map noise
  std::size_t feature_width = 32;
  std::size_t high_feature_cluster_count = 1;
  std::uint64_t seed = 0;

  double stride = 4.0;              // pixels per score-map cell
  double direction_jitter = 0.3;    // radians, per frame
  double feature_noise = 0.05;      // per-component observation noise
  double cluster_spread = 0.05;     // per-component perturbation around a cluster center
  std::size_t max_occlusion_length = 3;
  std::string category = "synthetic";
  double frame_rate = 30.0;

  /// Throws InputError when a field is out of range.
  void validate() const;
};

struct SimSequence {
  SimConfig config;
  Sequence groundtruth;
  std::vector<ScoreMap> score_maps;
  std::vector<FrameFeatures> features;
  /// Per-frame target extent relative to the first frame.
  std::vector<double> scale_factors;
  double image_width = 0.0;
  double image_height = 0.0;

  std::size_t size() const { return groundtruth.size(); }
};

SimSequence gen_sequence(const SimConfig& cfg, const std::string& name = "sim");

/// Ground-truth correspondences between the records of frames t and t+1
/// (1-based t, 1 <= t < num_frames).
MatchSet correspondences(const SimSequence& seq, std::size_t t);

/// Writes count sequence bundles plus sim sidecars under root. Each
/// sequence's seed is derived from (seed, "simulate", name).
std::vector<std::string> gen_dataset(const SimConfig& base, std::size_t count, std::uint64_t seed,
                                     const std::filesystem::path& root, std::size_t jobs = 1);

/// Bundle + sidecars for one sequence.
void save_sim_sequence(const SimSequence& seq, const std::filesystem::path& dir);
SimSequence load_sim_sequence(const std::filesystem::path& dir);
bool has_sim_sidecars(const std::filesystem::path& dir);
/// Every sequence directory under root, sorted by name.
std::vector<SimSequence> load_sim_dataset(const std::filesystem::path& root);

std::string serialize_score_maps(const std::vector<ScoreMap>& maps);
std::vector<ScoreMap> parse_score_maps(const std::string& bytes);
std::string serialize_features(const std::vector<FrameFeatures>& frames);
std::vector<FrameFeatures> parse_features(const std::string& text);

std::string sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const std::string& text);

}  // namespace sfot
