#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sfot/checkpoint.hpp"
#include "sfot/geometry.hpp"
#include "sfot/tinynet.hpp"

namespace sfot {

using nn::Tensor2;

/// A local maximum of the target score map. The appearance vectors are the
/// raw per-candidate features; the matcher's learned appearance projections
/// turn them into the high- and low-level cues.
struct Candidate {
  Point position;  // image pixels
  double score = 0.0;
  std::vector<double> feat_high;
  std::vector<double> feat_low;
  /// Identity label carried for training and diagnostics only; the matcher
  /// and the tracker never read it.
  long long object_id = -1;
};

struct CandidateSet {
  std::vector<Candidate> candidates;
  double image_width = 1.0;
  double image_height = 1.0;

  std::size_t size() const { return candidates.size(); }
  bool empty() const { return candidates.empty(); }
};

struct EncodedSet {
  Tensor2 codes_high;  // N x d
  Tensor2 codes_low;   // N x d
};

struct EmbeddingSet {
  Tensor2 emb_high;  // N x d
  Tensor2 emb_low;   // N x d
};

struct SimilarityPair {
  Tensor2 s_high;  // N' x N
  Tensor2 s_low;   // N' x N
  Tensor2 fused;   // omega * s_high + (1 - omega) * s_low
  double omega = 1.0;
};

/// (N'+1) x (N+1) soft correspondences; the last row and column are the
/// dustbins. Real rows and columns sum to one; the dustbin row sums to N and
/// the dustbin column to N'.
struct AssignmentMatrix {
  Tensor2 probs;

  std::size_t prev_count() const { return probs.rows() - 1; }
  std::size_t cur_count() const { return probs.cols() - 1; }
};

/// Correspondence decisions between a previous (rows) and current (columns)
/// candidate set. Used both for decoded matches and for ground truth.
struct MatchSet {
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::vector<std::size_t> prev_unmatched;
  std::vector<std::size_t> cur_unmatched;

  /// Cells of the augmented matrix addressed by these decisions.
  std::vector<nn::Cell> cells(std::size_t prev_count, std::size_t cur_count) const;
  /// Partner of each previous candidate, or cur_count for the dustbin.
  std::vector<std::size_t> prev_partner(std::size_t prev_count, std::size_t cur_count) const;
  /// Partner of each current candidate, or prev_count for the dustbin.
  std::vector<std::size_t> cur_partner(std::size_t prev_count, std::size_t cur_count) const;
};

/// Pairs candidates sharing an identity label; the rest go to the dustbins.
MatchSet match_by_identity(const std::vector<long long>& prev_ids, const std::vector<long long>& cur_ids);

struct MatcherConfig {
  std::size_t width = 32;  // d: feature, code and embedding width
  std::size_t layers = 4;  // alternating self / cross message passing
  std::size_t max_candidates = 16;
  double omega = 0.2;
  double tau_match = 0.2;
  std::size_t sinkhorn_iters = 100;
  std::size_t train_sinkhorn_iters = 50;
  double alpha_init = 1.0;
};

enum class MatchMode {
  fused,      // omega-weighted fusion of both branches
  high_only,  // high-level branch alone; the low branch is never evaluated
};

struct EmbeddingBranch {
  std::vector<nn::AttentionParams> layers;
  nn::LinearParams final_projection;
};

struct MatcherParams {
  MatcherConfig config;
  std::uint64_t seed = 0;
  nn::ParamStore store;
  nn::LinearParams appearance_high;
  nn::LinearParams appearance_low;
  nn::MlpParams psi_high;
  nn::MlpParams psi_low;
  EmbeddingBranch branch_high;
  EmbeddingBranch branch_low;
  nn::ParamId alpha;

  static MatcherParams create(const MatcherConfig& config, std::uint64_t seed);

  double dustbin_score() const { return store[alpha](0, 0); }
  nn::Checkpoint to_checkpoint() const;
  /// Rebuilds the architecture from the header and loads the weights;
  /// throws InputError when the tensor table does not match.
  static MatcherParams from_checkpoint(const nn::Checkpoint& ckpt);
};

EncodedSet encode(const CandidateSet& set, const MatcherParams& p);
std::pair<EmbeddingSet, EmbeddingSet> embed(const EncodedSet& prev, const EncodedSet& cur, const MatcherParams& p);
/// S_high and S_low by scalar product; fused is left empty.
SimilarityPair similarity(const EmbeddingSet& prev, const EmbeddingSet& cur);
Tensor2 fuse(const Tensor2& s_high, const Tensor2& s_low, double omega);
SimilarityPair fuse(SimilarityPair pair, double omega);

/// Log-domain entropic normalization of the dustbin-augmented score matrix.
AssignmentMatrix sinkhorn_assign(const Tensor2& fused, double alpha, std::size_t iters);
/// Same normalization on the augmented matrix directly (last row/column are
/// the dustbin scores).
AssignmentMatrix sinkhorn_normalize(const Tensor2& augmented, std::size_t iters);

/// A pair (i, j) is accepted when A[i][j] is the strict maximum of its row
/// and of its column (dustbins included) and at least tau_match.
MatchSet decode_matches(const AssignmentMatrix& a, double tau_match);

/// Mean of -log A over the ground-truth cells.
double nll_loss(const AssignmentMatrix& a, const MatchSet& gt);

/// Full forward pass for one frame pair.
AssignmentMatrix match(const MatcherParams& p, const CandidateSet& prev, const CandidateSet& cur,
                       MatchMode mode = MatchMode::fused);

namespace matcher_graph {
/// Records the forward pass on g and returns log A.
nn::Var log_assignment(nn::Graph& g, const nn::Binding& b, const MatcherParams& p, const CandidateSet& prev,
                       const CandidateSet& cur, std::size_t sinkhorn_iters, MatchMode mode);
/// Mean NLL of the ground-truth cells for one pair; records on g.
nn::Var pair_loss(nn::Graph& g, const nn::Binding& b, const MatcherParams& p, const CandidateSet& prev,
                  const CandidateSet& cur, const MatchSet& gt, std::size_t sinkhorn_iters, MatchMode mode);
}  // namespace matcher_graph

struct TrainingPair {
  CandidateSet prev;
  CandidateSet cur;
  MatchSet gt;
};

struct TrainConfig {
  std::size_t steps = 600;
  std::size_t batch_size = 8;
  nn::AdamConfig adam{2e-3, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;
  MatchMode mode = MatchMode::fused;
};

struct TrainResult {
  MatcherParams params;
  std::vector<double> loss_history;  // mean batch loss per step
};

/// Minimizes the mean assignment NLL with Adam. Deterministic in the seed.
TrainResult train_matcher(const std::vector<TrainingPair>& pairs, const MatcherConfig& config,
                          const TrainConfig& train);
/// Continues training from existing parameters.
TrainResult train_matcher(const std::vector<TrainingPair>& pairs, MatcherParams init, const TrainConfig& train);

struct AssociationScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0; }
};

/// Counts per-candidate correspondence decisions (both frames, dustbin
/// included) that agree with the ground truth.
AssociationScore association_accuracy(const MatcherParams& p, const std::vector<TrainingPair>& pairs,
                                       MatchMode mode = MatchMode::fused);

}  // namespace sfot
