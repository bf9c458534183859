#include "sfot/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "sfot/error.hpp"

namespace sfot {

using nn::Binding;
using nn::Graph;
using nn::Var;

// ---------------------------------------------------------------------------
// MatchSet

std::vector<nn::Cell> MatchSet::cells(std::size_t prev_count, std::size_t cur_count) const {
  std::vector<nn::Cell> out;
  for (const auto& [i, j] : matches) {
    if (i >= prev_count || j >= cur_count) throw InputError("match index out of range");
    out.push_back({i, j});
  }
  for (auto i : prev_unmatched) {
    if (i >= prev_count) throw InputError("unmatched previous index out of range");
    out.push_back({i, cur_count});
  }
  for (auto j : cur_unmatched) {
    if (j >= cur_count) throw InputError("unmatched current index out of range");
    out.push_back({prev_count, j});
  }
  return out;
}

std::vector<std::size_t> MatchSet::prev_partner(std::size_t prev_count, std::size_t cur_count) const {
  std::vector<std::size_t> partner(prev_count, cur_count);
  for (const auto& [i, j] : matches) {
    if (i >= prev_count || j >= cur_count) throw InputError("match index out of range");
    partner[i] = j;
  }
  return partner;
}

std::vector<std::size_t> MatchSet::cur_partner(std::size_t prev_count, std::size_t cur_count) const {
  std::vector<std::size_t> partner(cur_count, prev_count);
  for (const auto& [i, j] : matches) {
    if (i >= prev_count || j >= cur_count) throw InputError("match index out of range");
    partner[j] = i;
  }
  return partner;
}

MatchSet match_by_identity(const std::vector<long long>& prev_ids, const std::vector<long long>& cur_ids) {
  MatchSet m;
  std::vector<bool> cur_taken(cur_ids.size(), false);
  for (std::size_t i = 0; i < prev_ids.size(); ++i) {
    bool found = false;
    if (prev_ids[i] >= 0) {
      for (std::size_t j = 0; j < cur_ids.size(); ++j) {
        if (!cur_taken[j] && cur_ids[j] == prev_ids[i]) {
          m.matches.emplace_back(i, j);
          cur_taken[j] = true;
          found = true;
          break;
        }
      }
    }
    if (!found) m.prev_unmatched.push_back(i);
  }
  for (std::size_t j = 0; j < cur_ids.size(); ++j) {
    if (!cur_taken[j]) m.cur_unmatched.push_back(j);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Parameters

MatcherParams MatcherParams::create(const MatcherConfig& config, std::uint64_t seed) {
  if (config.width == 0) throw InputError("matcher width must be positive");
  MatcherParams p;
  p.config = config;
  p.seed = seed;
  nn::Rng rng(seed);
  const auto d = config.width;
  p.appearance_high = nn::LinearParams::create(p.store, "appearance_high", d, d, rng);
  p.appearance_low = nn::LinearParams::create(p.store, "appearance_low", d, d, rng);
  p.psi_high = nn::MlpParams::create(p.store, "psi_high", {3, d, d}, rng);
  p.psi_low = nn::MlpParams::create(p.store, "psi_low", {3, d, d}, rng);
  for (auto* branch : {&p.branch_high, &p.branch_low}) {
    const std::string prefix = branch == &p.branch_high ? "embed_high" : "embed_low";
    for (std::size_t l = 0; l < config.layers; ++l) {
      branch->layers.push_back(nn::AttentionParams::create(p.store, prefix + ".layer" + std::to_string(l), d, rng));
    }
    branch->final_projection = nn::LinearParams::create(p.store, prefix + ".final", d, d, rng);
  }
  p.alpha = p.store.add("dustbin_score", Tensor2(1, 1, config.alpha_init));
  return p;
}

nn::Checkpoint MatcherParams::to_checkpoint() const {
  nlohmann::json meta;
  meta["architecture"] = "sfot-matcher";
  meta["width"] = config.width;
  meta["layers"] = config.layers;
  meta["max_candidates"] = config.max_candidates;
  meta["omega"] = config.omega;
  meta["tau_match"] = config.tau_match;
  meta["sinkhorn_iters"] = config.sinkhorn_iters;
  meta["train_sinkhorn_iters"] = config.train_sinkhorn_iters;
  meta["alpha_init"] = config.alpha_init;
  meta["seed"] = seed;
  return {meta.dump(), store};
}

MatcherParams MatcherParams::from_checkpoint(const nn::Checkpoint& ckpt) {
  nlohmann::json meta;
  MatcherConfig cfg;
  std::uint64_t seed = 0;
  try {
    meta = nlohmann::json::parse(ckpt.metadata_json);
    if (meta.at("architecture").get<std::string>() != "sfot-matcher") {
      throw InputError("checkpoint is not a matcher checkpoint");
    }
    cfg.width = meta.at("width").get<std::size_t>();
    cfg.layers = meta.at("layers").get<std::size_t>();
    cfg.max_candidates = meta.at("max_candidates").get<std::size_t>();
    cfg.omega = meta.at("omega").get<double>();
    cfg.tau_match = meta.at("tau_match").get<double>();
    cfg.sinkhorn_iters = meta.at("sinkhorn_iters").get<std::size_t>();
    cfg.train_sinkhorn_iters = meta.at("train_sinkhorn_iters").get<std::size_t>();
    cfg.alpha_init = meta.at("alpha_init").get<double>();
    seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("matcher checkpoint header: ") + e.what());
  }
  MatcherParams p = create(cfg, seed);
  if (p.store.size() != ckpt.params.size()) throw InputError("checkpoint tensor count does not match the architecture");
  for (std::size_t i = 0; i < p.store.size(); ++i) {
    if (p.store.name(i) != ckpt.params.name(i) || !p.store.at(i).same_shape(ckpt.params.at(i))) {
      throw InputError("checkpoint tensor '" + ckpt.params.name(i) + "' does not match the architecture");
    }
    p.store.at(i) = ckpt.params.at(i);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Graph-level building blocks

namespace {

enum class Branch { high, low };

void check_features(const CandidateSet& set, std::size_t d) {
  for (const auto& c : set.candidates) {
    if (c.feat_high.size() != d || c.feat_low.size() != d) {
      throw InputError("candidate feature width does not match matcher width " + std::to_string(d));
    }
  }
}

Tensor2 feature_matrix(const CandidateSet& set, Branch branch, std::size_t d) {
  Tensor2 t(set.size(), d);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& f = branch == Branch::high ? set.candidates[i].feat_high : set.candidates[i].feat_low;
    std::copy(f.begin(), f.end(), t.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return t;
}

// (s_i, c_i) with positions normalized by the image size.
Tensor2 score_position_matrix(const CandidateSet& set) {
  Tensor2 t(set.size(), 3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& c = set.candidates[i];
    t(i, 0) = c.score;
    t(i, 1) = c.position.x / set.image_width;
    t(i, 2) = c.position.y / set.image_height;
  }
  return t;
}

Var encode_branch(Graph& g, const Binding& b, const MatcherParams& p, const CandidateSet& set, Branch branch) {
  const auto& appearance = branch == Branch::high ? p.appearance_high : p.appearance_low;
  const auto& psi = branch == Branch::high ? p.psi_high : p.psi_low;
  const Var raw = g.constant(feature_matrix(set, branch, p.config.width));
  const Var sc = g.constant(score_position_matrix(set));
  return nn::add(g, nn::linear_forward(g, b, appearance, raw), nn::mlp_forward(g, b, psi, sc));
}

// Even layers attend within a frame, odd layers across frames. Both frames
// share the branch weights; updates within a layer are simultaneous.
std::pair<Var, Var> embed_branch(Graph& g, const Binding& b, const EmbeddingBranch& branch, Var prev, Var cur) {
  const bool prev_empty = g.value(prev).rows() == 0;
  const bool cur_empty = g.value(cur).rows() == 0;
  for (std::size_t l = 0; l < branch.layers.size(); ++l) {
    const auto& attn = branch.layers[l];
    const bool self_layer = l % 2 == 0;
    Var next_prev = prev;
    Var next_cur = cur;
    if (!prev_empty && (self_layer || !cur_empty)) {
      next_prev = nn::add(g, prev, nn::attention_forward(g, b, attn, prev, self_layer ? prev : cur));
    }
    if (!cur_empty && (self_layer || !prev_empty)) {
      next_cur = nn::add(g, cur, nn::attention_forward(g, b, attn, cur, self_layer ? cur : prev));
    }
    prev = next_prev;
    cur = next_cur;
  }
  return {nn::linear_forward(g, b, branch.final_projection, prev), nn::linear_forward(g, b, branch.final_projection, cur)};
}

Var fuse_graph(Graph& g, Var s_high, Var s_low, double omega) {
  return nn::add(g, nn::scale(g, s_high, omega), nn::scale(g, s_low, 1.0 - omega));
}

void check_omega(double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw InputError("omega must lie in [0, 1]");
}

// Alternating log-domain row/column normalization. Row marginals are
// (1, ..., 1, N) and column marginals (1, ..., 1, N').
Var sinkhorn_graph(Graph& g, Var augmented, std::size_t iters) {
  const auto& z = g.value(augmented);
  const std::size_t rows = z.rows();
  const std::size_t cols = z.cols();
  const double prev_count = static_cast<double>(rows - 1);
  const double cur_count = static_cast<double>(cols - 1);
  Tensor2 log_mu(rows, 1, 0.0);
  log_mu(rows - 1, 0) = std::log(cur_count);
  Tensor2 log_nu(1, cols, 0.0);
  log_nu(0, cols - 1) = std::log(prev_count);
  const Var mu = g.constant(std::move(log_mu));
  const Var nu = g.constant(std::move(log_nu));

  Var u = g.constant(Tensor2(rows, 1));
  Var v = g.constant(Tensor2(1, cols));
  for (std::size_t it = 0; it < iters; ++it) {
    u = nn::sub(g, mu, nn::logsumexp_rows(g, nn::add_row(g, augmented, v)));
    v = nn::sub(g, nu, nn::logsumexp_cols(g, nn::add_col(g, augmented, u)));
  }
  return nn::add_row(g, nn::add_col(g, augmented, u), v);
}

// Assignment when one side has no candidates: everything on the other side
// goes to the dustbin.
Tensor2 degenerate_log_assignment(std::size_t prev_count, std::size_t cur_count) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Tensor2 t(prev_count + 1, cur_count + 1, neg_inf);
  for (std::size_t i = 0; i < prev_count; ++i) t(i, cur_count) = 0.0;
  for (std::size_t j = 0; j < cur_count; ++j) t(prev_count, j) = 0.0;
  return t;
}

Tensor2 exp_tensor(Tensor2 t) {
  for (auto& x : t.data()) x = std::exp(x);
  return t;
}

}  // namespace

namespace matcher_graph {

Var log_assignment(Graph& g, const Binding& b, const MatcherParams& p, const CandidateSet& prev,
                   const CandidateSet& cur, std::size_t sinkhorn_iters, MatchMode mode) {
  check_features(prev, p.config.width);
  check_features(cur, p.config.width);
  if (prev.empty() || cur.empty()) return g.constant(degenerate_log_assignment(prev.size(), cur.size()));

  const Var code_prev_high = encode_branch(g, b, p, prev, Branch::high);
  const Var code_cur_high = encode_branch(g, b, p, cur, Branch::high);
  const auto [h_prev, h_cur] = embed_branch(g, b, p.branch_high, code_prev_high, code_cur_high);
  Var fused = nn::matmul_nt(g, h_prev, h_cur);
  if (mode == MatchMode::fused) {
    check_omega(p.config.omega);
    const Var code_prev_low = encode_branch(g, b, p, prev, Branch::low);
    const Var code_cur_low = encode_branch(g, b, p, cur, Branch::low);
    const auto [l_prev, l_cur] = embed_branch(g, b, p.branch_low, code_prev_low, code_cur_low);
    fused = fuse_graph(g, fused, nn::matmul_nt(g, l_prev, l_cur), p.config.omega);
  }
  return sinkhorn_graph(g, nn::augment(g, fused, b[p.alpha]), sinkhorn_iters);
}

Var pair_loss(Graph& g, const Binding& b, const MatcherParams& p, const CandidateSet& prev, const CandidateSet& cur,
              const MatchSet& gt, std::size_t sinkhorn_iters, MatchMode mode) {
  const Var log_a = log_assignment(g, b, p, prev, cur, sinkhorn_iters, mode);
  return nn::neg_mean_at(g, log_a, gt.cells(prev.size(), cur.size()));
}

}  // namespace matcher_graph

// ---------------------------------------------------------------------------
// Stand-alone operations

EncodedSet encode(const CandidateSet& set, const MatcherParams& p) {
  check_features(set, p.config.width);
  Graph g;
  Binding b(g, p.store);
  EncodedSet out;
  out.codes_high = g.value(encode_branch(g, b, p, set, Branch::high));
  out.codes_low = g.value(encode_branch(g, b, p, set, Branch::low));
  return out;
}

std::pair<EmbeddingSet, EmbeddingSet> embed(const EncodedSet& prev, const EncodedSet& cur, const MatcherParams& p) {
  const auto d = p.config.width;
  for (const auto* t : {&prev.codes_high, &prev.codes_low, &cur.codes_high, &cur.codes_low}) {
    if (t->cols() != d && t->rows() != 0) throw InputError("embed: code width does not match matcher width");
  }
  Graph g;
  Binding b(g, p.store);
  const auto fix = [d](Tensor2 t) { return t.rows() == 0 ? Tensor2(0, d) : t; };
  const auto [hp, hc] = embed_branch(g, b, p.branch_high, g.constant(fix(prev.codes_high)), g.constant(fix(cur.codes_high)));
  const auto [lp, lc] = embed_branch(g, b, p.branch_low, g.constant(fix(prev.codes_low)), g.constant(fix(cur.codes_low)));
  return {EmbeddingSet{g.value(hp), g.value(lp)}, EmbeddingSet{g.value(hc), g.value(lc)}};
}

SimilarityPair similarity(const EmbeddingSet& prev, const EmbeddingSet& cur) {
  if (prev.emb_high.cols() != cur.emb_high.cols() || prev.emb_low.cols() != cur.emb_low.cols()) {
    throw InputError("similarity: embedding widths differ");
  }
  SimilarityPair s;
  s.s_high = matmul(prev.emb_high, transpose(cur.emb_high));
  s.s_low = matmul(prev.emb_low, transpose(cur.emb_low));
  return s;
}

Tensor2 fuse(const Tensor2& s_high, const Tensor2& s_low, double omega) {
  check_omega(omega);
  if (!s_high.same_shape(s_low)) throw InputError("fuse: similarity shapes differ");
  Tensor2 out(s_high.rows(), s_high.cols());
  const auto h = s_high.data();
  const auto l = s_low.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = omega * h[i] + (1.0 - omega) * l[i];
  return out;
}

SimilarityPair fuse(SimilarityPair pair, double omega) {
  pair.fused = fuse(pair.s_high, pair.s_low, omega);
  pair.omega = omega;
  return pair;
}

AssignmentMatrix sinkhorn_normalize(const Tensor2& augmented, std::size_t iters) {
  if (iters == 0) throw InputError("sinkhorn: at least one iteration required");
  if (!augmented.all_finite()) throw InputError("sinkhorn: non-finite score");
  if (augmented.rows() < 1 || augmented.cols() < 1) throw InputError("sinkhorn: empty augmented matrix");
  if (augmented.rows() == 1 || augmented.cols() == 1) {
    return {exp_tensor(degenerate_log_assignment(augmented.rows() - 1, augmented.cols() - 1))};
  }
  Graph g;
  return {exp_tensor(g.value(sinkhorn_graph(g, g.constant(augmented), iters)))};
}

AssignmentMatrix sinkhorn_assign(const Tensor2& fused, double alpha, std::size_t iters) {
  if (!std::isfinite(alpha)) throw InputError("sinkhorn: non-finite dustbin score");
  Tensor2 aug(fused.rows() + 1, fused.cols() + 1, alpha);
  for (std::size_t i = 0; i < fused.rows(); ++i) {
    for (std::size_t j = 0; j < fused.cols(); ++j) aug(i, j) = fused(i, j);
  }
  return sinkhorn_normalize(aug, iters);
}

MatchSet decode_matches(const AssignmentMatrix& a, double tau_match) {
  const auto& p = a.probs;
  const std::size_t np = a.prev_count();
  const std::size_t nc = a.cur_count();
  MatchSet out;
  std::vector<bool> cur_matched(nc, false);
  for (std::size_t i = 0; i < np; ++i) {
    bool matched = false;
    for (std::size_t j = 0; j < nc && !matched; ++j) {
      const double v = p(i, j);
      if (v < tau_match) continue;
      bool strict_max = true;
      for (std::size_t k = 0; k <= nc && strict_max; ++k) strict_max = k == j || p(i, k) < v;
      for (std::size_t k = 0; k <= np && strict_max; ++k) strict_max = k == i || p(k, j) < v;
      if (strict_max) {
        out.matches.emplace_back(i, j);
        cur_matched[j] = true;
        matched = true;
      }
    }
    if (!matched) out.prev_unmatched.push_back(i);
  }
  for (std::size_t j = 0; j < nc; ++j) {
    if (!cur_matched[j]) out.cur_unmatched.push_back(j);
  }
  return out;
}

double nll_loss(const AssignmentMatrix& a, const MatchSet& gt) {
  const auto cells = gt.cells(a.prev_count(), a.cur_count());
  if (cells.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : cells) s -= std::log(a.probs(c.row, c.col));
  return s / static_cast<double>(cells.size());
}

AssignmentMatrix match(const MatcherParams& p, const CandidateSet& prev, const CandidateSet& cur, MatchMode mode) {
  Graph g;
  Binding b(g, p.store);
  return {exp_tensor(g.value(matcher_graph::log_assignment(g, b, p, prev, cur, p.config.sinkhorn_iters, mode)))};
}

// ---------------------------------------------------------------------------
// Training

TrainResult train_matcher(const std::vector<TrainingPair>& pairs, MatcherParams init, const TrainConfig& train) {
  if (pairs.empty()) throw InputError("train_matcher: empty training set");
  if (train.batch_size == 0) throw InputError("train_matcher: batch size must be positive");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].prev.empty() && !pairs[i].cur.empty()) usable.push_back(i);
  }
  if (usable.empty()) throw InputError("train_matcher: no pair has candidates in both frames");

  TrainResult result{std::move(init), {}};
  auto& params = result.params;
  nn::AdamState state = nn::AdamState::for_store(params.store);
  nn::Rng rng(train.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
  const double inv_batch = 1.0 / static_cast<double>(train.batch_size);

  result.loss_history.reserve(train.steps);
  for (std::size_t step = 0; step < train.steps; ++step) {
    Graph g;
    Binding b(g, params.store);
    Var total = g.constant(Tensor2(1, 1, 0.0));
    for (std::size_t k = 0; k < train.batch_size; ++k) {
      const auto& pair = pairs[usable[pick(rng)]];
      total = nn::add(g, total,
                      matcher_graph::pair_loss(g, b, params, pair.prev, pair.cur, pair.gt,
                                               params.config.train_sinkhorn_iters, train.mode));
    }
    const Var loss = nn::scale(g, total, inv_batch);
    g.backward(loss);
    result.loss_history.push_back(g.value(loss)(0, 0));
    nn::adam_step(params.store, b.gradients(g), state, train.adam);
  }
  return result;
}

TrainResult train_matcher(const std::vector<TrainingPair>& pairs, const MatcherConfig& config,
                          const TrainConfig& train) {
  return train_matcher(pairs, MatcherParams::create(config, train.seed), train);
}

AssociationScore association_accuracy(const MatcherParams& p, const std::vector<TrainingPair>& pairs, MatchMode mode) {
  AssociationScore score;
  for (const auto& pair : pairs) {
    const auto np = pair.prev.size();
    const auto nc = pair.cur.size();
    const auto decoded = decode_matches(match(p, pair.prev, pair.cur, mode), p.config.tau_match);
    const auto got_prev = decoded.prev_partner(np, nc);
    const auto got_cur = decoded.cur_partner(np, nc);
    const auto want_prev = pair.gt.prev_partner(np, nc);
    const auto want_cur = pair.gt.cur_partner(np, nc);
    for (std::size_t i = 0; i < np; ++i) score.correct += got_prev[i] == want_prev[i] ? 1 : 0;
    for (std::size_t j = 0; j < nc; ++j) score.correct += got_cur[j] == want_cur[j] ? 1 : 0;
    score.total += np + nc;
  }
  return score;
}

}  // namespace sfot
