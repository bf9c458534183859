#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sfot/error.hpp"
#include "sfot/tracker.hpp"

using namespace sfot;

namespace {

ScoreMap blank_map(std::size_t cells = 30, double stride = 4.0) { return ScoreMap(cells, cells, stride); }

void add_bump(ScoreMap& m, std::size_t r0, std::size_t c0, double height, double sigma_cells = 1.5) {
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      const double dr = static_cast<double>(r) - static_cast<double>(r0);
      const double dc = static_cast<double>(c) - static_cast<double>(c0);
      m.at(r, c) += height * std::exp(-(dr * dr + dc * dc) / (2 * sigma_cells * sigma_cells));
    }
  }
}

FeatureRecord record_at(Point p, long long id, double v) {
  FeatureRecord r;
  r.pos = p;
  r.object_id = id;
  r.score = 1.0;
  r.feat_high = {v, 0, 0};
  r.feat_low = {0, v, 0};
  return r;
}

Candidate cand(double x, double y, double score, double f = 0.0) {
  Candidate c;
  c.position = {x, y};
  c.score = score;
  c.feat_high = {f, 0, 0};
  c.feat_low = {0, f, 0};
  return c;
}

CandidateSet set_of(std::vector<Candidate> cs) {
  CandidateSet s;
  s.candidates = std::move(cs);
  s.image_width = 120;
  s.image_height = 120;
  return s;
}

MatchSet one_match(std::size_t i, std::size_t j, std::size_t np, std::size_t nc) {
  MatchSet m;
  m.matches = {{i, j}};
  for (std::size_t k = 0; k < np; ++k) {
    if (k != i) m.prev_unmatched.push_back(k);
  }
  for (std::size_t k = 0; k < nc; ++k) {
    if (k != j) m.cur_unmatched.push_back(k);
  }
  return m;
}

MatchSet no_matches(std::size_t np, std::size_t nc) {
  MatchSet m;
  for (std::size_t k = 0; k < np; ++k) m.prev_unmatched.push_back(k);
  for (std::size_t k = 0; k < nc; ++k) m.cur_unmatched.push_back(k);
  return m;
}

std::size_t target_count(const ObjectDatabase& db) {
  std::size_t n = 0;
  for (const auto& [id, o] : db.objects) n += o.is_target ? 1 : 0;
  return n;
}

}  // namespace

TEST(ExtractCandidates, SingleBump) {
  auto m = blank_map();
  add_bump(m, 7, 19, 0.9);
  const Point peak = m.cell_center(7, 19);
  const auto set = extract_candidates(m, {record_at({peak.x + 1, peak.y - 2}, 3, 0.5)}, 120, 120, TrackerConfig{});
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.candidates[0].position, peak);
  EXPECT_NEAR(set.candidates[0].score, 0.9, 1e-12);
  EXPECT_EQ(set.candidates[0].object_id, 3);
  EXPECT_EQ(set.candidates[0].feat_high, (std::vector<double>{0.5, 0, 0}));
  EXPECT_EQ(set.image_width, 120.0);
}

TEST(ExtractCandidates, AllBelowThresholdIsEmpty) {
  auto m = blank_map();
  std::fill(m.values.begin(), m.values.end(), 0.05);
  m.at(3, 3) = 0.09;
  EXPECT_EQ(candidate_threshold(m, TrackerConfig{}), 0.1);
  EXPECT_TRUE(extract_candidates(m, {}, 120, 120, TrackerConfig{}).empty());
  EXPECT_TRUE(extract_candidates(blank_map(), {}, 120, 120, TrackerConfig{}).empty());
}

TEST(ExtractCandidates, TwoBumpsTenCellsApart) {
  auto m = blank_map();
  add_bump(m, 10, 5, 0.6);
  add_bump(m, 10, 15, 0.95);
  const auto set = extract_candidates(m, {}, 120, 120, TrackerConfig{});
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.candidates[0].position, m.cell_center(10, 15));
  EXPECT_EQ(set.candidates[1].position, m.cell_center(10, 5));
  // Without a nearby record the appearance is zero and the label unknown.
  EXPECT_EQ(set.candidates[0].object_id, -1);
}

TEST(ExtractCandidates, RelativeThresholdAndNms) {
  auto m = blank_map();
  add_bump(m, 5, 5, 40.0);
  add_bump(m, 20, 20, 1.5);  // below 5% of 40
  add_bump(m, 5, 25, 2.5);   // above 5% of 40
  EXPECT_DOUBLE_EQ(candidate_threshold(m, TrackerConfig{}), 2.0);
  const auto set = extract_candidates(m, {}, 120, 120, TrackerConfig{});
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.candidates[0].score, 1.0);  // clamped into [0, 1]
  // A shoulder two cells from a stronger peak is suppressed by the 5x5 window.
  auto n = blank_map();
  n.at(10, 10) = 0.9;
  n.at(10, 12) = 0.8;
  n.at(10, 13) = 0.7;
  const auto s2 = extract_candidates(n, {}, 120, 120, TrackerConfig{});
  ASSERT_EQ(s2.size(), 1u);
  EXPECT_EQ(s2.candidates[0].position, n.cell_center(10, 10));
}

TEST(ExtractCandidates, PlateauKeepsFirstCellAndCapApplies) {
  auto m = blank_map();
  m.at(4, 4) = 0.5;
  m.at(4, 5) = 0.5;
  auto set = extract_candidates(m, {}, 120, 120, TrackerConfig{});
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.candidates[0].position, m.cell_center(4, 4));

  auto many = blank_map(60);
  double h = 0.3;
  for (std::size_t r = 2; r < 60; r += 6) {
    for (std::size_t c = 2; c < 60; c += 6) many.at(r, c) = (h += 0.001);
  }
  TrackerConfig cfg;
  set = extract_candidates(many, {}, 240, 240, cfg);
  ASSERT_EQ(set.size(), cfg.max_candidates);
  for (std::size_t i = 1; i < set.size(); ++i) EXPECT_GE(set.candidates[i - 1].score, set.candidates[i].score);
  EXPECT_NEAR(set.candidates[0].score, h, 1e-12);
}

TEST(ExtractCandidates, FeatureLookupRadius) {
  auto m = blank_map();
  add_bump(m, 10, 10, 0.8);
  const Point c = m.cell_center(10, 10);
  // Nearest record within 2 cells wins; a record 3 cells away is ignored.
  auto set = extract_candidates(m, {record_at({c.x + 12, c.y}, 1, 1.0), record_at({c.x + 5, c.y}, 2, 2.0)}, 120, 120,
                                TrackerConfig{});
  EXPECT_EQ(set.candidates[0].object_id, 2);
  set = extract_candidates(m, {record_at({c.x + 12, c.y}, 1, 1.0)}, 120, 120, TrackerConfig{});
  EXPECT_EQ(set.candidates[0].object_id, -1);
  EXPECT_EQ(set.candidates[0].feat_high, (std::vector<double>{0, 0, 0}));
}

TEST(ExtractCandidates, RejectsInvalidMap) {
  auto m = blank_map();
  m.at(1, 1) = NAN;
  EXPECT_THROW(extract_candidates(m, {}, 120, 120, TrackerConfig{}), InputError);
  auto bad_stride = blank_map(4, 0.0);
  EXPECT_THROW(extract_candidates(bad_stride, {}, 16, 16, TrackerConfig{}), InputError);
}

TEST(Init, SeedsTargetFromGroundTruth) {
  const auto gt = BBox::make(36, 36, 10, 10);
  const auto set = set_of({cand(80, 80, 0.9, 1), cand(42, 40, 0.8, 2), cand(10, 10, 0.1, 3)});
  const auto db = init(gt, set, TrackerConfig{}, 4.0);
  EXPECT_EQ(db.target_box, gt);
  EXPECT_EQ(db.target_confidence, 1.0);
  ASSERT_EQ(target_count(db), 1u);
  EXPECT_EQ(db.target()->last_candidate.position, (Point{42, 40}));
  EXPECT_EQ(db.objects.size(), 2u);  // the weak third candidate is not registered

  const auto again = init(gt, set, TrackerConfig{}, 4.0);
  EXPECT_EQ(again.objects.size(), db.objects.size());
  EXPECT_EQ(again.target_id(), db.target_id());
  EXPECT_EQ(again.next_id, db.next_id);
}

TEST(Init, CandidateFreeFrameStillSucceeds) {
  const auto gt = BBox::make(10, 20, 6, 8);
  const auto db = init(gt, set_of({}), TrackerConfig{}, 4.0);
  ASSERT_NE(db.target(), nullptr);
  EXPECT_EQ(db.target()->last_candidate.position, center(gt));
  EXPECT_EQ(db.current.size(), 1u);
  EXPECT_THROW(init(BBox{0, 0, 0, 1}, set_of({}), TrackerConfig{}), InputError);
}

TEST(Associate, MatchedObjectKeepsId) {
  auto db = init(BBox::make(45, 45, 10, 10), set_of({cand(50, 50, 0.9)}), TrackerConfig{});
  const auto id = *db.target_id();
  const auto prev = db.current;
  const auto cur = set_of({cand(57, 51, 0.85)});
  associate(db, one_match(0, 0, 1, 1), prev, cur, 1, TrackerConfig{});
  ASSERT_EQ(db.objects.size(), 1u);
  EXPECT_EQ(db.target_id(), id);
  EXPECT_EQ(db.target()->last_candidate.position, (Point{57, 51}));
  EXPECT_EQ(db.target()->last_seen_frame, 1u);
  EXPECT_TRUE(db.target_matched);
}

TEST(Associate, UnmatchedObjectDroppedAndNewOneCreated) {
  auto db = init(BBox::make(45, 45, 10, 10), set_of({cand(50, 50, 0.9)}), TrackerConfig{});
  const auto old_id = *db.target_id();
  const auto prev = db.current;
  const auto cur = set_of({cand(100, 20, 0.7), cand(10, 100, 0.2)});
  associate(db, no_matches(1, 2), prev, cur, 1, TrackerConfig{});
  ASSERT_EQ(db.objects.size(), 1u);
  EXPECT_EQ(db.objects.count(old_id), 0u);
  EXPECT_GT(db.objects.begin()->first, old_id);
  EXPECT_EQ(db.objects.begin()->second.last_candidate.position, (Point{100, 20}));
  EXPECT_FALSE(db.target_matched);
  EXPECT_THROW(associate(db, one_match(5, 0, 6, 2), cur, cur, 2, TrackerConfig{}), InputError);
}

TEST(Associate, IdsNeverReused) {
  auto db = init(BBox::make(45, 45, 10, 10), set_of({cand(50, 50, 0.9)}), TrackerConfig{});
  long long last_next = db.next_id;
  for (std::size_t t = 1; t < 20; ++t) {
    const auto prev = db.current;
    const auto cur = set_of({cand(10.0 * t, 5, 0.9), cand(5, 10.0 * t, 0.9)});
    associate(db, t % 3 ? one_match(0, 0, prev.size(), 2) : no_matches(prev.size(), 2), prev, cur, t, TrackerConfig{});
    EXPECT_GE(db.next_id, last_next);
    for (const auto& [id, o] : db.objects) EXPECT_LT(id, db.next_id);
    last_next = db.next_id;
    select_target(db, cur, 10, 10, TrackerConfig{});
    EXPECT_LE(target_count(db), 1u);
  }
}

TEST(SelectTarget, MatchedTargetUsesItsScore) {
  auto db = init(BBox::make(45, 45, 10, 10), set_of({cand(50, 50, 0.95)}), TrackerConfig{});
  const auto prev = db.current;
  const auto cur = set_of({cand(60, 52, 0.9, 5.0)});
  associate(db, one_match(0, 0, 1, 1), prev, cur, 1, TrackerConfig{});
  const auto est = select_target(db, cur, 10, 10, TrackerConfig{});
  EXPECT_EQ(est.beta, 0.9);
  EXPECT_EQ(est.box, BBox::from_center({60, 52}, 10, 10));
  EXPECT_EQ(db.target_confidence, 0.9);
  EXPECT_EQ(db.target()->appearance_high[0], 5.0);
}

TEST(SelectTarget, LowConfidenceFreezesAppearance) {
  auto db = init(BBox::make(45, 45, 10, 10), set_of({cand(50, 50, 0.95, 1.0)}), TrackerConfig{});
  const auto prev = db.current;
  const auto cur = set_of({cand(55, 50, 0.3, 9.0)});
  associate(db, one_match(0, 0, 1, 1), prev, cur, 1, TrackerConfig{});
  const auto est = select_target(db, cur, 10, 10, TrackerConfig{});
  EXPECT_EQ(est.beta, 0.3);
  EXPECT_EQ(db.target()->appearance_high[0], 1.0);
  EXPECT_EQ(db.target()->last_candidate.feat_high[0], 9.0);
}

TEST(SelectTarget, EmptySetRepeatsLastBox) {
  const auto gt = BBox::make(45, 45, 10, 10);
  auto db = init(gt, set_of({cand(50, 50, 0.9)}), TrackerConfig{});
  const auto prev = db.current;
  const auto cur = set_of({});
  associate(db, no_matches(1, 0), prev, cur, 1, TrackerConfig{});
  const auto est = select_target(db, cur, 10, 10, TrackerConfig{});
  EXPECT_EQ(est.beta, 0.0);
  EXPECT_EQ(est.box, gt);
  EXPECT_EQ(target_count(db), 0u);
}

TEST(SelectTarget, AmbiguousRedetectionRefused) {
  const auto gt = BBox::make(45, 45, 10, 10);
  auto db = init(gt, set_of({cand(50, 50, 0.9)}), TrackerConfig{});
  const auto prev = db.current;
  const auto cur = set_of({cand(10, 10, 0.8), cand(100, 100, 0.78)});
  associate(db, no_matches(1, 2), prev, cur, 1, TrackerConfig{});
  const auto est = select_target(db, cur, 10, 10, TrackerConfig{});
  EXPECT_EQ(est.beta, 0.0);
  EXPECT_EQ(est.box, gt);
  EXPECT_EQ(target_count(db), 0u);
}

TEST(SelectTarget, ClearRedetectionHalvesScore) {
  auto db = init(BBox::make(45, 45, 10, 10), set_of({cand(50, 50, 0.9)}), TrackerConfig{});
  const auto prev = db.current;
  const auto cur = set_of({cand(10, 10, 0.8), cand(100, 100, 0.7)});
  associate(db, no_matches(1, 2), prev, cur, 1, TrackerConfig{});
  const auto est = select_target(db, cur, 10, 10, TrackerConfig{});
  EXPECT_DOUBLE_EQ(est.beta, 0.4);
  EXPECT_EQ(est.box, BBox::from_center({10, 10}, 10, 10));
  ASSERT_EQ(target_count(db), 1u);
  EXPECT_EQ(db.target()->last_candidate.position, (Point{10, 10}));

  // Below tau_redetect nothing is picked up.
  auto db2 = init(BBox::make(45, 45, 10, 10), set_of({cand(50, 50, 0.9)}), TrackerConfig{});
  const auto weak = set_of({cand(10, 10, 0.2)});
  associate(db2, no_matches(1, 1), db2.current, weak, 1, TrackerConfig{});
  EXPECT_EQ(select_target(db2, weak, 10, 10, TrackerConfig{}).beta, 0.0);
}

namespace {

SimConfig clean_config() {
  SimConfig c;
  c.num_frames = 40;
  c.image_size = 128;
  c.num_distractors = 0;
  c.noise_sigma = 0.0;
  c.speed = 0.8;
  return c;
}

MatcherParams quick_matcher(const std::vector<SimSequence>& seqs, double omega = 0.2) {
  std::vector<TrainingPair> pairs;
  for (const auto& s : seqs) {
    auto p = training_pairs(s, TrackerConfig{});
    pairs.insert(pairs.end(), p.begin(), p.end());
  }
  MatcherConfig mc;
  mc.omega = omega;
  mc.width = seqs.front().config.feature_width;
  TrainConfig tc;
  tc.steps = 60;
  tc.seed = 4;
  return train_matcher(pairs, mc, tc).params;
}

}  // namespace

TEST(RunSequence, CleanSequenceStaysOnTarget) {
  auto cfg = clean_config();
  cfg.seed = 21;
  const auto seq = gen_sequence(cfg, "clean");
  const auto params = quick_matcher({seq});
  const auto out = run_sequence(seq, params, TrackerConfig{});
  ASSERT_EQ(out.boxes.size(), seq.size());
  EXPECT_EQ(out.boxes[0], *seq.groundtruth.frames[0].box);
  EXPECT_EQ(out.betas[0], 1.0);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    EXPECT_LE(center_error(out.boxes[t], *seq.groundtruth.frames[t].box), cfg.stride) << t;
    EXPECT_EQ(out.boxes[t].w, cfg.target_size);
  }
}

TEST(RunSequence, SingleFrameAndDeterminism) {
  auto cfg = clean_config();
  cfg.num_frames = 1;
  const auto one = gen_sequence(cfg, "one");
  const auto params = MatcherParams::create(MatcherConfig{}, 1);
  const auto out = run_sequence(one, params, TrackerConfig{});
  ASSERT_EQ(out.boxes.size(), 1u);
  EXPECT_EQ(out.boxes[0], *one.groundtruth.frames[0].box);

  SimConfig busy;
  busy.num_frames = 50;
  busy.num_distractors = 4;
  busy.seed = 5;
  busy.occlusion_probability = 0.05;
  const auto seq = gen_sequence(busy, "busy");
  const auto a = run_sequence(seq, params, TrackerConfig{});
  const auto b = run_sequence(seq, params, TrackerConfig{});
  EXPECT_EQ(a.boxes, b.boxes);
  EXPECT_EQ(a.betas, b.betas);
  for (double beta : a.betas) {
    EXPECT_GE(beta, 0.0);
    EXPECT_LE(beta, 1.0);
  }
}

TEST(RunSequence, OmegaOneMatchesHighOnlyTracker) {
  SimConfig busy;
  busy.num_frames = 60;
  busy.num_distractors = 3;
  busy.high_feature_cluster_count = 1;
  std::vector<SimSequence> seqs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    busy.seed = 100 + s;
    seqs.push_back(gen_sequence(busy, "s" + std::to_string(s)));
  }
  const auto params = quick_matcher(seqs, 1.0);
  TrackerConfig fused;
  TrackerConfig high;
  high.mode = MatchMode::high_only;
  for (const auto& s : seqs) {
    const auto a = run_sequence(s, params, fused);
    const auto b = run_sequence(s, params, high);
    EXPECT_EQ(a.boxes, b.boxes);
    EXPECT_EQ(a.betas, b.betas);
  }
}

TEST(RunSequence, MalformedInputRejected) {
  auto seq = gen_sequence(clean_config(), "x");
  seq.score_maps.pop_back();
  EXPECT_THROW(run_sequence(seq, MatcherParams::create(MatcherConfig{}, 1), TrackerConfig{}), InputError);
}

TEST(TrainingPairs, LabelsFollowIdentities) {
  SimConfig c;
  c.num_frames = 30;
  c.num_distractors = 3;
  c.distractor_spawn_rate = 0.2;
  c.seed = 8;
  const auto seq = gen_sequence(c, "p");
  const auto pairs = training_pairs(seq, TrackerConfig{});
  ASSERT_EQ(pairs.size(), seq.size() - 1);
  for (const auto& p : pairs) {
    for (const auto& [i, j] : p.gt.matches) {
      EXPECT_EQ(p.prev.candidates[i].object_id, p.cur.candidates[j].object_id);
      EXPECT_GE(p.prev.candidates[i].object_id, 0);
    }
    EXPECT_EQ(p.gt.cells(p.prev.size(), p.cur.size()).size(),
              p.gt.matches.size() + p.gt.prev_unmatched.size() + p.gt.cur_unmatched.size());
  }
}

TEST(Confidences, RoundTrip) {
  sfot::testing::TempDir tmp("beta");
  const std::vector<double> betas = {1.0, 0.45, 0.0, 1.0 / 3.0};
  save_confidences(tmp / "b.txt", betas);
  EXPECT_EQ(load_confidences(tmp / "b.txt"), betas);
}
