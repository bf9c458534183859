#include <benchmark/benchmark.h>

#include <random>

#include "sfot/matcher.hpp"
#include "sfot/metrics.hpp"
#include "sfot/sim.hpp"
#include "sfot/tracker.hpp"

using namespace sfot;

namespace {

CandidateSet random_set(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.0, 256.0);
  CandidateSet s;
  s.image_width = 256;
  s.image_height = 256;
  for (std::size_t i = 0; i < n; ++i) {
    Candidate c;
    c.position = {pos(rng), pos(rng)};
    c.score = 0.5;
    for (std::size_t k = 0; k < d; ++k) {
      c.feat_high.push_back(nd(rng));
      c.feat_low.push_back(nd(rng));
    }
    s.candidates.push_back(std::move(c));
  }
  return s;
}

}  // namespace

static void BM_Iou(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<BBox> boxes;
  for (int i = 0; i < 1024; ++i) boxes.push_back(BBox::make(u(rng), u(rng), 1 + u(rng), 1 + u(rng)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(iou(boxes[i & 1023], boxes[(i + 7) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Iou);

static void BM_Sinkhorn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nn::Rng rng(2);
  const auto s = nn::Tensor2::randn(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_assign(s, 1.0, 100));
}
BENCHMARK(BM_Sinkhorn)->Arg(4)->Arg(8)->Arg(16);

static void BM_MatcherForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto params = MatcherParams::create(MatcherConfig{}, 3);
  std::mt19937_64 rng(3);
  const auto prev = random_set(rng, n, params.config.width);
  const auto cur = random_set(rng, n, params.config.width);
  for (auto _ : state) benchmark::DoNotOptimize(match(params, prev, cur));
}
BENCHMARK(BM_MatcherForward)->Arg(4)->Arg(10)->Arg(16);

static void BM_TrackSequence(benchmark::State& state) {
  SimConfig cfg;
  cfg.num_frames = 100;
  const auto seq = gen_sequence(cfg, "bench");
  const auto params = MatcherParams::create(MatcherConfig{}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(run_sequence(seq, params, TrackerConfig{}));
}
BENCHMARK(BM_TrackSequence)->Unit(benchmark::kMillisecond);

static void BM_Evaluate(benchmark::State& state) {
  SimConfig cfg;
  cfg.num_frames = 300;
  cfg.num_distractors = 0;
  std::vector<Sequence> ds;
  std::map<std::string, std::vector<BBox>> results;
  for (int i = 0; i < 20; ++i) {
    cfg.seed = static_cast<std::uint64_t>(i);
    auto s = gen_sequence(cfg, "s" + std::to_string(i)).groundtruth;
    std::vector<BBox> boxes;
    for (const auto& f : s.frames) boxes.push_back(BBox::make(f.box->x + 2, f.box->y - 1, f.box->w, f.box->h));
    results[s.name] = boxes;
    ds.push_back(std::move(s));
  }
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(ds, results));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
