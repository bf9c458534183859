#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sfot/dataset.hpp"
#include "sfot/error.hpp"
#include "sfot/text_io.hpp"

using namespace sfot;
using sfot::testing::make_sequence;
using sfot::testing::TempDir;

namespace {

void write_bundle(const std::filesystem::path& dir, const std::string& meta, const std::string& gt,
                  const std::string& absence) {
  std::filesystem::create_directories(dir);
  text::write_file_atomic(dir / "meta.json", meta);
  text::write_file_atomic(dir / "groundtruth.txt", gt);
  text::write_file_atomic(dir / "absence.txt", absence);
}

const char* kMeta = R"({"name": "bird_1", "category": "bird", "frame_rate": 30, "manual_attributes": ["BC", "MB"]})";

std::vector<std::optional<BBox>> static_boxes(BBox b, std::size_t n) { return std::vector<std::optional<BBox>>(n, b); }

}  // namespace

TEST(DatasetLoad, WellFormedThreeFrameBundle) {
  TempDir tmp("ds");
  write_bundle(tmp / "b", kMeta, "1,2,3,4\nabsent\n5.5,6,7,8\n", "0\n2\n0\n");
  const auto s = load_sequence(tmp / "b");
  EXPECT_EQ(s.name, "bird_1");
  EXPECT_EQ(s.category, "bird");
  EXPECT_EQ(s.frame_rate, 30.0);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(*s.frames[0].box, BBox::make(1, 2, 3, 4));
  EXPECT_TRUE(s.frames[1].absent());
  EXPECT_EQ(s.frames[1].absence_kind, AbsenceKind::full_occlusion);
  EXPECT_EQ(*s.frames[2].box, BBox::make(5.5, 6, 7, 8));
  EXPECT_EQ(s.manual_attributes, (AttributeSet{Attribute::BC, Attribute::MB}));
}

TEST(DatasetLoad, CrlfAndMissingFinalNewlineAccepted) {
  TempDir tmp("ds");
  write_bundle(tmp / "b", kMeta, "1,2,3,4\r\n5,6,7,8", "0\r\n0");
  EXPECT_EQ(load_sequence(tmp / "b").size(), 2u);
}

TEST(DatasetLoad, Errors) {
  TempDir tmp("ds");
  write_bundle(tmp / "longer_absence", kMeta, "1,2,3,4\n", "0\n0\n");
  EXPECT_THROW(load_sequence(tmp / "longer_absence"), InputError);
  write_bundle(tmp / "first_absent", kMeta, "absent\n1,2,3,4\n", "1\n0\n");
  EXPECT_THROW(load_sequence(tmp / "first_absent"), InputError);
  write_bundle(tmp / "malformed", kMeta, "1,2,x,4\n", "0\n");
  EXPECT_THROW(load_sequence(tmp / "malformed"), InputError);
  write_bundle(tmp / "three_fields", kMeta, "1,2,3\n", "0\n");
  EXPECT_THROW(load_sequence(tmp / "three_fields"), InputError);
  write_bundle(tmp / "zero_width", kMeta, "1,2,0,4\n", "0\n");
  EXPECT_THROW(load_sequence(tmp / "zero_width"), InputError);
  write_bundle(tmp / "box_but_absent", kMeta, "1,2,3,4\n1,2,3,4\n", "0\n1\n");
  EXPECT_THROW(load_sequence(tmp / "box_but_absent"), InputError);
  write_bundle(tmp / "bad_code", kMeta, "1,2,3,4\n", "7\n");
  EXPECT_THROW(load_sequence(tmp / "bad_code"), InputError);
  write_bundle(tmp / "bad_attr", R"({"name":"x","category":"c","frame_rate":30,"manual_attributes":["XX"]})",
               "1,2,3,4\n", "0\n");
  EXPECT_THROW(load_sequence(tmp / "bad_attr"), InputError);
  write_bundle(tmp / "bad_json", "{", "1,2,3,4\n", "0\n");
  EXPECT_THROW(load_sequence(tmp / "bad_json"), InputError);
  std::filesystem::create_directories(tmp / "missing");
  EXPECT_THROW(load_sequence(tmp / "missing"), InputError);
  write_bundle(tmp / "empty", kMeta, "", "");
  EXPECT_THROW(load_sequence(tmp / "empty"), InputError);
}

TEST(DatasetLoad, SaveLoadRoundTripAndSortedDataset) {
  TempDir tmp("ds");
  auto a = make_sequence("zeta", {BBox::make(0.1, 0.2, 3.3, 4.4), std::nullopt, BBox::make(1e-3, 7, 2, 2)}, "car");
  a.frames[1].absence_kind = AbsenceKind::full_occlusion;
  a.manual_attributes = {Attribute::FOC, Attribute::IV};
  auto b = make_sequence("alpha", {BBox::make(1, 1, 1, 1)});
  save_sequence(a, tmp / "z_dir");
  save_sequence(b, tmp / "a_dir");
  std::filesystem::create_directories(tmp / "not_a_bundle");
  const auto loaded = load_dataset(tmp.path());
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].name, "alpha");
  EXPECT_EQ(loaded[1].name, "zeta");
  ASSERT_EQ(loaded[1].size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(loaded[1].frames[t].box, a.frames[t].box);
    EXPECT_EQ(loaded[1].frames[t].absence_kind, a.frames[t].absence_kind);
  }
  EXPECT_EQ(loaded[1].manual_attributes, a.manual_attributes);
}

TEST(DatasetLoad, EmptyDatasetDirectoryIsAnError) {
  TempDir tmp("ds");
  EXPECT_THROW(load_dataset(tmp.path()), InputError);
  EXPECT_THROW(load_dataset(tmp / "nope"), InputError);
}

TEST(Results, RoundTripAndErrors) {
  TempDir tmp("res");
  const std::vector<BBox> boxes = {BBox::make(0.1, 0.2, 0.3, 0.4), BBox::make(-5, 1e6, 1.0 / 3.0, 2)};
  save_results(tmp / "r.txt", boxes);
  EXPECT_EQ(load_results(tmp / "r.txt"), boxes);
  EXPECT_EQ(load_results(tmp / "r.txt", 2), boxes);
  EXPECT_THROW(load_results(tmp / "r.txt", 3), InputError);
  text::write_file_atomic(tmp / "bad.txt", "1,2,3,4\n1,2,three,4\n");
  EXPECT_THROW(load_results(tmp / "bad.txt"), InputError);
  text::write_file_atomic(tmp / "ok.txt", "10,20.5,30,40\n");
  EXPECT_EQ(load_results(tmp / "ok.txt"), std::vector<BBox>{BBox::make(10, 20.5, 30, 40)});
  EXPECT_THROW(load_results(tmp / "absent_file.txt"), InputError);
}

TEST(AutoAttributes, SpecExamples) {
  EXPECT_TRUE(compute_auto_attributes(make_sequence("s", static_boxes(BBox::make(3, 4, 30, 30), 5))).empty());
  EXPECT_EQ(compute_auto_attributes(make_sequence("s", {BBox::make(0, 0, 10, 10)})), AttributeSet{Attribute::LR});
  const auto jump = make_sequence("s", {BBox::make(0, 0, 10, 10), BBox::make(6, 0, 10, 10)});
  EXPECT_TRUE(compute_auto_attributes(jump).contains(Attribute::FM));
  // 4.9 px stays below half of sqrt(100).
  const auto slow = make_sequence("s", {BBox::make(0, 0, 10, 10), BBox::make(4.9, 0, 10, 10)});
  EXPECT_FALSE(compute_auto_attributes(slow).contains(Attribute::FM));
}

TEST(AutoAttributes, RatiosAgainstFirstFrameAndBoundaries) {
  const auto big = BBox::make(0, 0, 40, 40);  // area 1600, aspect 1
  // Exactly twice / half the first area stays inside [0.5, 2].
  auto s = make_sequence("s", {big, BBox::make(0, 0, 40, 80), BBox::make(0, 0, 40, 20)});
  auto attrs = compute_auto_attributes(s);
  EXPECT_FALSE(attrs.contains(Attribute::SV));
  EXPECT_FALSE(attrs.contains(Attribute::ARC));
  // Area ratio 2.25 and aspect 2.25 trigger both.
  s = make_sequence("s", {big, BBox::make(0, 0, 40, 90)});
  attrs = compute_auto_attributes(s);
  EXPECT_TRUE(attrs.contains(Attribute::SV));
  EXPECT_TRUE(attrs.contains(Attribute::ARC));
  // Same area, aspect 4: ARC only.
  s = make_sequence("s", {big, BBox::make(0, 0, 80, 20)});
  attrs = compute_auto_attributes(s);
  EXPECT_FALSE(attrs.contains(Attribute::SV));
  EXPECT_TRUE(attrs.contains(Attribute::ARC));
  // Gradual growth: consecutive ratios are small but the first-frame ratio is 3.
  s = make_sequence("s", {BBox::make(0, 0, 30, 30), BBox::make(0, 0, 36, 36), BBox::make(0, 0, 44, 44),
                          BBox::make(0, 0, 52, 52)});
  EXPECT_TRUE(compute_auto_attributes(s).contains(Attribute::SV));
  // LR needs a single small frame only.
  s = make_sequence("s", {big, big, BBox::make(0, 0, 29, 31)});
  EXPECT_TRUE(compute_auto_attributes(s).contains(Attribute::LR));
}

TEST(AutoAttributes, AbsenceBreaksMotionPairs) {
  const auto s = make_sequence("s", {BBox::make(0, 0, 40, 40), std::nullopt, BBox::make(200, 200, 40, 40)});
  EXPECT_FALSE(compute_auto_attributes(s).contains(Attribute::FM));
  const auto stats = dataset_stats({s});
  EXPECT_EQ(stats.speed_pairs, 0u);
  EXPECT_EQ(stats.avg_relative_speed, 0.0);
  EXPECT_EQ(stats.present_frames, 2u);
}

TEST(AutoAttributes, ResolvedMergesManualLabels) {
  auto s = make_sequence("s", {BBox::make(0, 0, 10, 10)});
  s.manual_attributes = {Attribute::IV};
  EXPECT_EQ(resolved_attributes(s), (AttributeSet{Attribute::IV, Attribute::LR}));
}

TEST(AutoAttributes, TranslationInvariantOnRandomSequences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(0, 300), size(5, 80), unit(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::optional<BBox>> boxes;
    std::vector<std::optional<BBox>> moved;
    const double dx = pos(rng) - 150;
    const double dy = pos(rng) - 150;
    const std::size_t n = 1 + trial % 12;
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0 && unit(rng) < 0.2) {
        boxes.push_back(std::nullopt);
        moved.push_back(std::nullopt);
        continue;
      }
      const auto b = BBox::make(pos(rng), pos(rng), size(rng), size(rng));
      boxes.push_back(b);
      moved.push_back(BBox::make(b.x + dx, b.y + dy, b.w, b.h));
    }
    const auto a = compute_auto_attributes(make_sequence("a", boxes));
    const auto m = compute_auto_attributes(make_sequence("m", moved));
    EXPECT_EQ(a.contains(Attribute::SV), m.contains(Attribute::SV));
    EXPECT_EQ(a.contains(Attribute::LR), m.contains(Attribute::LR));
    EXPECT_EQ(a.contains(Attribute::ARC), m.contains(Attribute::ARC));
    EXPECT_EQ(a.contains(Attribute::FM), m.contains(Attribute::FM));
  }
}

TEST(DatasetStats, SpecExamples) {
  const auto two = make_sequence("s", {BBox::make(0, 0, 10, 10), BBox::make(10, 0, 10, 10)});
  auto st = dataset_stats({two});
  EXPECT_DOUBLE_EQ(st.avg_target_size, 100.0);
  EXPECT_DOUBLE_EQ(st.avg_relative_speed, 1.0);
  EXPECT_EQ(st.speed_pairs, 1u);

  st = dataset_stats({make_sequence("one", {BBox::make(0, 0, 3, 4)})});
  EXPECT_EQ(st.avg_relative_speed, 0.0);
  EXPECT_EQ(st.speed_pairs, 0u);
  EXPECT_DOUBLE_EQ(st.avg_target_size, 12.0);
  EXPECT_EQ(st.num_sequences, 1u);
  EXPECT_EQ(st.total_frames, 1u);
}

TEST(DatasetStats, ReferenceConstants) {
  EXPECT_DOUBLE_EQ(reference::kAvgTargetSizePx2, 510.0);
  EXPECT_DOUBLE_EQ(reference::kAvgRelativeSpeed, 5.828);
}

TEST(DatasetStats, FrameCountsAndDuplicationInvariance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto fx = sfot::testing::random_fixture(rng, 1 + trial % 6, 30);
    const auto st = dataset_stats(fx.dataset);
    EXPECT_LE(static_cast<double>(st.min_frames), st.avg_frames);
    EXPECT_LE(st.avg_frames, static_cast<double>(st.max_frames));
    EXPECT_GE(st.avg_target_size, 0.0);
    EXPECT_GE(st.avg_relative_speed, 0.0);
    auto doubled = fx.dataset;
    doubled.insert(doubled.end(), fx.dataset.begin(), fx.dataset.end());
    const auto st2 = dataset_stats(doubled);
    EXPECT_NEAR(st2.avg_target_size, st.avg_target_size, 1e-9 * st.avg_target_size);
    EXPECT_NEAR(st2.avg_relative_speed, st.avg_relative_speed, 1e-9 * std::max(1.0, st.avg_relative_speed));
    EXPECT_NEAR(st2.avg_frames, st.avg_frames, 1e-12 * st.avg_frames);
    EXPECT_EQ(st2.min_frames, st.min_frames);
    EXPECT_EQ(st2.max_frames, st.max_frames);
    EXPECT_EQ(st2.num_sequences, 2 * st.num_sequences);
  }
}

TEST(DatasetStats, CategoryLengths) {
  const auto b = BBox::make(0, 0, 5, 5);
  const auto lengths = category_lengths({make_sequence("a", static_boxes(b, 2), "ball"),
                                         make_sequence("b", static_boxes(b, 4), "ball"),
                                         make_sequence("c", static_boxes(b, 9), "bird")});
  ASSERT_EQ(lengths.size(), 2u);
  EXPECT_DOUBLE_EQ(lengths.at("ball"), 3.0);
  EXPECT_DOUBLE_EQ(lengths.at("bird"), 9.0);
}

TEST(Cooccurrence, SpecExamples) {
  auto m = attribute_cooccurrence(std::vector<AttributeSet>{{Attribute::FM, Attribute::LR}});
  EXPECT_EQ(m.at(Attribute::FM, Attribute::LR), 1u);
  EXPECT_EQ(m.at(Attribute::LR, Attribute::FM), 1u);
  EXPECT_EQ(m.at(Attribute::FM, Attribute::FM), 1u);
  EXPECT_EQ(m.at(Attribute::LR, Attribute::LR), 1u);
  std::size_t total = 0;
  for (auto a : all_attributes()) {
    for (auto b : all_attributes()) total += m.at(a, b);
  }
  EXPECT_EQ(total, 4u);

  m = attribute_cooccurrence(std::vector<AttributeSet>(5));
  for (auto a : all_attributes()) {
    for (auto b : all_attributes()) EXPECT_EQ(m.at(a, b), 0u);
  }
}

TEST(Cooccurrence, InvariantsOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<AttributeSet> sets(1 + trial % 20);
    for (auto& s : sets) {
      for (auto a : all_attributes()) {
        if (coin(rng)) s.insert(a);
      }
    }
    const auto m = attribute_cooccurrence(sets);
    for (auto a : all_attributes()) {
      std::size_t carrying = 0;
      for (const auto& s : sets) carrying += s.contains(a) ? 1 : 0;
      EXPECT_EQ(m.at(a, a), carrying);
      for (auto b : all_attributes()) {
        EXPECT_EQ(m.at(a, b), m.at(b, a));
        EXPECT_LE(m.at(a, b), std::min(m.at(a, a), m.at(b, b)));
      }
    }
  }
}

TEST(Cooccurrence, SequencesOverloadUsesResolvedAttributes) {
  auto s = make_sequence("s", {BBox::make(0, 0, 10, 10), BBox::make(8, 0, 10, 10)});
  s.manual_attributes = {Attribute::BC};
  const auto m = attribute_cooccurrence(std::vector<Sequence>{s});
  EXPECT_EQ(m.at(Attribute::BC, Attribute::FM), 1u);
  EXPECT_EQ(m.at(Attribute::BC, Attribute::LR), 1u);
  EXPECT_EQ(m.at(Attribute::FM, Attribute::LR), 1u);
}

TEST(Attributes, NamesRoundTrip) {
  for (auto a : all_attributes()) EXPECT_EQ(parse_attribute(attribute_name(a)), a);
  EXPECT_FALSE(parse_attribute("fm").has_value());
  EXPECT_EQ(attribute_name(Attribute::ARC), "ARC");
}
