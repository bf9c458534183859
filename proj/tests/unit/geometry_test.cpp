#include <gtest/gtest.h>

#include <random>

#include "sfot/error.hpp"
#include "sfot/geometry.hpp"

using namespace sfot;

TEST(Geometry, MakeRejectsDegenerateBoxes) {
  EXPECT_THROW(BBox::make(0, 0, 0, 5), InputError);
  EXPECT_THROW(BBox::make(0, 0, 5, -1), InputError);
  EXPECT_THROW(BBox::make(std::nan(""), 0, 5, 5), InputError);
  EXPECT_THROW(BBox::make(0, INFINITY, 5, 5), InputError);
  EXPECT_NO_THROW(BBox::make(-3.5, 2.25, 0.5, 7));
}

TEST(Geometry, IouExamples) {
  const auto a = BBox::make(0, 0, 10, 10);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, BBox::make(20, 20, 5, 5)), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, BBox::make(5, 0, 10, 10)), 50.0 / 150.0);
  // Touching edges share no area.
  EXPECT_EQ(iou(a, BBox::make(10, 0, 10, 10)), 0.0);
  // Containment: 25 / 100.
  EXPECT_DOUBLE_EQ(iou(a, BBox::make(2, 2, 5, 5)), 0.25);
}

TEST(Geometry, CenterExamples) {
  EXPECT_EQ(center(BBox::make(0, 0, 10, 10)), (Point{5, 5}));
  EXPECT_EQ(center(BBox::make(2, 4, 6, 8)), (Point{5, 8}));
  const auto b = BBox::make(1.25, -7.5, 3.5, 9);
  const auto c = center(b);
  EXPECT_EQ(center(BBox::from_center(c, b.w, b.h)), c);
}

TEST(Geometry, CenterErrorExamples) {
  const auto a = BBox::make(-5, -5, 10, 10);
  EXPECT_EQ(center_error(a, a), 0.0);
  EXPECT_DOUBLE_EQ(center_error(a, BBox::make(-2, -1, 10, 10)), 5.0);
  const auto shift = [](BBox b, double dx, double dy) { return BBox::make(b.x + dx, b.y + dy, b.w, b.h); };
  const auto b = BBox::make(13, 2, 4, 6);
  EXPECT_DOUBLE_EQ(center_error(shift(a, 17, -3), shift(b, 17, -3)), center_error(a, b));
}

TEST(Geometry, RelativeSpeedExamples) {
  const auto a = BBox::make(0, 0, 10, 10);
  EXPECT_EQ(relative_speed(a, a), 0.0);
  EXPECT_DOUBLE_EQ(relative_speed(a, BBox::make(10, 0, 10, 10)), 1.0);
  // Mean of the two areas: (100 + 400) / 2 = 250.
  EXPECT_DOUBLE_EQ(relative_speed(a, BBox::from_center({5, 15}, 20, 20)), 10.0 / std::sqrt(250.0));
}

class GeometryProperty : public ::testing::Test {
 protected:
  std::mt19937_64 rng{20261019};
  BBox random_box() {
    std::uniform_real_distribution<double> pos(-50.0, 50.0);
    std::uniform_real_distribution<double> size(0.1, 40.0);
    return BBox::make(pos(rng), pos(rng), size(rng), size(rng));
  }
};

TEST_F(GeometryProperty, IouSymmetricAndBounded) {
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_box();
    const auto b = random_box();
    const double v = iou(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_EQ(iou(a, a), 1.0);
  }
}

TEST_F(GeometryProperty, CenterErrorIsAMetricOnCenters) {
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_box();
    const auto b = random_box();
    const auto c = random_box();
    EXPECT_GE(center_error(a, b), 0.0);
    EXPECT_EQ(center_error(a, b), center_error(b, a));
    EXPECT_LE(center_error(a, c), center_error(a, b) + center_error(b, c) + 1e-12);
    // Zero iff the centers coincide, regardless of extent.
    const auto same_center = BBox::from_center(center(a), b.w, b.h);
    EXPECT_NEAR(center_error(a, same_center), 0.0, 1e-12);
  }
}

TEST_F(GeometryProperty, RelativeSpeedScaleAndTranslationInvariant) {
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_box();
    const auto b = random_box();
    const double k = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    const double dx = std::uniform_real_distribution<double>(-100.0, 100.0)(rng);
    const auto scaled = [k](BBox x) { return BBox::make(x.x * k, x.y * k, x.w * k, x.h * k); };
    const auto moved = [dx](BBox x) { return BBox::make(x.x + dx, x.y - dx, x.w, x.h); };
    const double v = relative_speed(a, b);
    EXPECT_NEAR(relative_speed(scaled(a), scaled(b)), v, 1e-9 * std::max(1.0, v));
    EXPECT_NEAR(relative_speed(moved(a), moved(b)), v, 1e-9 * std::max(1.0, v));
  }
}
