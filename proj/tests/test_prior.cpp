#include "priorvo/errors.hpp"
#include "priorvo/prior.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace priorvo;

namespace {

DepthMap sample_map() {
  DepthMap m;
  m.width = 4;
  m.height = 3;
  m.trained_focal = 520.5;
  m.values = {1.0f, 2.5f, -1.0f, 0.0f, 3.25f, 1e-3f, 7.0f, 100.0f, 0.75f, 2.0f, 4.0f, 8.0f};
  return m;
}

}  // namespace

TEST(DepthPrior, SerializeRoundTrip) {
  const DepthMap m = sample_map();
  const std::string bytes = serialize_depth_map(m);
  EXPECT_EQ(bytes.rfind("DPRIOR 4 3 ", 0), 0u);
  EXPECT_EQ(parse_depth_map(bytes), m);

  const auto path = std::filesystem::temp_directory_path() / "priorvo_test_roundtrip.dpr";
  save_depth_map(m, path);
  EXPECT_EQ(load_depth_map(path), m);
  std::filesystem::remove(path);
}

TEST(DepthPrior, NanSurvivesAsInvalid) {
  DepthMap m = sample_map();
  m.values[0] = std::nanf("");
  const DepthMap back = parse_depth_map(serialize_depth_map(m));
  EXPECT_TRUE(std::isnan(back.values[0]));
  EXPECT_FALSE(DepthMap::valid(back.values[0]));
}

TEST(DepthPrior, MalformedInputs) {
  const std::string good = serialize_depth_map(sample_map());
  EXPECT_THROW(parse_depth_map("DPRIOR 4 3"), LoadError);
  EXPECT_THROW(parse_depth_map("DEPTH 4 3 500\n"), LoadError);
  EXPECT_THROW(parse_depth_map("DPRIOR 4 x 500\n"), LoadError);
  EXPECT_THROW(parse_depth_map("DPRIOR 0 3 500\n"), LoadError);
  EXPECT_THROW(parse_depth_map("DPRIOR 4 3 -5\n"), LoadError);
  EXPECT_THROW(parse_depth_map(good.substr(0, good.size() - 1)), LoadError);
  EXPECT_THROW(parse_depth_map(good + "x"), LoadError);
  try {
    parse_depth_map(good.substr(0, good.size() - 3));
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_GT(e.byte_offset(), 0u);
  }
  EXPECT_THROW(load_depth_map("/nonexistent/priorvo/x.dpr"), IoError);
}

TEST(DepthPrior, Filename) {
  EXPECT_EQ(prior_filename(0), "000000.dpr");
  EXPECT_EQ(prior_filename(123), "000123.dpr");
}

TEST(ScaleDepth, Examples) {
  EXPECT_DOUBLE_EQ(scale_depth(2.0, 500.0, 500.0), 2.0);
  EXPECT_DOUBLE_EQ(scale_depth(2.0, 1000.0, 500.0), 4.0);
  EXPECT_DOUBLE_EQ(scale_depth(3.0, 250.0, 500.0), 1.5);
  EXPECT_THROW(scale_depth(1.0, 0.0, 500.0), ContractViolation);
  EXPECT_THROW(scale_depth(1.0, 500.0, -1.0), ContractViolation);
}

TEST(ScaleDepth, LinearInFocalRatio) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(0.1, 50.0), f(100.0, 2000.0);
  for (int i = 0; i < 1000; ++i) {
    const double dt = d(rng), fc = f(rng), ft = f(rng);
    const double s = scale_depth(dt, fc, ft);
    EXPECT_NEAR(s, fc / ft * dt, 1e-12 * s);
    EXPECT_NEAR(scale_depth(s, ft, fc), dt, 1e-12 * dt);
  }
}

TEST(SamplePrior, RescalesAndRejects) {
  DepthMap m = sample_map();
  m.trained_focal = 100.0;
  const PinholeCamera cam = PinholeCamera::make(200, 200, 1.5, 1, 4, 3);
  EXPECT_DOUBLE_EQ(*sample_prior(m, cam, Vec2(1, 0)), 5.0);
  EXPECT_DOUBLE_EQ(*sample_prior(m, cam, Vec2(0.6, 0.3)), 5.0);
  EXPECT_FALSE(sample_prior(m, cam, Vec2(2, 0)));  // negative
  EXPECT_FALSE(sample_prior(m, cam, Vec2(3, 0)));  // zero
  EXPECT_FALSE(sample_prior(m, cam, Vec2(1, 1)));  // 2 mm after rescale
  EXPECT_DOUBLE_EQ(*sample_prior(m, cam, Vec2(3, 1)), 200.0);  // ceiling is inclusive
  EXPECT_FALSE(sample_prior(m, cam, Vec2(3, 1), PriorBounds{0.5, 199.0}));
  EXPECT_DOUBLE_EQ(*sample_prior(m, cam, Vec2(0, 2)), 1.5);
  EXPECT_FALSE(sample_prior(m, cam, Vec2(0, 2), PriorBounds{2.0, 10.0}));
  EXPECT_THROW(sample_prior(m, cam, Vec2(4, 0)), ContractViolation);
  EXPECT_THROW(sample_prior(m, cam, Vec2(-0.1, 0)), ContractViolation);
}
