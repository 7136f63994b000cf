#include "priorvo/config.hpp"
#include "priorvo/errors.hpp"
#include "priorvo/pipeline.hpp"

#include <gtest/gtest.h>

using namespace priorvo;

TEST(KeyValues, ParsesCommentsAndWhitespace) {
  const auto kv = parse_key_values("# header\n\n  a = 1  \nb=two words # trailing\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0].key, "a");
  EXPECT_EQ(kv[0].value, "1");
  EXPECT_EQ(kv[0].line, 3u);
  EXPECT_EQ(kv[1].value, "two words");
}

TEST(KeyValues, Errors) {
  EXPECT_THROW(parse_key_values("novalue\n"), ConfigError);
  EXPECT_THROW(parse_key_values(" = 3\n"), ConfigError);
  EXPECT_THROW(parse_key_values("a = 1\na = 2\n"), ConfigError);
  try {
    parse_key_values("a = 1\n\nbroken\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(KeyValues, TypedConversions) {
  EXPECT_DOUBLE_EQ(to_double({"x", "2.5e-3", 1}), 2.5e-3);
  EXPECT_THROW(to_double({"x", "2.5m", 1}), ConfigError);
  EXPECT_EQ(to_int({"x", "-7", 1}), -7);
  EXPECT_THROW(to_int({"x", "7.5", 1}), ConfigError);
  EXPECT_TRUE(to_bool({"x", "on", 1}));
  EXPECT_FALSE(to_bool({"x", "false", 1}));
  EXPECT_THROW(to_bool({"x", "maybe", 1}), ConfigError);
  EXPECT_EQ(to_int_list({"x", "1, 2,3", 1}), (std::vector<int>{1, 2, 3}));
  EXPECT_TRUE(to_int_list({"x", "", 1}).empty());
}

TEST(PipelineConfigFile, FieldsAndPresets) {
  const PipelineConfig c = parse_pipeline_config(
      "max_features = 300\nmin_features = 120\nconvergence = relaxed\nuse_priors = off\nwindow = 7\n"
      "literal_prior_range = true\ndeterministic = false\n");
  EXPECT_EQ(c.max_features, 300);
  EXPECT_EQ(c.min_features, 120);
  EXPECT_DOUBLE_EQ(c.convergence_ratio, ConvergencePreset::kRelaxed);
  EXPECT_FALSE(c.use_priors);
  EXPECT_EQ(c.window, 7);
  EXPECT_TRUE(c.literal_prior_range);
  EXPECT_FALSE(c.deterministic);
  EXPECT_DOUBLE_EQ(parse_pipeline_config("convergence = strict\n").convergence_ratio, 1.0 / 200.0);
  EXPECT_DOUBLE_EQ(parse_pipeline_config("convergence = 0.02\n").convergence_ratio, 0.02);
}

TEST(PipelineConfigFile, Rejections) {
  EXPECT_THROW(parse_pipeline_config("speed = 11\n"), ConfigError);
  EXPECT_THROW(parse_pipeline_config("max_features = 50\nmin_features = 100\n"), ConfigError);
  EXPECT_THROW(parse_pipeline_config("convergence = fast\n"), ConfigError);
  EXPECT_THROW(parse_pipeline_config("convergence = -1\n"), ConfigError);
  EXPECT_THROW(parse_pipeline_config("grid_cell = 4\n"), ConfigError);
  EXPECT_THROW(parse_pipeline_config("prior_d_floor = 5\nprior_d_ceiling = 1\n"), ConfigError);
  EXPECT_THROW(read_pipeline_config("/nonexistent/priorvo.cfg"), IoError);
  EXPECT_NO_THROW(PipelineConfig{}.validate());
}
