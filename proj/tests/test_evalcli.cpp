#include "priorvo/dataset.hpp"
#include "priorvo/errors.hpp"
#include "priorvo/plots.hpp"
#include "priorvo/synthworld.hpp"
#include "priorvo/trajectory.hpp"

#include <fmt/format.h>
#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

using namespace priorvo;
namespace fs = std::filesystem;

namespace {

Trajectory wiggle(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.05);
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    const double s = 0.1 * i;
    t.append(s, RigidTransform(so3_exp(Vec3(g(rng), 0.3 * std::sin(s), g(rng))),
                               Vec3(std::cos(s), 0.2 * std::sin(2 * s), 0.5 * s) + Vec3(g(rng), g(rng), g(rng))));
  }
  return t;
}

Trajectory transformed(const Trajectory& t, const RigidTransform& g, double scale) {
  Trajectory out;
  for (const StampedPose& p : t.poses) {
    const RigidTransform q = g * p.pose;
    out.append(p.timestamp, RigidTransform(q.rotation(), scale * q.translation()));
  }
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string fmt_index(int i) { return fmt::format("{:06d}.pgm", i); }

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

struct CliResult {
  int code;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(PRIORVO_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  std::array<char, 512> buf;
  while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST(Ate, IdenticalTrajectoriesGiveZero) {
  const Trajectory t = wiggle(50, 1);
  for (AlignmentMode m : {AlignmentMode::kRigid, AlignmentMode::kSimilarity}) {
    const EvalReport r = ate_rmse(t, t, {m, 0.0});
    EXPECT_NEAR(r.ate_rmse, 0.0, 1e-9);
    EXPECT_NEAR(r.scale, 1.0, 1e-9);
    EXPECT_EQ(r.matched, 50u);
  }
}

TEST(Ate, RigidGaugeInvariance) {
  const Trajectory truth = wiggle(60, 2);
  const Trajectory est = wiggle(60, 3);
  const RigidTransform g(so3_exp(Vec3(0.3, -1.2, 0.7)), Vec3(4, -2, 9));
  const double base = ate_rmse(est, truth).ate_rmse;
  EXPECT_GT(base, 0.01);
  EXPECT_NEAR(ate_rmse(transformed(est, g, 1.0), truth).ate_rmse, base, 1e-9);
  EXPECT_NEAR(ate_rmse(transformed(truth, g, 1.0), truth).ate_rmse, 0.0, 1e-9);
}

TEST(Ate, SimilarityRecoversScale) {
  const Trajectory truth = wiggle(40, 4);
  const RigidTransform g(so3_exp(Vec3(0.1, 0.2, -0.3)), Vec3(1, 2, 3));
  const Trajectory est = transformed(truth, g, 0.93);
  const EvalReport s = ate_rmse(est, truth, {AlignmentMode::kSimilarity, 0.0});
  EXPECT_NEAR(s.scale, 0.93, 1e-9);
  EXPECT_NEAR(s.ate_rmse, 0.0, 1e-9);
  const EvalReport r = ate_rmse(est, truth);
  EXPECT_NEAR(r.scale, 0.93, 1e-9);
  EXPECT_GT(r.ate_rmse, 1e-3);
}

TEST(Ate, SymmetricInRigidMode) {
  const Trajectory a = wiggle(45, 5), b = wiggle(45, 6);
  EXPECT_NEAR(ate_rmse(a, b).ate_rmse, ate_rmse(b, a).ate_rmse, 1e-9);
}

TEST(Ate, AssociationAndErrors) {
  const Trajectory truth = wiggle(30, 7);
  Trajectory est;
  for (std::size_t i = 0; i < truth.size(); i += 3) est.append(truth.poses[i].timestamp + 0.01, truth.poses[i].pose);
  const EvalReport r = ate_rmse(est, truth);
  EXPECT_EQ(r.matched, 10u);
  EXPECT_EQ(r.errors.size(), 10u);
  EXPECT_NEAR(r.ate_rmse, 0.0, 1e-9);
  Trajectory two;
  two.append(0.0, RigidTransform());
  two.append(0.1, RigidTransform());
  EXPECT_THROW(ate_rmse(two, truth), EvaluationError);
  Trajectory far;
  for (int i = 0; i < 5; ++i) far.append(100.0 + i, RigidTransform());
  EXPECT_THROW(ate_rmse(far, truth), EvaluationError);
}

TEST(TrajectoryFile, RoundTrip) {
  const Trajectory t = wiggle(25, 8);
  const Trajectory back = parse_trajectory(format_trajectory(t));
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(back.poses[i].timestamp, t.poses[i].timestamp, 1e-8);
    EXPECT_LT((back.poses[i].pose.translation() - t.poses[i].pose.translation()).norm(), 1e-8 * 10);
    EXPECT_LT((back.poses[i].pose.rotation() - t.poses[i].pose.rotation()).norm(), 1e-8);
  }
}

TEST(TrajectoryFile, IdentityLineAndErrors) {
  Trajectory t;
  t.append(0.0, RigidTransform());
  EXPECT_EQ(format_trajectory(t), "0 0 0 0 0 0 0 1\n");
  EXPECT_THROW(parse_trajectory("0 1 2 3 0 0 0\n"), ParseError);
  EXPECT_THROW(parse_trajectory("0 1 2 3 0 0 0 x\n"), ParseError);
  EXPECT_THROW(parse_trajectory("1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n"), ParseError);
  EXPECT_EQ(parse_trajectory("# comment\n\n0 0 0 0 0 0 0 1\n").size(), 1u);
  try {
    parse_trajectory("0 0 0 0 0 0 0 1\n0.1 0 0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(t.append(0.0, RigidTransform()), ContractViolation);
}

TEST(DatasetReader, GapAndMissingPieces) {
  const fs::path dir = fresh_dir("priorvo_test_gap");
  EXPECT_THROW(read_dataset(dir), IoError);  // no intrinsics
  write_intrinsics({PinholeCamera::make(100, 100, 31.5, 23.5, 64, 48), 10.0}, dir / "intrinsics.txt");
  EXPECT_THROW(read_dataset(dir), IoError);  // no images
  fs::create_directories(dir / "images");
  for (int i : {0, 1, 2, 4}) save_pgm(Image(64, 48, 0.5f), dir / "images" / fmt_index(i));
  try {
    read_dataset(dir);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("000003"), std::string::npos) << e.what();
  }
  save_pgm(Image(64, 48, 0.5f), dir / "images" / fmt_index(3));
  const Dataset d = read_dataset(dir);
  EXPECT_EQ(d.size(), 5u);
  EXPECT_FALSE(d.any_priors());
  EXPECT_FALSE(d.priors());
  EXPECT_FALSE(d.groundtruth());
  EXPECT_DOUBLE_EQ(d.timestamp(3), 0.3);
  fs::remove_all(dir);
}

TEST(Plots, WritesThreeFiles) {
  const fs::path dir = fresh_dir("priorvo_test_plots");
  const Trajectory truth = wiggle(30, 9);
  const Trajectory est = transformed(truth, RigidTransform(Mat3::Identity(), Vec3(0.1, 0, 0)), 1.0);
  const EvalReport r = ate_rmse(est, truth);
  const std::vector<SeedOutcome> seeds = {{0, SeedInit::kPrior, 2, true}, {1, SeedInit::kAverage, 5, true},
                                          {2, SeedInit::kAverage, 9, false}};
  const PlotFiles f = emit_plots(est, truth, r, seeds, dir / "plots");
  EXPECT_TRUE(fs::exists(f.svg));
  std::ifstream errs(f.errors_csv);
  std::string line;
  int rows = -1;
  while (std::getline(errs, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(r.matched));
  std::ifstream conv(f.convergence_csv);
  std::getline(conv, line);
  EXPECT_EQ(line, "updates,frac_converged_prior,frac_converged_average");

  const fs::path none = dir / "none";
  EXPECT_THROW(emit_plots(Trajectory{}, truth, r, seeds, none), EvaluationError);
  EXPECT_FALSE(fs::exists(none));
  fs::remove_all(dir);
}

TEST(Plots, ConvergenceCurve) {
  const std::vector<SeedOutcome> seeds = {{0, SeedInit::kPrior, 1, true},  {1, SeedInit::kPrior, 3, true},
                                          {2, SeedInit::kAverage, 3, true}, {3, SeedInit::kAverage, 4, false},
                                          {4, SeedInit::kAverage, 6, true}};
  const auto rows = convergence_curve(seeds);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_DOUBLE_EQ(rows[0].frac_prior, 0.5);
  EXPECT_DOUBLE_EQ(rows[2].frac_prior, 1.0);
  EXPECT_DOUBLE_EQ(rows[2].frac_average, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(rows[5].frac_average, 2.0 / 3.0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GE(rows[i].frac_prior, rows[i - 1].frac_prior);
    EXPECT_GE(rows[i].frac_average, rows[i - 1].frac_average);
  }
}

TEST(Plots, SeedOutcomeRoundTrip) {
  const fs::path dir = fresh_dir("priorvo_test_seeds");
  const std::vector<SeedOutcome> seeds = {{3, SeedInit::kPrior, 7, true}, {9, SeedInit::kAverage, 0, false}};
  write_seed_outcomes(seeds, dir / "s.csv");
  const auto back = read_seed_outcomes(dir / "s.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].seed_id, 3);
  EXPECT_EQ(back[0].init, SeedInit::kPrior);
  EXPECT_EQ(back[1].updates, 0);
  EXPECT_FALSE(back[1].converged);
  fs::remove_all(dir);
}

TEST(Cli, EvalExitCodes) {
  const fs::path dir = fresh_dir("priorvo_test_cli");
  const Trajectory truth = wiggle(20, 10);
  write_trajectory(truth, dir / "truth.txt");
  write_text(dir / "est.txt", format_trajectory(truth));
  const CliResult ok = cli("eval-ate " + (dir / "est.txt").string() + " " + (dir / "truth.txt").string());
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("completed yes"), std::string::npos);
  EXPECT_NE(ok.out.find("matched 20"), std::string::npos);

  write_text(dir / "lost.txt", format_trajectory(truth) + "# lost at frame 20\n");
  const CliResult lost = cli("eval-ate " + (dir / "lost.txt").string() + " " + (dir / "truth.txt").string());
  EXPECT_EQ(lost.code, 2);
  EXPECT_NE(lost.out.find("completed X"), std::string::npos);

  write_text(dir / "bad.txt", "0 1 2\n");
  EXPECT_EQ(cli("eval-ate " + (dir / "bad.txt").string() + " " + (dir / "truth.txt").string()).code, 3);
  EXPECT_EQ(cli("eval-ate /nonexistent/a.txt " + (dir / "truth.txt").string()).code, 3);
  EXPECT_EQ(cli("run /nonexistent/dataset default").code, 3);
  fs::remove_all(dir);
}

TEST(Cli, SimulateAndRunTinyDataset) {
  const fs::path dir = fresh_dir("priorvo_test_cli_run");
  write_text(dir / "scene.txt", "frames = 3\nwidth = 160\nheight = 120\nfx = 125\nfy = 125\ncx = 79.5\ncy = 59.5\n");
  ASSERT_EQ(cli("simulate " + (dir / "scene.txt").string() + " " + (dir / "data").string()).code, 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "groundtruth.txt"));
  EXPECT_EQ(read_dataset(dir / "data").size(), 3u);
  write_text(dir / "bad.cfg", "max_features = lots\n");
  EXPECT_EQ(cli("run " + (dir / "data").string() + " " + (dir / "bad.cfg").string()).code, 3);
  const CliResult run = cli("run " + (dir / "data").string() + " default --all-frames");
  EXPECT_EQ(run.code, 0);
  EXPECT_EQ(parse_trajectory(run.out).size(), 3u);
  fs::remove_all(dir);
}
