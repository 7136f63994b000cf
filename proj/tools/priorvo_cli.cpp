#include "priorvo/dataset.hpp"
#include "priorvo/errors.hpp"
#include "priorvo/filter_bench.hpp"
#include "priorvo/pipeline.hpp"
#include "priorvo/plots.hpp"
#include "priorvo/synthworld.hpp"
#include "priorvo/trajectory.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace priorvo;

namespace {

constexpr int kExitLost = 2;
constexpr int kExitInput = 3;
constexpr const char* kLostMarker = "# lost";

int cmd_run(const std::string& dataset_dir, const std::string& config_path, const std::string& priors_dir,
            const std::string& out_path, bool all_frames, const std::string& seeds_path) {
  const Dataset ds = read_dataset(dataset_dir);
  PipelineConfig cfg = config_path == "default" ? PipelineConfig{} : read_pipeline_config(config_path);
  PriorSource priors;
  if (!priors_dir.empty()) priors = directory_priors(priors_dir);
  else if (!cfg.prior_dir.empty()) priors = directory_priors(cfg.prior_dir);
  else priors = ds.priors();
  if (!cfg.use_priors) priors = {};
  spdlog::info("{} frames, priors {}", ds.size(), priors ? "on" : "off");

  Pipeline pipe(ds.camera, cfg, priors);
  int lost_at = -1;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const FrameResult r = pipe.process_frame(ds.load_frame(i), ds.timestamp(i));
    if (r.terminal_lost) {
      lost_at = r.frame_index;
      break;
    }
  }
  pipe.finish();
  const Trajectory traj = all_frames ? pipe.trajectory() : pipe.keyframe_trajectory();
  std::string text = format_trajectory(traj);
  if (lost_at >= 0) text += fmt::format("{} at frame {}\n", kLostMarker, lost_at);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out || !(out << text)) throw IoError("cannot write " + out_path);
  }
  if (!seeds_path.empty()) write_seed_outcomes(pipe.seed_outcomes(), seeds_path);
  if (lost_at >= 0) {
    std::cerr << "tracking lost at frame " << lost_at << "\n";
    return kExitLost;
  }
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& truth_path, bool similarity, const std::string& plots,
             const std::string& seeds_path) {
  std::ifstream in(est_path);
  if (!in) throw IoError("cannot open " + est_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const bool lost = text.find(kLostMarker) != std::string::npos;
  const Trajectory est = parse_trajectory(text);
  const Trajectory truth = read_trajectory(truth_path);
  EvalReport rep = ate_rmse(est, truth, {similarity ? AlignmentMode::kSimilarity : AlignmentMode::kRigid, 0.0});
  rep.completed = !lost;
  const double rigid_ratio =
      similarity ? ate_rmse(est, truth, {AlignmentMode::kRigid, 0.0}).scale : rep.scale;
  std::cout << fmt::format("ate_rmse {:.6f}\nscale {:.6f}\nrigid_norm_ratio {:.6f}\nmatched {}\ncompleted {}\n",
                           rep.ate_rmse, rep.scale, rigid_ratio, rep.matched, rep.completed ? "yes" : "X");
  if (!plots.empty()) {
    const std::vector<SeedOutcome> seeds = seeds_path.empty() ? std::vector<SeedOutcome>{} : read_seed_outcomes(seeds_path);
    emit_plots(est, truth, rep, seeds, plots);
  }
  return lost ? kExitLost : 0;
}

int cmd_bench(int trials, const std::string& out_dir, bool literal, bool relaxed) {
  FilterBenchOptions o;
  o.trials = trials;
  o.literal_prior_range = literal;
  if (relaxed) o.convergence_ratio = ConvergencePreset::kRelaxed;
  std::ofstream tp, ta;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    tp.open(fs::path(out_dir) / "seeds_prior.csv");
    ta.open(fs::path(out_dir) / "seeds_average.csv");
    if (!tp || !ta) throw IoError("cannot write into " + out_dir);
  }
  const FilterBenchResult r = run_filter_bench(o, out_dir.empty() ? nullptr : &tp, out_dir.empty() ? nullptr : &ta);
  if (!out_dir.empty()) write_convergence_csv(r.curve, fs::path(out_dir) / "seed_convergence.csv");
  std::cout << "updates,frac_converged_prior,frac_converged_average\n";
  for (const ConvergenceRow& row : r.curve) {
    if (row.updates > 30) break;
    std::cout << fmt::format("{},{:.4f},{:.4f}\n", row.updates, row.frac_prior, row.frac_average);
  }
  std::cout << fmt::format("median updates: prior {} average {}; prior strictly faster in {:.1f}% of trials\n",
                           r.median_prior, r.median_average, 100.0 * r.frac_prior_strictly_faster);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular semi-direct visual odometry with depth priors"};
  app.require_subcommand(1);
  int verbose = 0;
  app.add_flag("-v,--verbose", verbose, "Log progress; twice for per-frame detail");

  std::string dataset, config, priors, out, seeds;
  bool all_frames = false;
  auto* run = app.add_subcommand("run", "Run odometry on a dataset directory");
  run->add_option("dataset", dataset)->required();
  run->add_option("config", config, "Pipeline config file, or `default`")->required();
  run->add_option("--priors", priors, "Directory of .dpr depth priors");
  run->add_option("--out", out, "Output TUM trajectory (stdout when absent)");
  run->add_flag("--all-frames", all_frames, "Write every frame instead of keyframes");
  run->add_option("--seeds", seeds, "Write per-seed convergence outcomes CSV");

  std::string scene, out_dir;
  auto* sim = app.add_subcommand("simulate", "Render a synthetic dataset");
  sim->add_option("scene-config", scene)->required();
  sim->add_option("out-dir", out_dir)->required();

  std::string est, truth, plots, eval_seeds;
  bool similarity = false;
  auto* eval = app.add_subcommand("eval-ate", "Absolute trajectory error");
  eval->add_option("estimate", est)->required();
  eval->add_option("truth", truth)->required();
  eval->add_flag("--similarity", similarity, "Fit scale as well");
  eval->add_option("--plots", plots, "Directory for SVG/CSV plots");
  eval->add_option("--seeds", eval_seeds, "Seed outcomes CSV from `run --seeds`");

  int trials = 500;
  std::string bench_out;
  bool literal = false, relaxed = false;
  auto* bench = app.add_subcommand("filter-bench", "Depth-filter convergence A/B");
  bench->add_option("--trials", trials)->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "Directory for per-update seed CSVs");
  bench->add_flag("--literal-range", literal, "Prior seeds use 1/d as outlier range");
  bench->add_flag("--relaxed", relaxed, "Relaxed convergence preset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }
  spdlog::set_level(verbose >= 2 ? spdlog::level::debug : verbose == 1 ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*run) return cmd_run(dataset, config, priors, out, all_frames, seeds);
    if (*sim) {
      export_dataset(read_scene_config(scene), out_dir);
      return 0;
    }
    if (*eval) return cmd_eval(est, truth, similarity, plots, eval_seeds);
    if (*bench) return cmd_bench(trials, bench_out, literal, relaxed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
