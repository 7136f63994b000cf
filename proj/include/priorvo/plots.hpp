#pragma once

// Plot and diagnostic files for evaluated runs.

#include "priorvo/mapping.hpp"
#include "priorvo/trajectory.hpp"

#include <filesystem>
#include <vector>

namespace priorvo {

struct ConvergenceRow {
  int updates = 0;
  double frac_prior = 0.0;    // prior-initialized seeds converged within `updates`
  double frac_average = 0.0;
};

/// Rows for updates = 1..max_updates; max_updates <= 0 uses the largest count seen (at least 1).
std::vector<ConvergenceRow> convergence_curve(const std::vector<SeedOutcome>& seeds, int max_updates = 0);
void write_convergence_csv(const std::vector<ConvergenceRow>& rows, const std::filesystem::path& path);

/// `seed_id,init,updates,converged`, init in {prior, average}.
void write_seed_outcomes(const std::vector<SeedOutcome>& seeds, const std::filesystem::path& path);
std::vector<SeedOutcome> read_seed_outcomes(const std::filesystem::path& path);

struct PlotFiles {
  std::filesystem::path svg, errors_csv, convergence_csv;
};

/// Writes trajectory_xz.svg, ate_errors.csv (one row per matched pose) and
/// seed_convergence.csv. Throws EvaluationError on an empty estimate or report before
/// touching the filesystem; IoError on write failures.
PlotFiles emit_plots(const Trajectory& estimate, const Trajectory& truth, const EvalReport& report,
                     const std::vector<SeedOutcome>& seeds, const std::filesystem::path& out_dir);

}  // namespace priorvo
