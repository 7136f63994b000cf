#include "priorvo/plots.hpp"

#include "priorvo/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace priorvo {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string polyline(const std::vector<Vec3>& pts, double x0, double z0, double scale, double height,
                     const char* colour) {
  std::string s = fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.5" points=")", colour);
  for (const Vec3& p : pts) s += fmt::format("{:.2f},{:.2f} ", (p.x() - x0) * scale + 20, height - 20 - (p.z() - z0) * scale);
  s += "\"/>\n";
  return s;
}

}  // namespace

std::vector<ConvergenceRow> convergence_curve(const std::vector<SeedOutcome>& seeds, int max_updates) {
  if (max_updates <= 0) {
    max_updates = 1;
    for (const SeedOutcome& s : seeds) max_updates = std::max(max_updates, s.updates);
  }
  std::size_t n_prior = 0, n_avg = 0;
  for (const SeedOutcome& s : seeds) (s.init == SeedInit::kPrior ? n_prior : n_avg)++;
  std::vector<ConvergenceRow> rows;
  for (int u = 1; u <= max_updates; ++u) {
    std::size_t cp = 0, ca = 0;
    for (const SeedOutcome& s : seeds)
      if (s.converged && s.updates <= u) (s.init == SeedInit::kPrior ? cp : ca)++;
    rows.push_back({u, n_prior ? double(cp) / n_prior : 0.0, n_avg ? double(ca) / n_avg : 0.0});
  }
  return rows;
}

void write_convergence_csv(const std::vector<ConvergenceRow>& rows, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "updates,frac_converged_prior,frac_converged_average\n";
  for (const ConvergenceRow& r : rows) out << fmt::format("{},{:.6f},{:.6f}\n", r.updates, r.frac_prior, r.frac_average);
  finish(out, path);
}

void write_seed_outcomes(const std::vector<SeedOutcome>& seeds, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "seed_id,init,updates,converged\n";
  for (const SeedOutcome& s : seeds)
    out << fmt::format("{},{},{},{}\n", s.seed_id, s.init == SeedInit::kPrior ? "prior" : "average", s.updates,
                       s.converged ? 1 : 0);
  finish(out, path);
}

std::vector<SeedOutcome> read_seed_outcomes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SeedOutcome> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    SeedOutcome s;
    std::string init;
    int conv = 0;
    if (!(ss >> s.seed_id >> init >> s.updates >> conv) || (init != "prior" && init != "average"))
      throw ParseError("expected seed_id,init,updates,converged", n);
    s.init = init == "prior" ? SeedInit::kPrior : SeedInit::kAverage;
    s.converged = conv != 0;
    out.push_back(s);
  }
  return out;
}

PlotFiles emit_plots(const Trajectory& estimate, const Trajectory& truth, const EvalReport& report,
                     const std::vector<SeedOutcome>& seeds, const fs::path& out_dir) {
  if (estimate.empty() || truth.empty() || report.matched == 0)
    throw EvaluationError("nothing to plot: empty trajectory");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  PlotFiles files{out_dir / "trajectory_xz.svg", out_dir / "ate_errors.csv", out_dir / "seed_convergence.csv"};

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, z0 = x0, z1 = -x0;
  for (const auto* set : {&report.aligned_estimate, &report.truth_positions})
    for (const Vec3& p : *set) {
      x0 = std::min(x0, p.x());
      x1 = std::max(x1, p.x());
      z0 = std::min(z0, p.z());
      z1 = std::max(z1, p.z());
    }
  const double span = std::max({x1 - x0, z1 - z0, 1e-6});
  const double size = 600.0;
  const double scale = (size - 40) / span;
  {
    std::ofstream out = open_out(files.svg);
    out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">)",
                       size)
        << "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << polyline(report.truth_positions, x0, z0, scale, size, "#444444");
    out << polyline(report.aligned_estimate, x0, z0, scale, size, "#d62728");
    out << fmt::format(
        R"(<text x="20" y="16" font-family="sans-serif" font-size="12">top-down x/z, ATE {:.4f} m, scale {:.4f}</text>)",
        report.ate_rmse, report.scale);
    out << "\n</svg>\n";
    finish(out, files.svg);
  }
  {
    std::ofstream out = open_out(files.errors_csv);
    out << "timestamp,error\n";
    for (std::size_t i = 0; i < report.errors.size(); ++i)
      out << fmt::format("{:.9g},{:.9g}\n", report.timestamps[i], report.errors[i]);
    finish(out, files.errors_csv);
  }
  write_convergence_csv(convergence_curve(seeds), files.convergence_csv);
  return files;
}

}  // namespace priorvo
