#include "priorvo/depth_filter.hpp"

#include "priorvo/errors.hpp"

#include <cmath>
#include <numbers>

namespace priorvo {

DepthSeed init_seed_average(double d_avg, double d_min, const SeedAnchor& anchor, const Patch& patch,
                            const SeedInitParams& params) {
  if (!(d_avg > 0.0) || !(d_min > 0.0) || !(d_min <= d_avg) || !std::isfinite(d_avg))
    throw ContractViolation("average initialization needs 0 < d_min <= d_avg");
  DepthSeed s;
  s.a = params.a0;
  s.b = params.b0;
  s.mu = 1.0 / d_avg;
  const double six_dmin = 6.0 * d_min;
  s.sigma2 = 1.0 / (six_dmin * six_dmin);
  s.rho_range = 1.0 / d_min;
  s.anchor = anchor;
  s.patch = patch;
  s.init = SeedInit::kAverage;
  return s;
}

std::optional<DepthSeed> init_seed_prior(double d_prior, const SeedAnchor& anchor, const Patch& patch,
                                         std::optional<double> scene_rho_range, const SeedInitParams& params) {
  if (!std::isfinite(d_prior) || !(d_prior > 0.0)) return std::nullopt;
  DepthSeed s;
  s.a = params.a0;
  s.b = params.b0;
  s.mu = 1.0 / d_prior;
  const double six_d = 6.0 * d_prior;
  s.sigma2 = 1.0 / (six_d * six_d);
  s.rho_range = scene_rho_range && *scene_rho_range > 0.0 ? *scene_rho_range : 1.0 / d_prior;
  s.anchor = anchor;
  s.patch = patch;
  s.init = SeedInit::kPrior;
  return s;
}

SearchInterval search_interval(const DepthSeed& seed) {
  const double sigma = std::sqrt(seed.sigma2);
  const double far = seed.mu - sigma;
  return {far < 0.0 ? kInverseDepthFloor : far, seed.mu + sigma};
}

namespace {

struct Responsibilities {
  double inlier;
  double outlier;
};

Responsibilities responsibilities(const DepthSeed& seed, const Measurement& m) {
  // Evidence of each component after integrating out rho and gamma.
  const double var = seed.sigma2 + m.tau2;
  const double diff = m.rho - seed.mu;
  const double log_normal = -0.5 * diff * diff / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
  const double log_c1 = std::log(seed.a / (seed.a + seed.b)) + log_normal;
  const double log_c2 = std::log(seed.b / (seed.a + seed.b)) - std::log(seed.rho_range);
  const double top = std::max(log_c1, log_c2);
  const double e1 = std::exp(log_c1 - top);
  const double e2 = std::exp(log_c2 - top);
  return {e1 / (e1 + e2), e2 / (e1 + e2)};
}

}  // namespace

double inlier_responsibility(const DepthSeed& seed, const Measurement& m) {
  return responsibilities(seed, m).inlier;
}

DepthSeed update_seed(const DepthSeed& seed, const Measurement& m) {
  const auto [c1, c2] = responsibilities(seed, m);

  // Gaussian product for the inlier branch.
  const double s2 = 1.0 / (1.0 / seed.sigma2 + 1.0 / m.tau2);
  const double mean = s2 * (seed.mu / seed.sigma2 + m.rho / m.tau2);

  const double a = seed.a;
  const double b = seed.b;
  const double n = a + b;
  const double f = c1 * (a + 1.0) / (n + 1.0) + c2 * a / (n + 1.0);
  const double e = c1 * (a + 1.0) * (a + 2.0) / ((n + 1.0) * (n + 2.0)) + c2 * a * (a + 1.0) / ((n + 1.0) * (n + 2.0));

  DepthSeed out = seed;
  out.mu = c1 * mean + c2 * seed.mu;
  // Central form avoids cancellation in E[rho^2] - E[rho]^2.
  const double dm1 = mean - out.mu;
  const double dm0 = seed.mu - out.mu;
  out.sigma2 = c1 * (s2 + dm1 * dm1) + c2 * (seed.sigma2 + dm0 * dm0);
  if (!(out.sigma2 >= kVarianceFloor)) {
    out.sigma2 = kVarianceFloor;
    out.variance_clamped = true;
  }
  // Beta(a', b') with mean f and second moment e.
  out.a = (e - f) / (f - e / f);
  out.b = out.a * (1.0 - f) / f;
  out.update_count = seed.update_count + 1;
  return out;
}

bool is_converged(const DepthSeed& seed, double threshold_ratio) {
  if (!(threshold_ratio > 0.0)) throw ContractViolation("convergence ratio must be positive");
  return std::sqrt(seed.sigma2) < threshold_ratio * seed.rho_range;
}

}  // namespace priorvo
