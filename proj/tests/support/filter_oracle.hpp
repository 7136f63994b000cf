#pragma once

// Independent posterior moments for one depth-filter step by 2-D quadrature over (rho, gamma).
// The joint posterior is Beta(gamma | a, b) N(rho | mu, sigma2) times
// [gamma N(x | rho, tau2) + (1 - gamma) / rho_range]; nothing here reuses the closed form.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

struct Moments {
  double mean_rho, var_rho, mean_gamma, var_gamma;
};

struct Rule {
  std::vector<double> x, w;  // on [-1, 1]
};

inline Rule gauss_legendre(int n) {
  Rule r;
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5)), dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.x.push_back(z);
    r.w.push_back(2.0 / ((1.0 - z * z) * dp * dp));
  }
  return r;
}

// Double-exponential rule on (0, 1); handles the g^(a-1) (1-g)^(b-1) endpoint behaviour for fractional a, b.
// Returns nodes together with 1 - node computed without cancellation.
struct UnitRule {
  std::vector<double> x, xc, w;
};

inline UnitRule tanh_sinh(double h, double t_max) {
  UnitRule r;
  const double half_pi = 0.5 * std::numbers::pi;
  for (double t = -t_max; t <= t_max + 1e-12; t += h) {
    const double u = half_pi * std::sinh(t);
    const double c = std::cosh(u);
    r.x.push_back(1.0 / (1.0 + std::exp(-2.0 * u)));
    r.xc.push_back(1.0 / (1.0 + std::exp(2.0 * u)));
    r.w.push_back(0.5 * h * half_pi * std::cosh(t) / (c * c));
  }
  return r;
}

inline Moments posterior_moments(double a, double b, double mu, double sigma2, double rho_range, double x,
                                 double tau2) {
  static const Rule g8 = gauss_legendre(8);
  static const UnitRule ts = tanh_sinh(1.0 / 64.0, 4.0);

  // Integrand is separable per mixture branch, so the 2-D rule is the product of the two 1-D rules.
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  double B[3] = {0, 0, 0}, Bc[3] = {0, 0, 0};  // sum w beta(g) g^k and sum w beta(g) g^k (1 - g)
  for (std::size_t j = 0; j < ts.x.size(); ++j) {
    const double g = ts.x[j], gc = ts.xc[j];
    if (g <= 0.0 || gc <= 0.0) continue;
    const double wb = ts.w[j] * std::exp((a - 1) * std::log(g) + (b - 1) * std::log(gc) - log_beta);
    for (int k = 0; k < 3; ++k) {
      const double gk = std::pow(g, k);
      B[k] += wb * gk * g;
      Bc[k] += wb * gk * gc;
    }
  }

  // rho panels cover the prior and the inlier-branch posterior, each +-12 standard deviations.
  const double sigma = std::sqrt(sigma2);
  const double s2 = 1.0 / (1.0 / sigma2 + 1.0 / tau2);
  const double pm = s2 * (mu / sigma2 + x / tau2);
  std::vector<double> brk;
  for (int i = 0; i <= 400; ++i) brk.push_back(mu - 12 * sigma + 24 * sigma * i / 400.0);
  for (int i = 0; i <= 400; ++i) brk.push_back(pm - 12 * std::sqrt(s2) + 24 * std::sqrt(s2) * i / 400.0);
  std::sort(brk.begin(), brk.end());

  double In[3] = {0, 0, 0}, Iu[3] = {0, 0, 0};  // sum w prior inl rho^k and sum w prior uni rho^k
  for (std::size_t p = 0; p + 1 < brk.size(); ++p) {
    const double lo = brk[p], hi = brk[p + 1];
    if (hi - lo <= 0.0) continue;
    for (std::size_t k = 0; k < g8.x.size(); ++k) {
      const double rho = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g8.x[k];
      const double wr = 0.5 * (hi - lo) * g8.w[k];
      const double prior = std::exp(-0.5 * (rho - mu) * (rho - mu) / sigma2) / std::sqrt(2 * std::numbers::pi * sigma2);
      const double inl = std::exp(-0.5 * (x - rho) * (x - rho) / tau2) / std::sqrt(2 * std::numbers::pi * tau2);
      const double uni = 1.0 / rho_range;
      for (int q = 0; q < 3; ++q) {
        const double rq = std::pow(rho, q);
        In[q] += wr * prior * inl * rq;
        Iu[q] += wr * prior * uni * rq;
      }
    }
  }

  // gamma-moment k of the joint: B[k] pairs with the inlier branch, Bc[k] with the outlier branch.
  auto joint = [&](int rho_pow, int gamma_pow) { return B[gamma_pow] * In[rho_pow] + Bc[gamma_pow] * Iu[rho_pow]; };
  const double Z = joint(0, 0);
  const double er = joint(1, 0) / Z, eg = joint(0, 1) / Z;
  return {er, joint(2, 0) / Z - er * er, eg, joint(0, 2) / Z - eg * eg};
}

}  // namespace oracle
