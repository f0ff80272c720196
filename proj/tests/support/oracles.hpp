#pragma once

// Independent closed-form references used by the unit and acceptance tests.
// Nothing here calls into the library.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Wigner small-d element d^j_{m' m}(beta) from the explicit sum; arguments
/// are twice the quantum numbers.
inline double wigner_d(int tj, int tmp, int tm, double beta) {
  const int jpm = (tj + tm) / 2, jmm = (tj - tm) / 2, jpmp = (tj + tmp) / 2, jmmp = (tj - tmp) / 2;
  const int dm = (tmp - tm) / 2;
  const double pref = std::sqrt(factorial(jpmp) * factorial(jmmp) * factorial(jpm) * factorial(jmm));
  const double c = std::cos(beta / 2), s = std::sin(beta / 2);
  double sum = 0.0;
  for (int k = std::max(0, -dm); k <= std::min(jpm, jmmp); ++k) {
    const double den = factorial(jpm - k) * factorial(k) * factorial(dm + k) * factorial(jmmp - k);
    const double sign = ((dm + k) % 2 == 0) ? 1.0 : -1.0;
    sum += sign / den * std::pow(c, tj - 2 * k - dm) * std::pow(s, 2 * k + dm);
  }
  return pref * sum;
}

/// Populations over m' = +j ... -j after rotating |j, m> by a rotation whose
/// image of z has polar angle beta.
inline std::vector<double> rotated_populations(int tj, int tm, double beta) {
  std::vector<double> p;
  for (int tmp = tj; tmp >= -tj; tmp -= 2) p.push_back(std::pow(wigner_d(tj, tmp, tm, beta), 2));
  return p;
}

/// Standard normal CDF.
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// P(Gamma(n, scale) > x) for integer shape n, as a Poisson sum.
inline double gamma_tail(int n, double scale, double x) {
  if (x <= 0) return 1.0;
  const double y = x / scale;
  double term = std::exp(-y), sum = term;
  for (int k = 1; k < n; ++k) {
    term *= y / k;
    sum += term;
  }
  return sum;
}

/// P(Gamma(n, scale) + N(0, sigma) > x) by quadrature over the Gaussian.
inline double gamma_plus_gauss_tail(int n, double scale, double sigma, double x) {
  const int steps = 4000;
  const double lo = -10 * sigma, h = 20 * sigma / steps;
  double acc = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double z = lo + (i + 0.5) * h;
    const double w = std::exp(-0.5 * z * z / (sigma * sigma)) / (sigma * std::sqrt(2 * M_PI));
    acc += w * gamma_tail(n, scale, x - z) * h;
  }
  return acc;
}

struct Gaussian2 {
  double weight;
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
  double density(const Eigen::Vector2d& x) const {
    const Eigen::Vector2d d = x - mean;
    return weight * std::exp(-0.5 * d.dot(cov.inverse() * d)) / (2 * M_PI * std::sqrt(cov.determinant()));
  }
};

/// Labeled samples from the mixture, classified by largest weighted density;
/// returns 1 - (false positives + misses) / n_k per component.
inline std::vector<double> brute_force_fidelity(const std::vector<Gaussian2>& g, std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> w;
  for (const auto& c : g) w.push_back(c.weight);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t K = g.size();
  std::vector<double> fp(K, 0.0), miss(K, 0.0), count(K, 0.0);
  std::vector<Eigen::Matrix2d> L;
  for (const auto& c : g) L.push_back(c.cov.llt().matrixL());
  for (std::size_t i = 0; i < n; ++i) {
    const int k = pick(rng);
    const Eigen::Vector2d x = g[k].mean + L[k] * Eigen::Vector2d(z(rng), z(rng));
    std::size_t best = 0;
    double bd = -1.0;
    for (std::size_t j = 0; j < K; ++j) {
      const double d = g[j].density(x);
      if (d > bd) {
        bd = d;
        best = j;
      }
    }
    count[k] += 1;
    if (best != static_cast<std::size_t>(k)) {
      miss[k] += 1;
      fp[best] += 1;
    }
  }
  std::vector<double> f(K);
  for (std::size_t k = 0; k < K; ++k) f[k] = 1.0 - (fp[k] + miss[k]) / count[k];
  return f;
}

}  // namespace oracle
