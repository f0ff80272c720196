#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "srspin/half_int.hpp"

// |m_F| region assignment from atom locations: Gaussian mixture by EM,
// highest-density cells, overlap fidelities and bootstrap errors.
namespace srspin::classify {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Component {
  double weight = 0.0;
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
};

/// Region k holds the |m_F| values in `members`; region 0 has the largest |m_F|.
struct RegionLabel {
  std::vector<HalfInt> members;
  std::string name() const;
  bool contains(HalfInt m) const;
};

/// Region labels for K components of spin F: the K-1 largest |m| get their own
/// region, the rest are merged into the last one.
std::vector<RegionLabel> region_labels(int K, HalfInt F = kSr87Spin);

struct GmmOptions {
  Vec2 separation_axis = Vec2::UnitY();
  int n_init = 10;
  double tol = 1e-8;  // log-likelihood change per point over `window` iterations
  int window = 5;
  int max_iter = 2000;
  double cov_floor = 1e-16;  // m^2, on covariance eigenvalues
  double min_weight = 1e-3;
};

struct MixtureModel {
  std::vector<Component> comps;  // sorted by descending projection on the separation axis
  std::vector<RegionLabel> labels;
  Vec2 separation_axis = Vec2::UnitY();
  double log_likelihood = 0.0;
  std::vector<double> ll_history;  // best restart
  int iterations = 0;
  bool converged = false;
  bool monotone = true;  // log-likelihood never decreased (best restart)
  bool degenerate = false;
  std::vector<std::string> warnings;
  std::size_t n_points = 0;

  int K() const { return static_cast<int>(comps.size()); }
  double weighted_density(int k, const Vec2& x) const;
  /// Region of the largest weighted density; ties go to the larger |m_F|.
  int assign(const Vec2& x) const;
  /// Posterior component probabilities at x.
  Eigen::VectorXd responsibilities(const Vec2& x) const;
  void validate() const;
};

/// Best of n_init seeded EM runs with full covariances.
MixtureModel fit_gmm(std::span<const Vec2> points, int K, std::uint64_t seed, const GmmOptions& opt = {});

/// EM from a given starting model (no restarts, no reseeding).
MixtureModel refine_gmm(std::span<const Vec2> points, const MixtureModel& start, const GmmOptions& opt = {});

struct RegionReport {
  std::string name;
  double weight = 0.0;
  double fidelity = 0.0;
  double mc_stderr = 0.0;
  double bootstrap_stderr = std::numeric_limits<double>::quiet_NaN();
  double false_positive = 0.0;  // mass of other components inside the cell, / weight
  double missed = 0.0;          // own mass outside the cell, / weight
  Vec2 center = Vec2::Zero();
  double distance = 0.0;    // |center - tweezer|
  double projection = 0.0;  // (center - tweezer) . separation axis
  double sigma_major = 0.0;
  double sigma_minor = 0.0;
};

struct FidelityReport {
  std::vector<RegionReport> regions;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

struct FidelityOptions {
  std::size_t min_samples = 1'000'000;
  std::size_t max_samples = 32'000'000;
  double target_stderr = 1e-4;
  Vec2 tweezer = Vec2::Zero();
};

/// fidelity_k = 1 - [ mass of other components in cell k + own mass outside
/// cell k ] / w_k, by Monte Carlo over the mixture with the component label
/// integrated out (responsibility weighting). Doubles the sample count until
/// every region's standard error is below target.
FidelityReport fidelity(const MixtureModel& model, std::uint64_t seed, const FidelityOptions& opt = {});

/// Same quantities by midpoint quadrature on a square grid; cross-check only.
FidelityReport fidelity_grid(const MixtureModel& model, int resolution = 1500, const FidelityOptions& opt = {});

struct BootstrapResult {
  std::vector<double> stderr_fidelity;  // per region
  int resamples = 0;
  int failures = 0;
};

/// Resamples points, refits from `base` and recomputes fidelities; components
/// are matched to `base` by the permutation minimizing summed mean distance.
BootstrapResult bootstrap_errors(std::span<const Vec2> points, const MixtureModel& base, int n_resamples,
                                 std::uint64_t seed, const GmmOptions& opt = {},
                                 std::size_t fidelity_samples = 200'000);

nlohmann::json to_json(const MixtureModel& m);
nlohmann::json to_json(const FidelityReport& r);

}  // namespace srspin::classify
