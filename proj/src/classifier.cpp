#include "srspin/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "srspin/constants.hpp"
#include "srspin/rng.hpp"

namespace srspin::classify {

namespace {

struct Gauss {
  Vec2 mean;
  Mat2 inv;
  double log_norm = 0.0;  // log of the weight times the normalization
};

Gauss prepare(const Component& c) {
  Gauss g;
  g.mean = c.mean;
  g.inv = c.cov.inverse();
  g.log_norm = std::log(c.weight) - std::log(constants::two_pi) - 0.5 * std::log(c.cov.determinant());
  return g;
}

double log_weighted(const Gauss& g, const Vec2& x) {
  const Vec2 d = x - g.mean;
  return g.log_norm - 0.5 * d.dot(g.inv * d);
}

Mat2 floor_cov(const Mat2& c, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (c + c.transpose()));
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double min_eig(const Mat2& c) { return Eigen::SelfAdjointEigenSolver<Mat2>(c).eigenvalues()[0]; }

void sort_and_label(MixtureModel& m, const GmmOptions& opt) {
  const Vec2 axis = opt.separation_axis.normalized();
  std::stable_sort(m.comps.begin(), m.comps.end(),
                   [&](const Component& a, const Component& b) { return a.mean.dot(axis) > b.mean.dot(axis); });
  m.separation_axis = axis;
  m.labels = region_labels(m.K());
  m.degenerate = false;
  m.warnings.clear();
  for (int k = 0; k < m.K(); ++k) {
    const auto& c = m.comps[static_cast<std::size_t>(k)];
    if (c.weight < opt.min_weight) {
      m.degenerate = true;
      m.warnings.push_back("component " + std::to_string(k) + " has weight " + std::to_string(c.weight));
    }
    if (min_eig(c.cov) <= opt.cov_floor * (1.0 + 1e-9)) {
      m.degenerate = true;
      m.warnings.push_back("component " + std::to_string(k) + " covariance at the floor");
    }
  }
  if (!m.converged) m.warnings.push_back("EM stopped at max_iter before convergence");
}

MixtureModel run_em(std::span<const Vec2> pts, std::vector<Component> comps, const GmmOptions& opt) {
  const std::size_t N = pts.size();
  const int K = static_cast<int>(comps.size());
  MixtureModel m;
  m.n_points = N;
  std::vector<double> resp(N * static_cast<std::size_t>(K));
  std::vector<Gauss> g(static_cast<std::size_t>(K));
  for (int it = 0; it < opt.max_iter; ++it) {
    for (int k = 0; k < K; ++k) g[static_cast<std::size_t>(k)] = prepare(comps[static_cast<std::size_t>(k)]);
    double ll = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double* r = &resp[i * static_cast<std::size_t>(K)];
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        r[k] = log_weighted(g[static_cast<std::size_t>(k)], pts[i]);
        mx = std::max(mx, r[k]);
      }
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += (r[k] = std::exp(r[k] - mx));
      for (int k = 0; k < K; ++k) r[k] /= s;
      ll += mx + std::log(s);
    }
    if (!m.ll_history.empty() && ll < m.ll_history.back() - 1e-10 * std::max(1.0, std::abs(m.ll_history.back()))) {
      m.monotone = false;
    }
    m.ll_history.push_back(ll);
    m.iterations = it;
    const auto h = m.ll_history.size();
    if (h > static_cast<std::size_t>(opt.window) &&
        (ll - m.ll_history[h - 1 - static_cast<std::size_t>(opt.window)]) / static_cast<double>(N) < opt.tol) {
      m.converged = true;
      break;
    }
    for (int k = 0; k < K; ++k) {
      double nk = 0.0;
      Vec2 mu = Vec2::Zero();
      for (std::size_t i = 0; i < N; ++i) {
        const double r = resp[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)];
        nk += r;
        mu += r * pts[i];
      }
      auto& c = comps[static_cast<std::size_t>(k)];
      if (nk <= 1e-12) {
        c.weight = 1e-300;  // emptied out; reported as degenerate
        continue;
      }
      mu /= nk;
      Mat2 cov = Mat2::Zero();
      for (std::size_t i = 0; i < N; ++i) {
        const Vec2 d = pts[i] - mu;
        cov += resp[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)] * (d * d.transpose());
      }
      c.weight = nk / static_cast<double>(N);
      c.mean = mu;
      c.cov = floor_cov(cov / nk, opt.cov_floor);
    }
  }
  m.log_likelihood = m.ll_history.back();
  m.comps = std::move(comps);
  return m;
}

Mat2 sample_cov(std::span<const Vec2> pts, const Vec2& mean) {
  Mat2 c = Mat2::Zero();
  for (const auto& p : pts) c += (p - mean) * (p - mean).transpose();
  return c / static_cast<double>(pts.size());
}

std::vector<Component> seed_components(std::span<const Vec2> pts, int K, Engine& rng, const GmmOptions& opt,
                                       const std::vector<std::size_t>& candidates, const Mat2& global_cov) {
  std::vector<Vec2> centers;
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  centers.push_back(pts[candidates[pick(rng)]]);
  std::vector<double> dmin(candidates.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < K) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      dmin[j] = std::min(dmin[j], (pts[candidates[j]] - centers.back()).squaredNorm());
      if (dmin[j] > best_d) {
        best_d = dmin[j];
        best = j;
      }
    }
    centers.push_back(pts[candidates[best]]);
  }
  std::vector<std::vector<Vec2>> groups(static_cast<std::size_t>(K));
  for (const auto& p : pts) {
    int bk = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double d = (p - centers[static_cast<std::size_t>(k)]).squaredNorm();
      if (d < bd) {
        bd = d;
        bk = k;
      }
    }
    groups[static_cast<std::size_t>(bk)].push_back(p);
  }
  std::vector<Component> comps(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& gk = groups[static_cast<std::size_t>(k)];
    auto& c = comps[static_cast<std::size_t>(k)];
    c.weight = std::max<double>(gk.size(), 1.0) / static_cast<double>(pts.size());
    if (gk.size() >= 3) {
      c.mean = std::accumulate(gk.begin(), gk.end(), Vec2(Vec2::Zero())) / static_cast<double>(gk.size());
      c.cov = floor_cov(sample_cov(gk, c.mean), opt.cov_floor);
    } else {
      c.mean = centers[static_cast<std::size_t>(k)];
      c.cov = floor_cov(global_cov / static_cast<double>(K * K), opt.cov_floor);
    }
  }
  const double wsum = std::accumulate(comps.begin(), comps.end(), 0.0,
                                      [](double s, const Component& c) { return s + c.weight; });
  for (auto& c : comps) c.weight /= wsum;
  return comps;
}

}  // namespace

std::string RegionLabel::name() const {
  std::string s;
  for (std::size_t i = 0; i < members.size(); ++i) s += (i ? "+" : "") + members[i].str();
  return s;
}

bool RegionLabel::contains(HalfInt m) const {
  return std::find(members.begin(), members.end(), m.abs()) != members.end();
}

std::vector<RegionLabel> region_labels(int K, HalfInt F) {
  std::vector<HalfInt> abs_values;
  for (int tw = F.twice; tw >= 0; tw -= 2) abs_values.push_back(HalfInt(tw));
  const int n_abs = static_cast<int>(abs_values.size());
  if (K < 1 || K > n_abs) throw std::invalid_argument("region_labels: K must lie in [1, number of |m| values]");
  std::vector<RegionLabel> out(static_cast<std::size_t>(K));
  for (int i = 0; i < n_abs; ++i) out[static_cast<std::size_t>(std::min(i, K - 1))].members.push_back(abs_values[static_cast<std::size_t>(i)]);
  return out;
}

double MixtureModel::weighted_density(int k, const Vec2& x) const {
  return std::exp(log_weighted(prepare(comps[static_cast<std::size_t>(k)]), x));
}

int MixtureModel::assign(const Vec2& x) const {
  int best = 0;
  double bv = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K(); ++k) {
    const double v = log_weighted(prepare(comps[static_cast<std::size_t>(k)]), x);
    if (v > bv) {  // strict: equal densities keep the earlier, larger-|m| region
      bv = v;
      best = k;
    }
  }
  return best;
}

Eigen::VectorXd MixtureModel::responsibilities(const Vec2& x) const {
  Eigen::VectorXd r(K());
  for (int k = 0; k < K(); ++k) r[k] = log_weighted(prepare(comps[static_cast<std::size_t>(k)]), x);
  r = (r.array() - r.maxCoeff()).exp();
  return r / r.sum();
}

void MixtureModel::validate() const {
  if (comps.empty()) throw std::invalid_argument("mixture model has no components");
  double s = 0.0;
  for (const auto& c : comps) {
    if (!(c.weight > 0.0 && c.weight < 1.0 + 1e-12)) throw std::invalid_argument("mixture weight outside (0, 1)");
    if (!(min_eig(c.cov) > 0.0)) throw std::invalid_argument("mixture covariance not positive definite");
    s += c.weight;
  }
  if (std::abs(s - 1.0) > 1e-10) throw std::invalid_argument("mixture weights do not sum to 1");
  if (labels.size() != comps.size()) throw std::invalid_argument("mixture model has no label map");
}

MixtureModel fit_gmm(std::span<const Vec2> points, int K, std::uint64_t seed, const GmmOptions& opt) {
  if (K < 1) throw std::invalid_argument("fit_gmm: K must be >= 1");
  if (static_cast<std::size_t>(K) > points.size()) throw std::invalid_argument("fit_gmm: more components than points");
  if (points.size() < static_cast<std::size_t>(50 * K)) {
    throw std::invalid_argument("fit_gmm: need at least 50 points per component (" + std::to_string(50 * K) + ")");
  }
  if (opt.n_init < 1) throw std::invalid_argument("fit_gmm: n_init must be >= 1");

  const Vec2 gmean = std::accumulate(points.begin(), points.end(), Vec2(Vec2::Zero())) / static_cast<double>(points.size());
  const Mat2 gcov = floor_cov(sample_cov(points, gmean), opt.cov_floor);
  // seeds come from the central 99% (Mahalanobis) so isolated outliers do not
  // become components of their own
  std::vector<double> d2(points.size());
  const Mat2 ginv = gcov.inverse();
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = (points[i] - gmean).dot(ginv * (points[i] - gmean));
  std::vector<double> sorted = d2;
  const std::size_t q = std::min(sorted.size() - 1, static_cast<std::size_t>(0.99 * static_cast<double>(sorted.size())));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(q), sorted.end());
  const double cut = sorted[q];
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (d2[i] <= cut) candidates.push_back(i);

  std::vector<MixtureModel> runs(static_cast<std::size_t>(opt.n_init));
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < opt.n_init; ++r) {
    Engine rng = make_engine(seed, static_cast<std::uint64_t>(r));
    auto init = seed_components(points, K, rng, opt, candidates, gcov);
    runs[static_cast<std::size_t>(r)] = run_em(points, std::move(init), opt);
    sort_and_label(runs[static_cast<std::size_t>(r)], opt);
  }
  // best log-likelihood, preferring non-degenerate fits; ties keep the lower restart
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const auto& a = runs[r];
    const auto& b = runs[best];
    if ((!a.degenerate && b.degenerate) || (a.degenerate == b.degenerate && a.log_likelihood > b.log_likelihood)) best = r;
  }
  return std::move(runs[best]);
}

MixtureModel refine_gmm(std::span<const Vec2> points, const MixtureModel& start, const GmmOptions& opt) {
  if (points.size() < start.comps.size()) throw std::invalid_argument("refine_gmm: more components than points");
  MixtureModel m = run_em(points, start.comps, opt);
  GmmOptions o = opt;
  o.separation_axis = start.separation_axis;
  sort_and_label(m, o);
  return m;
}

// --- fidelity ------------------------------------------------------------------

namespace {

struct RegionAccum {
  std::vector<double> g, g2, fp, miss;
  explicit RegionAccum(int K) : g(K, 0.0), g2(K, 0.0), fp(K, 0.0), miss(K, 0.0) {}
  void add(const RegionAccum& o) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k] += o.g[k];
      g2[k] += o.g2[k];
      fp[k] += o.fp[k];
      miss[k] += o.miss[k];
    }
  }
};

// Contribution of one point with responsibilities r and cell c (unit weight).
void accumulate(RegionAccum& acc, const double* r, int c, int K, double w) {
  for (int k = 0; k < K; ++k) {
    const double fp = (c == k) ? (1.0 - r[k]) : 0.0;
    const double miss = (c != k) ? r[k] : 0.0;
    const double g = fp + miss;
    acc.fp[k] += w * fp;
    acc.miss[k] += w * miss;
    acc.g[k] += w * g;
    acc.g2[k] += w * g * g;
  }
}

int cell_and_resp(const std::vector<Gauss>& gs, const Vec2& x, double* r) {
  const int K = static_cast<int>(gs.size());
  int c = 0;
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    r[k] = log_weighted(gs[static_cast<std::size_t>(k)], x);
    if (r[k] > mx) {
      mx = r[k];
      c = k;
    }
  }
  double s = 0.0;
  for (int k = 0; k < K; ++k) s += (r[k] = std::exp(r[k] - mx));
  for (int k = 0; k < K; ++k) r[k] /= s;
  return c;
}

FidelityReport make_report(const MixtureModel& model, const RegionAccum& acc, double total, const FidelityOptions& opt) {
  FidelityReport rep;
  const Vec2 axis = model.separation_axis.normalized();
  for (int k = 0; k < model.K(); ++k) {
    const auto& c = model.comps[static_cast<std::size_t>(k)];
    RegionReport r;
    r.name = model.labels[static_cast<std::size_t>(k)].name();
    r.weight = c.weight;
    const double mean_g = acc.g[static_cast<std::size_t>(k)] / total;
    r.fidelity = std::clamp(1.0 - mean_g / c.weight, 0.0, 1.0);
    r.false_positive = acc.fp[static_cast<std::size_t>(k)] / total / c.weight;
    r.missed = acc.miss[static_cast<std::size_t>(k)] / total / c.weight;
    const double var = std::max(0.0, acc.g2[static_cast<std::size_t>(k)] / total - mean_g * mean_g);
    r.mc_stderr = std::sqrt(var / total) / c.weight;
    r.center = c.mean;
    r.distance = (c.mean - opt.tweezer).norm();
    r.projection = (c.mean - opt.tweezer).dot(axis);
    Eigen::SelfAdjointEigenSolver<Mat2> es(c.cov);
    r.sigma_minor = std::sqrt(es.eigenvalues()[0]);
    r.sigma_major = std::sqrt(es.eigenvalues()[1]);
    rep.regions.push_back(r);
  }
  return rep;
}

}  // namespace

FidelityReport fidelity(const MixtureModel& model, std::uint64_t seed, const FidelityOptions& opt) {
  model.validate();
  const int K = model.K();
  std::vector<Gauss> gs;
  std::vector<Mat2> chol;
  std::vector<double> weights;
  for (const auto& c : model.comps) {
    gs.push_back(prepare(c));
    chol.push_back(c.cov.llt().matrixL());
    weights.push_back(c.weight);
  }
  constexpr std::size_t kChunk = 1 << 16;
  RegionAccum total(K);
  std::size_t n_done = 0;
  std::size_t target = std::max<std::size_t>(opt.min_samples, kChunk);
  FidelityReport rep;
  while (true) {
    const std::size_t first_chunk = n_done / kChunk;
    const std::size_t n_chunks = (target - n_done + kChunk - 1) / kChunk;
    std::vector<RegionAccum> parts(n_chunks, RegionAccum(K));
#pragma omp parallel for schedule(static)
    for (long ci = 0; ci < static_cast<long>(n_chunks); ++ci) {
      Engine rng = make_engine(seed, first_chunk + static_cast<std::size_t>(ci));
      std::discrete_distribution<int> comp(weights.begin(), weights.end());
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<double> r(static_cast<std::size_t>(K));
      auto& acc = parts[static_cast<std::size_t>(ci)];
      for (std::size_t s = 0; s < kChunk; ++s) {
        const int j = comp(rng);
        const Vec2 z(gauss(rng), gauss(rng));
        const Vec2 x = model.comps[static_cast<std::size_t>(j)].mean + chol[static_cast<std::size_t>(j)] * z;
        const int c = cell_and_resp(gs, x, r.data());
        accumulate(acc, r.data(), c, K, 1.0);
      }
    }
    for (const auto& p : parts) total.add(p);  // chunk order: deterministic
    n_done += n_chunks * kChunk;
    rep = make_report(model, total, static_cast<double>(n_done), opt);
    const bool ok = std::all_of(rep.regions.begin(), rep.regions.end(),
                                [&](const RegionReport& r) { return r.mc_stderr < opt.target_stderr; });
    if (ok || n_done >= opt.max_samples) break;
    target = std::min(opt.max_samples, 2 * n_done);
  }
  rep.samples = n_done;
  rep.seed = seed;
  return rep;
}

FidelityReport fidelity_grid(const MixtureModel& model, int resolution, const FidelityOptions& opt) {
  model.validate();
  const int K = model.K();
  std::vector<Gauss> gs;
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const auto& c : model.comps) {
    gs.push_back(prepare(c));
    const double s = 9.0 * std::sqrt(Eigen::SelfAdjointEigenSolver<Mat2>(c.cov).eigenvalues()[1]);
    lo = lo.cwiseMin(c.mean - Vec2::Constant(s));
    hi = hi.cwiseMax(c.mean + Vec2::Constant(s));
  }
  const double side = (hi - lo).maxCoeff();
  const double h = side / resolution;
  RegionAccum acc(K);
  std::vector<double> r(static_cast<std::size_t>(K));
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      const Vec2 x = lo + Vec2((i + 0.5) * h, (j + 0.5) * h);
      double mix = 0.0;
      for (const auto& g : gs) mix += std::exp(log_weighted(g, x));
      if (mix == 0.0) continue;
      const int c = cell_and_resp(gs, x, r.data());
      accumulate(acc, r.data(), c, K, mix * h * h);
    }
  }
  FidelityReport rep = make_report(model, acc, 1.0, opt);
  for (auto& reg : rep.regions) reg.mc_stderr = 0.0;
  rep.samples = static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution);
  return rep;
}

BootstrapResult bootstrap_errors(std::span<const Vec2> points, const MixtureModel& base, int n_resamples,
                                 std::uint64_t seed, const GmmOptions& opt, std::size_t fidelity_samples) {
  if (n_resamples < 100) throw std::invalid_argument("bootstrap_errors: need at least 100 resamples");
  base.validate();
  const int K = base.K();
  std::vector<int> perm0(static_cast<std::size_t>(K));
  std::iota(perm0.begin(), perm0.end(), 0);

  std::vector<std::vector<double>> fids(static_cast<std::size_t>(n_resamples));
  std::vector<char> failed(static_cast<std::size_t>(n_resamples), 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (int b = 0; b < n_resamples; ++b) {
    Engine rng = make_engine(seed, static_cast<std::uint64_t>(b));
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    std::vector<Vec2> sample(points.size());
    for (auto& p : sample) p = points[pick(rng)];
    try {
      const MixtureModel m = refine_gmm(sample, base, opt);
      if (m.degenerate) throw std::runtime_error("degenerate refit");
      // permutation of refit components minimizing summed distance to the base means
      std::vector<int> perm = perm0, best_perm = perm0;
      double best = std::numeric_limits<double>::infinity();
      do {
        double d = 0.0;
        for (int k = 0; k < K; ++k)
          d += (m.comps[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])].mean - base.comps[static_cast<std::size_t>(k)].mean).norm();
        if (d < best) {
          best = d;
          best_perm = perm;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
      FidelityOptions fo;
      fo.min_samples = fo.max_samples = fidelity_samples;
      const auto rep = fidelity(m, stream_seed(seed, static_cast<std::uint64_t>(b), 1), fo);
      std::vector<double> f(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) f[static_cast<std::size_t>(k)] = rep.regions[static_cast<std::size_t>(best_perm[static_cast<std::size_t>(k)])].fidelity;
      fids[static_cast<std::size_t>(b)] = std::move(f);
    } catch (const std::exception&) {
      failed[static_cast<std::size_t>(b)] = 1;
    }
  }
  BootstrapResult res;
  res.resamples = n_resamples;
  res.failures = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
  if (res.failures * 10 > n_resamples) {
    throw std::runtime_error("bootstrap_errors: " + std::to_string(res.failures) + " of " +
                             std::to_string(n_resamples) + " refits failed");
  }
  res.stderr_fidelity.assign(static_cast<std::size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    double s = 0.0, s2 = 0.0, n = 0.0;
    for (int b = 0; b < n_resamples; ++b) {
      if (failed[static_cast<std::size_t>(b)]) continue;
      const double f = fids[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
      s += f;
      s2 += f * f;
      n += 1.0;
    }
    const double mean = s / n;
    res.stderr_fidelity[static_cast<std::size_t>(k)] = std::sqrt(std::max(0.0, (s2 - n * mean * mean) / (n - 1.0)));
  }
  return res;
}

nlohmann::json to_json(const MixtureModel& m) {
  nlohmann::json comps = nlohmann::json::array();
  for (int k = 0; k < m.K(); ++k) {
    const auto& c = m.comps[static_cast<std::size_t>(k)];
    comps.push_back({{"label", m.labels[static_cast<std::size_t>(k)].name()},
                     {"weight", c.weight},
                     {"mean_m", {c.mean.x(), c.mean.y()}},
                     {"cov_m2", {c.cov(0, 0), c.cov(0, 1), c.cov(1, 1)}}});
  }
  return {{"components", comps},
          {"separation_axis", {m.separation_axis.x(), m.separation_axis.y()}},
          {"log_likelihood", m.log_likelihood},
          {"iterations", m.iterations},
          {"converged", m.converged},
          {"monotone", m.monotone},
          {"degenerate", m.degenerate},
          {"warnings", m.warnings},
          {"n_points", m.n_points}};
}

nlohmann::json to_json(const FidelityReport& r) {
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& g : r.regions) {
    regions.push_back({{"label", g.name},
                       {"weight", g.weight},
                       {"fidelity", g.fidelity},
                       {"mc_stderr", g.mc_stderr},
                       {"bootstrap_stderr", std::isfinite(g.bootstrap_stderr) ? nlohmann::json(g.bootstrap_stderr) : nlohmann::json()},
                       {"false_positive", g.false_positive},
                       {"missed", g.missed},
                       {"center_m", {g.center.x(), g.center.y()}},
                       {"distance_m", g.distance},
                       {"projection_m", g.projection},
                       {"sigma_major_m", g.sigma_major},
                       {"sigma_minor_m", g.sigma_minor}});
  }
  return {{"regions", regions}, {"samples", r.samples}, {"seed", r.seed}};
}

}  // namespace srspin::classify
