#include "srspin/pipeline.hpp"

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "srspin/constants.hpp"
#include "srspin/rng.hpp"

namespace srspin::pipeline {

namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * constants::pi); }

}  // namespace

void AnalysisConfig::validate() const {
  if (!(binarize_k > 0.0)) throw std::invalid_argument("analysis.binarize_k must be > 0");
  if (!(sigma_major > 0.0 && sigma_minor > 0.0)) throw std::invalid_argument("analysis: kernel sigmas must be > 0");
  if (!(kernel_truncate > 0.0)) throw std::invalid_argument("analysis.kernel_truncate must be > 0");
  if (histogram_bins < 10) throw std::invalid_argument("analysis.histogram_bins must be >= 10");
  if (min_shots < 1) throw std::invalid_argument("analysis.min_shots must be >= 1");
  if (bootstrap < 0) throw std::invalid_argument("analysis.bootstrap must be >= 0");
}

int AnalysisConfig::effective_border() const {
  return border_band >= 0 ? border_band : static_cast<int>(std::lround(sigma_minor));
}

BinaryImage binarize(const camera::Frame& frame, const AnalysisConfig& cfg) {
  if (!frame.bias_corrected()) throw std::invalid_argument("binarize: frame is not bias-corrected");
  if (!(frame.params.readout_sigma > 0.0)) throw std::invalid_argument("binarize: frame has no readout_sigma");
  const double thr = cfg.binarize_k * frame.params.readout_sigma;
  BinaryImage out{frame.rows, frame.cols, std::vector<std::uint8_t>(frame.counts.size())};
  for (std::size_t i = 0; i < frame.counts.size(); ++i) out.data[i] = frame.counts[i] > thr ? 1 : 0;
  return out;
}

Kernel make_kernel(const AnalysisConfig& cfg) {
  Kernel k;
  k.half_width = static_cast<int>(std::floor(cfg.kernel_truncate * std::max(cfg.sigma_major, cfg.sigma_minor)));
  const int R = k.half_width;
  const int w = 2 * R + 1;
  k.weights.resize(static_cast<std::size_t>(w) * w);
  const double c = std::cos(cfg.kernel_angle), s = std::sin(cfg.kernel_angle);
  double sum = 0.0;
  for (int dr = -R; dr <= R; ++dr) {
    for (int dc = -R; dc <= R; ++dc) {
      const double a = c * dc + s * dr;   // along the major axis
      const double b = -s * dc + c * dr;  // along the minor axis
      const double v = std::exp(-0.5 * (a * a / (cfg.sigma_major * cfg.sigma_major) +
                                        b * b / (cfg.sigma_minor * cfg.sigma_minor)));
      k.weights[static_cast<std::size_t>(dr + R) * w + (dc + R)] = v;
      sum += v;
    }
  }
  for (double& v : k.weights) v /= sum;
  return k;
}

Image lowpass(const BinaryImage& in, const AnalysisConfig& cfg) {
  const Kernel k = make_kernel(cfg);
  const int R = k.half_width;
  const int w = 2 * R + 1;
  std::vector<std::vector<int>> ones(static_cast<std::size_t>(in.rows));
  for (int r = 0; r < in.rows; ++r)
    for (int c = 0; c < in.cols; ++c)
      if (in.at(r, c)) ones[static_cast<std::size_t>(r)].push_back(c);

  Image out{in.rows, in.cols, std::vector<double>(in.data.size(), 0.0)};
#pragma omp parallel for schedule(static)
  for (int r = 0; r < in.rows; ++r) {
    double* o = out.data.data() + static_cast<std::size_t>(r) * in.cols;
    const int r_lo = std::max(0, r - R), r_hi = std::min(in.rows - 1, r + R);
    for (int r0 = r_lo; r0 <= r_hi; ++r0) {
      const double* krow = k.weights.data() + static_cast<std::size_t>(r - r0 + R) * w;
      for (int c0 : ones[static_cast<std::size_t>(r0)]) {
        const int c_lo = std::max(0, c0 - R), c_hi = std::min(in.cols - 1, c0 + R);
        for (int c = c_lo; c <= c_hi; ++c) o[c] += krow[c - c0 + R];
      }
    }
  }
  return out;
}

Image lowpass_reference(const BinaryImage& in, const AnalysisConfig& cfg) {
  const Kernel k = make_kernel(cfg);
  const int R = k.half_width;
  Image out{in.rows, in.cols, std::vector<double>(in.data.size(), 0.0)};
  for (int r = 0; r < in.rows; ++r) {
    for (int c = 0; c < in.cols; ++c) {
      double acc = 0.0;
      for (int dr = -R; dr <= R; ++dr) {
        const int rr = r - dr;
        if (rr < 0 || rr >= in.rows) continue;
        for (int dc = -R; dc <= R; ++dc) {
          const int cc = c - dc;
          if (cc < 0 || cc >= in.cols) continue;
          if (in.at(rr, cc)) acc += k.at(dr, dc);
        }
      }
      out.data[static_cast<std::size_t>(r) * in.cols + c] = acc;
    }
  }
  return out;
}

Localization localize(const Image& filtered, int border_band) {
  if (border_band < 0 || 2 * border_band >= filtered.rows || 2 * border_band >= filtered.cols) {
    throw std::invalid_argument("localize: border band leaves no search region");
  }
  Localization loc;
  loc.peak_value = -std::numeric_limits<double>::infinity();
  for (int r = border_band; r < filtered.rows - border_band; ++r) {
    for (int c = border_band; c < filtered.cols - border_band; ++c) {
      const double v = filtered.at(r, c);
      if (v > loc.peak_value) {
        loc.peak_value = v;
        loc.pixel = Vec2(c, r);
      }
    }
  }
  return loc;
}

Localization analyze_frame(const camera::Frame& raw, const AnalysisConfig& cfg) {
  const camera::Frame f = camera::bias_correct(raw, camera::BiasMethod::Recorded);
  const Image img = lowpass(binarize(f, cfg), cfg);
  Localization loc = localize(img, cfg.effective_border());
  loc.object = f.params.to_object(loc.pixel);
  return loc;
}

std::vector<Localization> analyze_frames(std::span<const camera::Frame> frames, const AnalysisConfig& cfg) {
  std::vector<Localization> out(frames.size());
  const auto n = static_cast<long>(frames.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = analyze_frame(frames[static_cast<std::size_t>(i)], cfg);
  return out;
}

std::vector<Localization> analyze_frames_serial(std::span<const camera::Frame> frames, const AnalysisConfig& cfg) {
  std::vector<Localization> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(analyze_frame(f, cfg));
  return out;
}

// --- skew-normal -------------------------------------------------------------

double SkewNormal::pdf(double x) const {
  const double z = (x - location) / scale;
  return 2.0 / scale * norm_pdf(z) * norm_cdf(shape * z);
}

double SkewNormal::mean() const {
  const double delta = shape / std::sqrt(1.0 + shape * shape);
  return location + scale * delta * std::sqrt(2.0 / constants::pi);
}

double SkewNormal::mode() const {
  // unimodal; golden section on a bracket that always contains the mode
  double a = location - 3.0 * scale, b = location + 3.0 * scale;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = pdf(c), fd = pdf(d);
  for (int i = 0; i < 80; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = pdf(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = pdf(d);
    }
  }
  return 0.5 * (a + b);
}

double DetectionFit::one_density(double x) const {
  const double lo = zero.mean(), hi = one.mean();
  const double plateau = offset * (norm_cdf((x - lo) / zero.scale) - norm_cdf((x - hi) / one.scale));
  return one.density(x) + std::max(0.0, plateau);
}

// --- histogram fit -------------------------------------------------------------

namespace {

constexpr int kParams = 9;
constexpr double kMaxShape = 20.0;

DetectionFit unpack(const Eigen::VectorXd& p) {
  DetectionFit f;
  f.zero = {p[1], std::exp(p[2]), std::clamp(p[3], -kMaxShape, kMaxShape), std::abs(p[0])};
  f.one = {p[5], std::exp(p[6]), std::clamp(p[7], -kMaxShape, kMaxShape), std::abs(p[4])};
  f.offset = std::abs(p[8]);
  return f;
}

struct HistogramFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::vector<double> x, counts;
  double norm = 1.0;  // shots * bin width: density -> expected counts

  int inputs() const { return kParams; }
  int values() const { return static_cast<int>(x.size()); }

  // Signed Poisson deviance residuals, so the sum of squares is the Poisson
  // deviance and sparse bins are not over-weighted.
  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    const DetectionFit f = unpack(p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double mu = std::max(1e-12, norm * (f.zero_density(x[i]) + f.one_density(x[i])));
      const double n = counts[i];
      const double dev = 2.0 * (mu - n + (n > 0.0 ? n * std::log(n / mu) : 0.0));
      r[static_cast<Eigen::Index>(i)] = std::copysign(std::sqrt(std::max(0.0, dev)), mu - n);
    }
    return 0;
  }
};

struct KMeans1D {
  double mean[2], sd[2], frac[2];
};

KMeans1D kmeans_split(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  double c0 = s[s.size() / 10], c1 = s[(s.size() * 9) / 10];
  for (int it = 0; it < 100; ++it) {
    double sum[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    const double cut = 0.5 * (c0 + c1);
    for (double x : s) {
      const int k = x > cut ? 1 : 0;
      sum[k] += x;
      ++n[k];
    }
    if (n[0] == 0 || n[1] == 0) break;
    const double n0 = sum[0] / n[0], n1 = sum[1] / n[1];
    if (n0 == c0 && n1 == c1) break;
    c0 = n0;
    c1 = n1;
  }
  KMeans1D km{};
  const double cut = 0.5 * (c0 + c1);
  double ss[2] = {0, 0}, sm[2] = {0, 0};
  std::size_t n[2] = {0, 0};
  for (double x : s) {
    const int k = x > cut ? 1 : 0;
    sm[k] += x;
    ss[k] += x * x;
    ++n[k];
  }
  for (int k = 0; k < 2; ++k) {
    const double nk = std::max<double>(1.0, static_cast<double>(n[k]));
    km.mean[k] = sm[k] / nk;
    km.sd[k] = std::sqrt(std::max(0.0, ss[k] / nk - km.mean[k] * km.mean[k]));
    km.frac[k] = static_cast<double>(n[k]) / static_cast<double>(s.size());
  }
  return km;
}

DetectionFit fit_once(std::span<const double> values, const AnalysisConfig& cfg, bool check_modality) {
  if (values.size() < static_cast<std::size_t>(cfg.min_shots)) {
    throw FitError("detection fit: " + std::to_string(values.size()) + " shots, need at least " +
                   std::to_string(cfg.min_shots));
  }
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double vmin = *mn_it, vmax = *mx_it;
  if (!(vmax > vmin)) throw FitError("detection fit: all peak values identical");

  const KMeans1D km = kmeans_split(values);
  if (check_modality) {
    const double pooled = std::sqrt(0.5 * (km.sd[0] * km.sd[0] + km.sd[1] * km.sd[1]));
    const double ashman = pooled > 0.0 ? std::abs(km.mean[1] - km.mean[0]) / pooled : 0.0;
    if (ashman < 2.0 || km.frac[0] < 0.02 || km.frac[1] < 0.02) {
      throw FitError("detection fit: histogram is not bimodal (Ashman D = " + std::to_string(ashman) + ")");
    }
  }

  const int nb = cfg.histogram_bins;
  const double width = (vmax - vmin) / nb;
  std::vector<double> counts(static_cast<std::size_t>(nb), 0.0);
  for (double v : values) {
    const int b = std::min(nb - 1, static_cast<int>((v - vmin) / width));
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const double norm = static_cast<double>(values.size()) * width;

  HistogramFunctor fn;
  DetectionFit out;
  out.bin_edges.resize(static_cast<std::size_t>(nb) + 1);
  for (int b = 0; b <= nb; ++b) out.bin_edges[static_cast<std::size_t>(b)] = vmin + b * width;
  for (int b = 0; b < nb; ++b) {
    const double c = counts[static_cast<std::size_t>(b)];
    fn.x.push_back(vmin + (b + 0.5) * width);
    fn.counts.push_back(c);
    out.bin_density.push_back(c / norm);
  }
  fn.norm = norm;

  const double floor_sd = 0.5 * width;
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  int evaluations = 0;
  bool converged = false;
  // plateau start: mean density over the middle fifth of the gap between the clusters
  double gap_density = 0.0;
  {
    const double lo = km.mean[0] + 0.4 * (km.mean[1] - km.mean[0]), hi = km.mean[0] + 0.6 * (km.mean[1] - km.mean[0]);
    std::size_t n_gap = 0;
    for (double v : values) n_gap += (v >= lo && v < hi) ? 1 : 0;
    gap_density = static_cast<double>(n_gap) / (static_cast<double>(values.size()) * (hi - lo));
  }
  for (double a0 : {0.0, 2.0}) {
    for (double a1 : {0.0, -2.0}) {
      for (double c0 : {0.0, gap_density}) {
      Eigen::VectorXd p(kParams);
      p << km.frac[0], km.mean[0], std::log(std::max(km.sd[0], floor_sd)), a0, km.frac[1], km.mean[1],
          std::log(std::max(km.sd[1], floor_sd)), a1, c0;
      Eigen::NumericalDiff<HistogramFunctor> nd(fn);
      Eigen::LevenbergMarquardt<Eigen::NumericalDiff<HistogramFunctor>> lm(nd);
      lm.parameters.maxfev = 4000;
      const auto status = lm.minimize(p);
      Eigen::VectorXd r(fn.values());
      fn(p, r);
      const double cost = r.squaredNorm();
      evaluations += lm.nfev;
      if (std::isfinite(cost) && cost < best_cost) {
        best_cost = cost;
        best = p;
        converged = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                    status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall;
      }
      }
    }
  }
  if (best.size() == 0) throw FitError("detection fit: no finite solution");

  DetectionFit fit = unpack(best);
  // the empty-shot component is the one with the lower mode
  if (fit.zero.mode() > fit.one.mode()) throw FitError("detection fit: components swapped during the fit");
  fit.bin_edges = std::move(out.bin_edges);
  fit.bin_density = std::move(out.bin_density);
  fit.reduced_chi2 = best_cost / std::max(1, nb - kParams);
  fit.evaluations = evaluations;
  fit.converged = converged;
  const double span = vmax - vmin;
  finalize_detection(fit, vmin - span, vmax + span);
  return fit;
}

double simpson(const auto& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

void finalize_detection(DetectionFit& fit, double lo, double hi) {
  const double m0 = fit.zero.mode(), m1 = fit.one.mode();
  if (!(m1 > m0)) throw FitError("detection fit: one-atom mode does not exceed the empty mode");
  auto diff = [&](double x) { return fit.zero_density(x) - fit.one_density(x); };
  // first crossing from the empty side going up
  const int n = 4000;
  double a = m0, fa = diff(a);
  if (!(fa > 0.0)) throw FitError("detection fit: empty component does not dominate at its own mode");
  bool found = false;
  double b = m0;
  for (int i = 1; i <= n; ++i) {
    b = m0 + (m1 - m0) * i / n;
    if (diff(b) <= 0.0) {
      found = true;
      break;
    }
    a = b;
  }
  if (!found) throw FitError("detection fit: component densities do not cross between the modes");
  for (int it = 0; it < 100; ++it) {
    const double c = 0.5 * (a + b);
    (diff(c) > 0.0 ? a : b) = c;
  }
  fit.threshold = 0.5 * (a + b);

  lo = std::min({lo, fit.zero.location - 12.0 * fit.zero.scale, fit.one.location - 12.0 * fit.one.scale});
  hi = std::max({hi, fit.zero.location + 12.0 * fit.zero.scale, fit.one.location + 12.0 * fit.one.scale});
  auto f0 = [&](double x) { return fit.zero_density(x); };
  auto f1 = [&](double x) { return fit.one_density(x); };
  const int steps = 20000;
  const double mass0 = simpson(f0, lo, hi, steps), mass1 = simpson(f1, lo, hi, steps);
  const double false_pos = simpson(f0, fit.threshold, hi, steps);
  const double missed = simpson(f1, lo, fit.threshold, steps);
  fit.fidelity = 1.0 - (false_pos + missed) / (mass0 + mass1);
}

DetectionFit fit_detection_histogram(std::span<const double> peak_values, const AnalysisConfig& cfg) {
  cfg.validate();
  DetectionFit fit = fit_once(peak_values, cfg, true);
  if (cfg.bootstrap > 0) {
    std::vector<double> fids;
    std::vector<double> resample(peak_values.size());
    for (int b = 0; b < cfg.bootstrap; ++b) {
      Engine rng = make_engine(cfg.seed, 0xb007, static_cast<std::uint64_t>(b));
      std::uniform_int_distribution<std::size_t> pick(0, peak_values.size() - 1);
      for (auto& v : resample) v = peak_values[pick(rng)];
      try {
        fids.push_back(fit_once(resample, cfg, false).fidelity);
      } catch (const FitError&) {
        // a degenerate resample does not contribute
      }
    }
    if (fids.size() >= 2) {
      const double mean = std::accumulate(fids.begin(), fids.end(), 0.0) / fids.size();
      double ss = 0.0;
      for (double f : fids) ss += (f - mean) * (f - mean);
      fit.fidelity_stderr = std::sqrt(ss / (fids.size() - 1));
    }
  }
  return fit;
}

}  // namespace srspin::pipeline
