#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "srspin/classifier.hpp"

using namespace srspin;
using namespace srspin::classify;

namespace {
constexpr double um = 1e-6;

// four clusters along y, top to bottom, with enough overlap to matter
std::vector<oracle::Gaussian2> truth() {
  auto cov = [](double sx, double sy, double rho) -> Mat2 {
    Mat2 c;
    c << sx * sx, rho * sx * sy, rho * sx * sy, sy * sy;
    return c * um * um;
  };
  return {{0.2, Vec2(0.5, 18) * um, cov(1.5, 2.5, 0.2)},
          {0.2, Vec2(0.0, 8) * um, cov(1.5, 2.0, -0.1)},
          {0.2, Vec2(0.3, 0) * um, cov(1.8, 2.2, 0.0)},
          {0.4, Vec2(-0.2, -6) * um, cov(2.0, 2.5, 0.3)}};
}

std::vector<Vec2> draw(const std::vector<oracle::Gaussian2>& g, std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> w;
  for (const auto& c : g) w.push_back(c.weight);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = g[pick(rng)];
    out.push_back(c.mean + Mat2(c.cov.llt().matrixL()) * Vec2(z(rng), z(rng)));
  }
  return out;
}

std::vector<oracle::Gaussian2> as_oracle(const MixtureModel& m) {
  std::vector<oracle::Gaussian2> g;
  for (const auto& c : m.comps) g.push_back({c.weight, c.mean, c.cov});
  return g;
}

MixtureModel model_from(const std::vector<oracle::Gaussian2>& g) {
  MixtureModel m;
  for (const auto& c : g) m.comps.push_back({c.weight, c.mean, c.cov});
  m.labels = region_labels(static_cast<int>(g.size()));
  return m;
}
}  // namespace

TEST_CASE("region labels") {
  const auto l = region_labels(4);
  REQUIRE(l.size() == 4);
  CHECK(l[0].name() == "9/2");
  CHECK(l[2].name() == "5/2");
  CHECK(l[3].members.size() == 2);
  CHECK(l[3].contains(HalfInt(1)));
  CHECK(l[3].contains(HalfInt(-3)));
  CHECK_FALSE(l[0].contains(HalfInt(7)));
  CHECK(region_labels(5)[4].members.size() == 1);
  CHECK(region_labels(1)[0].members.size() == 5);
  CHECK_THROWS(region_labels(6));
  CHECK_THROWS(region_labels(0));
}

TEST_CASE("EM recovers a known mixture") {
  const auto g = truth();
  const auto pts = draw(g, 8000, 1);
  const auto m = fit_gmm(pts, 4, 7);
  CHECK(m.converged);
  CHECK(m.monotone);
  CHECK_FALSE(m.degenerate);
  CHECK(m.n_points == 8000);
  for (std::size_t i = 1; i < m.ll_history.size(); ++i) CHECK(m.ll_history[i] >= m.ll_history[i - 1] - 1e-9);
  for (int k = 0; k < 4; ++k) {
    CHECK((m.comps[k].mean - g[k].mean).norm() < 0.3 * um);
    CHECK(m.comps[k].weight == doctest::Approx(g[k].weight).epsilon(0.15));
    CHECK(std::sqrt(m.comps[k].cov(1, 1)) == doctest::Approx(std::sqrt(g[k].cov(1, 1))).epsilon(0.1));
  }
  for (int k = 0; k < 3; ++k) CHECK(m.comps[k].mean.y() > m.comps[k + 1].mean.y());
  m.validate();

  // same seed, same fit
  const auto again = fit_gmm(pts, 4, 7);
  CHECK(again.log_likelihood == m.log_likelihood);
  CHECK(again.comps[2].mean == m.comps[2].mean);
}

TEST_CASE("a uniform background is absorbed by one broad component") {
  auto pts = draw(truth(), 6000, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-40 * um, 40 * um);
  for (int i = 0; i < 60; ++i) pts.emplace_back(u(rng), u(rng));
  const auto g = truth();
  // four components: the background takes one of them; the result is the
  // maximum-likelihood solution, EM started from the truth ends in the same place
  const auto m4 = fit_gmm(pts, 4, 11);
  CHECK(refine_gmm(pts, model_from(g)).log_likelihood == doctest::Approx(m4.log_likelihood).epsilon(1e-9));
  // with a fifth component the clusters come back
  const auto m = fit_gmm(pts, 5, 11);
  int broad = -1;
  for (int k = 0; k < 5; ++k)
    if (std::sqrt(m.comps[k].cov(1, 1)) > 10 * um) broad = k;
  REQUIRE(broad >= 0);
  CHECK(m.comps[broad].weight < 0.03);
  int j = 0;
  for (int k = 0; k < 5; ++k) {
    if (k == broad) continue;
    CHECK((m.comps[k].mean - g[j].mean).norm() < 0.6 * um);
    ++j;
  }
}

TEST_CASE("fit input checks") {
  const auto pts = draw(truth(), 150, 4);
  CHECK_THROWS_AS(fit_gmm(pts, 4, 1), std::invalid_argument);  // needs 50 per component
  CHECK_THROWS_AS(fit_gmm(pts, 0, 1), std::invalid_argument);
  GmmOptions bad;
  bad.n_init = 0;
  CHECK_THROWS_AS(fit_gmm(pts, 2, 1, bad), std::invalid_argument);
  MixtureModel empty;
  CHECK_THROWS(empty.validate());
}

TEST_CASE("assignment picks the largest weighted density") {
  const auto g = truth();
  const auto m = model_from(g);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-15 * um, 25 * um);
  int mismatches = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec2 x(u(rng) / 3, u(rng));
    int best = 0;
    for (int k = 1; k < 4; ++k)
      if (g[k].density(x) > g[best].density(x)) best = k;
    mismatches += m.assign(x) != best;
  }
  CHECK(mismatches == 0);
  const auto r = m.responsibilities(g[0].mean);
  CHECK(r.sum() == doctest::Approx(1.0));
  CHECK(r[0] > 0.99);
}

TEST_CASE("assignment ties go to the larger |m|") {
  MixtureModel m;
  m.comps = {{0.5, Vec2(0, 1) * um, Mat2::Identity() * um * um}, {0.5, Vec2(0, -1) * um, Mat2::Identity() * um * um}};
  m.labels = region_labels(2);
  CHECK(m.assign(Vec2(0.3 * um, 0.0)) == 0);
}

TEST_CASE("fidelity estimators agree with labeled-sample classification") {
  const auto m = model_from(truth());
  FidelityOptions opt;
  opt.min_samples = 1'000'000;
  opt.target_stderr = 3e-4;
  const auto mc = fidelity(m, 5, opt);
  const auto grid = fidelity_grid(m, 1500, opt);
  const auto brute = oracle::brute_force_fidelity(as_oracle(m), 2'000'000, 17);
  REQUIRE(mc.regions.size() == 4);
  for (int k = 0; k < 4; ++k) {
    const auto& r = mc.regions[k];
    CHECK((r.mc_stderr < opt.target_stderr || mc.samples >= opt.max_samples));
    CHECK(r.fidelity == doctest::Approx(1.0 - r.false_positive - r.missed));
    CHECK(std::abs(r.fidelity - grid.regions[k].fidelity) < 5 * r.mc_stderr + 1e-5);
    // brute force: about 1e-3 statistical error for the smallest component
    CHECK(std::abs(r.fidelity - brute[k]) < 0.005);
    CHECK(r.fidelity < 1.0);
    CHECK(r.fidelity > 0.5);
  }
  CHECK(mc.regions[0].name == "9/2");
  CHECK(mc.regions[0].projection == doctest::Approx(18 * um));
  CHECK(mc.regions[3].sigma_major >= mc.regions[3].sigma_minor);
  // deterministic in the seed
  CHECK(fidelity(m, 5, opt).regions[2].fidelity == mc.regions[2].fidelity);
}

TEST_CASE("well separated clusters give unit fidelity") {
  auto g = truth();
  for (std::size_t k = 0; k < g.size(); ++k) g[k].mean.y() = 100 * um * static_cast<double>(k);
  const auto rep = fidelity(model_from(g), 1);
  for (const auto& r : rep.regions) CHECK(r.fidelity == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("bootstrap errors") {
  const auto pts = draw(truth(), 4000, 6);
  const auto m = fit_gmm(pts, 4, 3);
  const auto b = bootstrap_errors(pts, m, 100, 8, {}, 50'000);
  REQUIRE(b.stderr_fidelity.size() == 4);
  CHECK(b.resamples == 100);
  CHECK(b.failures <= 10);
  for (double s : b.stderr_fidelity) {
    CHECK(s > 0.0);
    CHECK(s < 0.05);
  }
  CHECK_THROWS_AS(bootstrap_errors(pts, m, 20, 8), std::invalid_argument);
}

TEST_CASE("JSON output") {
  const auto m = model_from(truth());
  const auto j = to_json(m);
  CHECK(j["components"].size() == 4);
  CHECK(j["components"][0]["label"] == "9/2");
  FidelityOptions opt;
  opt.min_samples = 100'000;
  opt.target_stderr = 1e-2;
  const auto r = to_json(fidelity(m, 2, opt));
  CHECK(r["regions"].size() == 4);
  CHECK(r["regions"][3]["label"] == "3/2+1/2");
  CHECK(r["regions"][3].contains("fidelity"));
}
