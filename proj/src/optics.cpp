#include "srspin/optics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace srspin::optics {

double GaussianBeam::peak_intensity() const { return 2.0 * power / (constants::pi * waist_u * waist_v); }

double GaussianBeam::rayleigh_u() const { return constants::pi * waist_u * waist_u / wavelength; }
double GaussianBeam::rayleigh_v() const { return constants::pi * waist_v * waist_v / wavelength; }

void GaussianBeam::validate() const {
  if (!(waist_u > 0.0 && waist_v > 0.0 && wavelength > 0.0) || !(power >= 0.0)) {
    throw std::invalid_argument("GaussianBeam: waists and wavelength must be positive, power >= 0");
  }
  if (axis.norm() == 0.0 || u_axis.norm() == 0.0 || std::abs(axis.normalized().dot(u_axis.normalized())) > 1e-9) {
    throw std::invalid_argument("GaussianBeam: u_axis must be non-zero and orthogonal to the propagation axis");
  }
}

double GaussianBeam::profile(const Vec3& r) const {
  Vec3 unused;
  return profile(r, unused);
}

double GaussianBeam::profile(const Vec3& r, Vec3& grad) const {
  const Vec3 s_hat = axis.normalized();
  const Vec3 u_hat = u_axis.normalized();
  const Vec3 v_hat = s_hat.cross(u_hat);
  const Vec3 d = r - center;
  const double s = divergence ? d.dot(s_hat) : 0.0;
  const double a = d.dot(u_hat);
  const double b = d.dot(v_hat);

  const double zu = rayleigh_u();
  const double zv = rayleigh_v();
  const double qu = 1.0 + (s / zu) * (s / zu);
  const double qv = 1.0 + (s / zv) * (s / zv);
  const double wu2 = waist_u * waist_u * qu;
  const double wv2 = waist_v * waist_v * qv;

  const double val = std::exp(-2.0 * a * a / wu2 - 2.0 * b * b / wv2) / std::sqrt(qu * qv);
  const double da = -4.0 * a / wu2;
  const double db = -4.0 * b / wv2;
  double ds = 0.0;
  if (divergence) {
    const double dqu = 2.0 * s / (zu * zu);
    const double dqv = 2.0 * s / (zv * zv);
    ds = -0.5 * dqu / qu - 0.5 * dqv / qv + 2.0 * a * a * dqu / (wu2 * qu) + 2.0 * b * b * dqv / (wv2 * qv);
  }
  grad = val * (da * u_hat + db * v_hat + ds * s_hat);
  return val;
}

double tensor_weight(HalfInt m, HalfInt F) {
  if (m.abs() > F) throw std::invalid_argument("tensor_weight: |m| > F");
  if (F.twice < 2) return 0.0;  // no rank-2 shift below F = 1
  const double f = F.value();
  const double mv = m.value();
  return (3.0 * mv * mv - f * (f + 1.0)) / (f * (2.0 * f - 1.0));
}

double Polarizability::effective_au(HalfInt m) const { return alpha_scalar_au + alpha_tensor_au * tensor_weight(m, F); }

double OsgField::peak_shift(HalfInt m) const {
  return light_shift_sign * pol.effective_si(m) * beam.peak_intensity() /
         (2.0 * constants::vacuum_permittivity * constants::speed_of_light);
}

double osg_potential(const GaussianBeam& beam, const Polarizability& pol, const Vec3& r, HalfInt m,
                     double light_shift_sign) {
  return OsgField{beam, pol, light_shift_sign}.peak_shift(m) * beam.profile(r);
}

double tweezer_potential(const GaussianBeam& beam, double depth, const Vec3& r) { return -depth * beam.profile(r); }

double lightsheet_potential(const GaussianBeam& beam, double depth, const Vec3& r) {
  return -depth * beam.profile(r);
}

namespace {

struct Evaluator {
  const Vec3& r;
  HalfInt m;

  FieldSample operator()(const OsgField& f) const {
    Vec3 g;
    const double p = f.beam.profile(r, g);
    const double u0 = f.peak_shift(m);
    return {u0 * p, -u0 * g};
  }
  FieldSample operator()(const DipoleTrap& f) const {
    Vec3 g;
    const double p = f.beam.profile(r, g);
    return {-f.depth * p, f.depth * g};
  }
  FieldSample operator()(const HarmonicTrap& f) const {
    const Vec3 d = r - f.center;
    const Vec3 k = f.mass * f.omega.cwiseProduct(f.omega);
    return {0.5 * d.dot(k.cwiseProduct(d)), -k.cwiseProduct(d)};
  }
};

}  // namespace

FieldSample evaluate(const PotentialField& field, const Vec3& r, HalfInt m) { return std::visit(Evaluator{r, m}, field); }

TrapFrequencies trap_frequencies(const DipoleTrap& trap, double mass) {
  const auto& b = trap.beam;
  const double k = std::abs(trap.depth) / mass;
  const double zu = b.rayleigh_u();
  const double zv = b.rayleigh_v();
  // axial curvature of 1/sqrt(qu qv): (1/zu^2 + 1/zv^2)
  const double axial = b.divergence ? std::sqrt(k * (1.0 / (zu * zu) + 1.0 / (zv * zv))) : 0.0;
  return {std::sqrt(4.0 * k / (b.waist_u * b.waist_u)), std::sqrt(4.0 * k / (b.waist_v * b.waist_v)), axial};
}

double max_angular_frequency(const PotentialField& field, HalfInt m, double mass) {
  if (const auto* h = std::get_if<HarmonicTrap>(&field)) return h->omega.cwiseAbs().maxCoeff();
  if (const auto* t = std::get_if<DipoleTrap>(&field)) {
    const auto f = trap_frequencies(*t, mass);
    return std::max({f.u, f.v, f.axial});
  }
  const auto& o = std::get<OsgField>(field);
  const auto f = trap_frequencies(DipoleTrap{o.beam, o.peak_shift(m)}, mass);
  return std::max({f.u, f.v, f.axial});
}

}  // namespace srspin::optics
