#include "raycal/em.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "raycal/errors.hpp"

namespace raycal {

namespace {

constexpr Complex kJ{0.0, 1.0};

// Principal root; for passive media (Im <= 0) this keeps Im(result) <= 0, Re(result) >= 0.
Complex refracted_cos_term(Complex eta, double sinTheta) {
  return std::sqrt(eta - sinTheta * sinTheta);
}

Complex clamp_magnitude(Complex z, double limit) {
  const double m = std::abs(z);
  return m > limit ? z * (limit / m) : z;
}

}  // namespace

Complex ComplexPermittivity::relative() const {
  return {epsReal, -conductivity / (2.0 * kPi * frequency * kVacuumPermittivity)};
}

ComplexPermittivity permittivity(const Material& material, double frequencyHz) {
  if (!(frequencyHz >= kMinFrequencyHz && frequencyHz <= kMaxFrequencyHz)) {
    throw InputError("frequency " + std::to_string(frequencyHz) +
                     " Hz outside the supported range [1 GHz, 100 GHz]");
  }
  const double fGhz = frequencyHz / 1e9;
  ComplexPermittivity p;
  p.epsReal = material.a * std::pow(fGhz, material.b);
  p.conductivity = material.c * std::pow(fGhz, material.d);
  p.frequency = frequencyHz;
  return p;
}

PolarimetricCoefficient fresnel(Complex eta, double thetaI) {
  const double c = std::cos(thetaI);
  const double s = std::sin(thetaI);
  const Complex root = refracted_cos_term(eta, s);
  const Complex te = (c - root) / (c + root);
  const Complex tm = (root - eta * c) / (root + eta * c);
  return {te, tm};
}

PolarimetricCoefficient penetration(Complex eta, double thetaI, double thickness, double frequencyHz) {
  const double c = std::cos(thetaI);
  const double s = std::sin(thetaI);
  const Complex root = refracted_cos_term(eta, s);
  // Products of entry and exit interface transmissions. The no-multiples approximation can
  // exceed unity for strongly lossy media near grazing, so magnitudes are capped at 1.
  const Complex te = clamp_magnitude(4.0 * c * root / ((c + root) * (c + root)), 1.0);
  const Complex tm = clamp_magnitude(4.0 * eta * c * root / ((eta * c + root) * (eta * c + root)), 1.0);
  const Complex slab = std::exp(-kJ * wavenumber(frequencyHz) * thickness * root);
  return {te * slab, tm * slab};
}

double rayleigh_threshold(double wavelengthM, double thetaI) {
  return wavelengthM / (8.0 * std::cos(thetaI));
}

bool is_smooth(double hRms, double wavelengthM, double thetaI) {
  return hRms <= rayleigh_threshold(wavelengthM, thetaI);
}

// --- UTD ---------------------------------------------------------------------

double EdgeFrame::phi(const Vec3& dir) const {
  const double a = std::atan2(dot(dir, yAxis), dot(dir, xAxis));
  return a < 0.0 ? a + 2.0 * kPi : a;
}

EdgeFrame make_edge_frame(const DiffractionEdge& edge, std::span<const Triangle> triangles) {
  EdgeFrame f;
  f.origin = edge.a;
  f.tangent = edge.tangent();
  f.length = edge.length();
  auto inward = [&](const Triangle& tri) {
    const Vec3 rel = tri.centroid() - edge.a;
    return normalized(rel - f.tangent * dot(rel, f.tangent));
  };
  const Vec3 f0 = inward(triangles[edge.face0]);
  const Vec3 f1 = inward(triangles[edge.face1]);
  f.xAxis = f0;
  Vec3 y = -(f1 - f0 * dot(f1, f0));
  if (norm(y) < 1e-12) y = cross(f.tangent, f0);  // flat or knife edge: any side
  f.yAxis = normalized(y);
  f.n = (2.0 * kPi - edge.interiorAngle) / kPi;
  return f;
}

namespace {

// cot((pi + sign*beta) / 2n) F(kL a^{sign}(beta)), with the boundary limit where cot blows up.
Complex utd_term(double n, double beta, int sign, double kL) {
  const double shifted = kPi + sign * beta;
  const double bigN = std::round(shifted / (2.0 * kPi * n));
  const double eps = shifted - 2.0 * kPi * n * bigN;  // distance from a shadow/reflection boundary
  if (std::abs(eps) < 1e-6) {
    const double sgn = eps >= 0.0 ? 1.0 : -1.0;
    const Complex e4 = std::exp(kJ * (kPi / 4.0));
    return n * (std::sqrt(2.0 * kPi * kL) * sgn - 2.0 * kL * eps * e4) * e4;
  }
  const double a = 2.0 * std::pow(std::cos((2.0 * kPi * n * bigN - sign * beta) / 2.0), 2);
  const double cot = 1.0 / std::tan(eps / (2.0 * n));
  return cot * transition_function(kL * a);
}

}  // namespace

PolarimetricCoefficient utd_wedge(double n, double phi, double phiPrime, double sinBeta0,
                                  double distanceParamL, double k, const WedgeReflection& faces) {
  const double kL = k * distanceParamL;
  const Complex pre = -std::exp(-kJ * (kPi / 4.0)) / (2.0 * n * std::sqrt(2.0 * kPi * k) * sinBeta0);
  const Complex t1 = utd_term(n, phi - phiPrime, +1, kL);
  const Complex t2 = utd_term(n, phi - phiPrime, -1, kL);
  const Complex t3 = utd_term(n, phi + phiPrime, +1, kL);
  const Complex t4 = utd_term(n, phi + phiPrime, -1, kL);
  const Complex soft = pre * (t1 + t2 + faces.soft0 * t4 + faces.softN * t3);
  const Complex hard = pre * (t1 + t2 + faces.hard0 * t4 + faces.hardN * t3);
  return {soft, hard};
}

PolarimetricCoefficient utd_coefficient(const EdgeFrame& edge, const Vec3& toSource,
                                        const Vec3& toObserver, double sPrime, double s, double k,
                                        Complex faceEta) {
  if (!(s > 0.0) || !(sPrime > 0.0)) throw InvariantError("utd_coefficient: distances must be positive");
  const Vec3 src = normalized(toSource);
  const Vec3 obs = normalized(toObserver);
  // Incident propagation direction is -src; diffracted direction is obs.
  const double cosIn = std::clamp(dot(-src, edge.tangent), -1.0, 1.0);
  const double cosOut = std::clamp(dot(obs, edge.tangent), -1.0, 1.0);
  if (std::abs(std::acos(cosIn) - std::acos(cosOut)) > 1e-3) {
    throw InvariantError("utd_coefficient: Keller cone condition violated");
  }
  const double sinBeta0 = std::sqrt(std::max(1e-30, 1.0 - cosIn * cosIn));
  const double phiPrime = edge.phi(src);
  const double phi = edge.phi(obs);
  const double L = s * sPrime * sinBeta0 * sinBeta0 / (s + sPrime);

  WedgeReflection faces;
  if (std::isfinite(std::abs(faceEta))) {
    // Grazing angles chosen symmetric in (phi, phi') so the coefficient stays reciprocal.
    auto incidence = [](double grazing) {
      return std::min(std::abs(kPi / 2.0 - grazing), kPi / 2.0 - 1e-9);
    };
    const double nPi = edge.n * kPi;
    const PolarimetricCoefficient r0 = fresnel(faceEta, incidence(std::min(phi, phiPrime)));
    const PolarimetricCoefficient rn = fresnel(faceEta, incidence(nPi - std::max(phi, phiPrime)));
    // Hard-polarization reflection uses the opposite sign of the tm convention.
    faces = {r0.te, rn.te, -r0.tm, -rn.tm};
  }
  const PolarimetricCoefficient d = utd_wedge(edge.n, phi, phiPrime, sinBeta0, L, k, faces);
  const double spread = std::sqrt((s + sPrime) / (s * sPrime));
  return {d.te * spread, d.tm * spread};
}

}  // namespace raycal
