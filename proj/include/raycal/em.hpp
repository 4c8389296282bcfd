#pragma once

#include <complex>
#include <span>

#include "raycal/geometry.hpp"
#include "raycal/scene.hpp"

namespace raycal {

using Complex = std::complex<double>;

struct ComplexPermittivity {
  double epsReal = 1.0;       // relative permittivity eps'
  double conductivity = 0.0;  // S/m
  double frequency = 1e9;     // Hz

  /// eta = eps' - j sigma / (2 pi f eps0)
  Complex relative() const;
};

/// te: perpendicular (soft) component, tm: parallel (hard) component.
struct PolarimetricCoefficient {
  Complex te;
  Complex tm;
};

inline constexpr double kMinFrequencyHz = 1e9;
inline constexpr double kMaxFrequencyHz = 100e9;

inline double wavelength(double frequencyHz) { return kSpeedOfLight / frequencyHz; }
inline double wavenumber(double frequencyHz) { return 2.0 * kPi * frequencyHz / kSpeedOfLight; }

/// Power-law permittivity model. Throws InputError outside [1 GHz, 100 GHz].
ComplexPermittivity permittivity(const Material& material, double frequencyHz);

/// Air-to-medium Fresnel amplitude reflection coefficients.
/// Sign convention: te = tm at normal incidence; a perfect conductor gives te = tm = -1.
PolarimetricCoefficient fresnel(Complex eta, double thetaI);

/// Single-slab through transmission: two interface transmissions and absorption along the
/// refracted path, no internal multiples. Includes the propagation phase across the slab.
PolarimetricCoefficient penetration(Complex eta, double thetaI, double thickness, double frequencyHz);

/// Rayleigh criterion: true iff hRms <= lambda / (8 cos thetaI).
bool is_smooth(double hRms, double wavelengthM, double thetaI);
double rayleigh_threshold(double wavelengthM, double thetaI);

/// Fresnel integrals C(x) = int_0^x cos(pi t^2/2) dt, S(x) = int_0^x sin(pi t^2/2) dt.
struct FresnelCS {
  double c;
  double s;
};
FresnelCS fresnel_integrals(double x);

/// UTD transition function F(X) = 2j sqrt(X) e^{jX} int_{sqrt X}^inf e^{-j t^2} dt, X >= 0.
Complex transition_function(double x);

/// Local frame of a wedge: phi is measured from face 0 through the exterior region.
struct EdgeFrame {
  Vec3 origin;
  Vec3 tangent;
  Vec3 xAxis;  // in face 0, pointing away from the edge
  Vec3 yAxis;  // normal to face 0, pointing into the exterior region
  double n = 1.5;  // exterior wedge angle / pi
  double length = 0.0;

  /// Azimuth of a direction about the edge in [0, 2 pi).
  double phi(const Vec3& dir) const;
};

EdgeFrame make_edge_frame(const DiffractionEdge& edge, std::span<const Triangle> triangles);

/// Raw wedge coefficients (Kouyoumjian-Pathak with Luebbers-style face reflection
/// coefficients). R0/Rn multiply the face-0/face-n reflection terms: R = -1 (soft) and
/// R = +1 (hard) recover the perfectly conducting wedge.
struct WedgeReflection {
  Complex soft0{-1.0, 0.0}, softN{-1.0, 0.0};
  Complex hard0{1.0, 0.0}, hardN{1.0, 0.0};
};
PolarimetricCoefficient utd_wedge(double n, double phi, double phiPrime, double sinBeta0,
                                  double distanceParamL, double k, const WedgeReflection& faces);

/// Diffraction coefficient for one edge interaction, multiplied by the spreading factor.
/// toSource and toObserver point away from the diffraction point. The returned coefficient
/// is D * sqrt((s + s') / (s s')): relative to a free-space ray of length s + s', so the
/// diffracted field is (lambda / 4 pi) e^{-jk(s+s')} / (s+s') times it. The factor is
/// symmetric in (s, s'), which makes the coefficient reciprocal.
/// Throws InvariantError if the Keller-cone condition is violated by more than 1e-3 rad.
PolarimetricCoefficient utd_coefficient(const EdgeFrame& edge, const Vec3& toSource,
                                        const Vec3& toObserver, double sPrime, double s, double k,
                                        Complex faceEta);

}  // namespace raycal
