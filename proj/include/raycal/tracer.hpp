#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "raycal/em.hpp"
#include "raycal/geometry.hpp"
#include "raycal/scene.hpp"

namespace raycal {

/// Antenna field pattern. Only the isotropic kind is shipped.
struct AntennaPattern {
  enum class Kind { Isotropic };
  Kind kind = Kind::Isotropic;
  double gainDbi = 0.0;

  /// Complex field gain toward a direction.
  Complex field_gain(const Vec3& direction) const;
};

enum class InteractionKind { Reflection, Penetration, Diffraction };

struct Interaction {
  InteractionKind kind = InteractionKind::Reflection;
  Vec3 point;
  std::size_t surfaceOrEdge = 0;  // triangle index (reflection/penetration) or edge index
  PolarimetricCoefficient coefficient;
};

/// 2x2 complex transfer from the departure (theta, phi) basis to the arrival basis.
using Transfer = std::array<std::array<Complex, 2>, 2>;

struct PropagationPath {
  std::vector<Interaction> interactions;
  double lengthM = 0.0;
  double delayNs = 0.0;
  Transfer transfer{};
  Vec3 departure;  // unit propagation direction leaving the transmitter
  Vec3 arrival;    // unit propagation direction entering the receiver
  double aodAz = 0.0, aodZe = 0.0;  // degrees
  double aoaAz = 0.0, aoaZe = 0.0;  // degrees, direction from the receiver toward the last hop
  Complex fieldAmp;                 // sqrt(W)
  double powerDbm = 0.0;

  bool is_los() const { return interactions.empty(); }
  /// "LOS", or interaction tokens joined by '-', e.g. "R12-R7", "D3", "P4".
  std::string signature() const;
};

struct TraceConfig {
  std::size_t rayCount = 1'000'000;
  int maxDepth = 5;
  double cutoffDbm = -160.0;
  double frequencyHz = 6.75e9;
  double txPowerDbm = 0.0;
  bool enableReflection = true;
  bool enableDiffraction = true;
  bool enablePenetration = false;
  unsigned workers = 0;  // 0: hardware concurrency
  AntennaPattern txPattern;
  AntennaPattern rxPattern;

  /// Throws InputError if the configuration is inconsistent.
  void validate() const;
};

struct TraceDiagnostics {
  std::size_t launchedRays = 0;
  std::size_t candidateSequences = 0;
  std::size_t roughTerminations = 0;
  std::size_t rejectedCandidates = 0;
  std::size_t belowCutoff = 0;
};

/// Spherical Fibonacci lattice: uniform z strata, golden-angle azimuth increment.
std::vector<Vec3> fibonacci_directions(std::size_t n);
Vec3 fibonacci_direction(std::size_t i, std::size_t n);

/// Capture radius for a launched ray with the given unfolded length.
double reception_sphere_radius(std::size_t launchCount, double pathLength);

/// Ray-fixed spherical basis (theta-hat, phi-hat) for a propagation direction.
std::array<Vec3, 2> ray_basis(const Vec3& direction);

/// a = (lambda / 4 pi) e^{-jkd}/d * F_R * T_p * F_T * E0; E0 is vertically polarized and
/// scaled so an unobstructed 0 dBi link reproduces Friis exactly.
Complex path_field(const PropagationPath& path, const TraceConfig& cfg,
                   const AntennaPattern& txPattern, const AntennaPattern& rxPattern);

/// Friis free-space path loss in dB.
double fspl_db(double frequencyHz, double distanceM);

/// All multipath components between tx and rx with power >= cfg.cutoffDbm, sorted by
/// (delay, signature). Throws InputError for positions outside the scene or coincident.
std::vector<PropagationPath> trace(const Scene& scene, const Vec3& tx, const Vec3& rx,
                                   const TraceConfig& cfg, TraceDiagnostics* diagnostics = nullptr);

/// Delimited-text export: delay_ns,power_dbm,aod_az_deg,aod_ze_deg,aoa_az_deg,aoa_ze_deg,signature
std::string format_paths(const std::vector<PropagationPath>& paths);

}  // namespace raycal
