#include "raycal/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "raycal/errors.hpp"
#include "raycal/parallel.hpp"

namespace raycal {

namespace {

constexpr Complex kJ{0.0, 1.0};
constexpr double kGoldenAngle = kPi * (3.0 - 2.23606797749978969641);
// The Fibonacci lattice leaves holes wider than the nominal sphere; captures
// are only proposals for the image solver, so widen them.
constexpr double kCaptureSlack = 2.0;

/// Complex field vector in global coordinates.
struct Field {
  Complex x, y, z;

  Field operator+(const Field& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Field operator*(Complex s) const { return {x * s, y * s, z * s}; }
  Complex dot(const Vec3& v) const { return x * v.x + y * v.y + z * v.z; }
};

Field field_along(const Vec3& v, Complex amplitude) { return {v.x * amplitude, v.y * amplitude, v.z * amplitude}; }

Vec3 any_perpendicular(const Vec3& d) {
  const Vec3 trial = std::abs(d.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  return normalized(cross(d, trial));
}

Vec3 mirror_point(const Vec3& p, const Face& face) {
  return p - face.normal * (2.0 * dot(p - face.point, face.normal));
}

Vec3 reflect_direction(const Vec3& d, const Vec3& n) { return d - n * (2.0 * dot(d, n)); }

double incidence_angle(const Vec3& dir, const Vec3& normal) {
  return std::acos(std::clamp(std::abs(dot(dir, normal)), 0.0, 1.0));
}

/// Encoded interaction step used as the candidate signature: face * 2 + (penetration ? 1 : 0).
using Sequence = std::vector<std::uint32_t>;

struct LaunchState {
  Vec3 origin;
  Vec3 dir;
  double unfolded = 0.0;
  Sequence seq;
};

bool point_in_triangle(const Triangle& t, const Vec3& p) {
  const Vec3 e0 = t.v1 - t.v0;
  const Vec3 e1 = t.v2 - t.v0;
  const Vec3 w = p - t.v0;
  const double d00 = dot(e0, e0);
  const double d01 = dot(e0, e1);
  const double d11 = dot(e1, e1);
  const double d20 = dot(w, e0);
  const double d21 = dot(w, e1);
  const double denom = d00 * d11 - d01 * d01;
  const double v = (d11 * d20 - d01 * d21) / denom;
  const double u = (d00 * d21 - d01 * d20) / denom;
  constexpr double tol = 1e-9;
  if (std::abs(dot(w, t.normal)) > 1e-6) return false;
  return v >= -tol && u >= -tol && u + v <= 1.0 + tol;
}

std::optional<std::size_t> triangle_containing(const Scene& scene, std::size_t face, const Vec3& p) {
  for (std::size_t tri : scene.faces()[face].triangles) {
    if (point_in_triangle(scene.triangles()[tri], p)) return tri;
  }
  return std::nullopt;
}

/// Propagates the field across one specular interaction (reflection or penetration).
Field apply_specular(const Field& e, const Vec3& dIn, const Vec3& dOut, const Vec3& normal,
                     const PolarimetricCoefficient& c) {
  Vec3 s = cross(dIn, normal);
  s = norm(s) < 1e-12 ? any_perpendicular(dIn) : normalized(s);
  const Vec3 pIn = cross(s, dIn);
  const Vec3 pOut = dot(dIn, dOut) > 0.999999999999 ? pIn : cross(dOut, s);
  return field_along(s, c.te * e.dot(s)) + field_along(pOut, c.tm * e.dot(pIn));
}

/// Edge-fixed basis propagation for a diffraction.
Field apply_diffraction(const Field& e, const Vec3& dIn, const Vec3& dOut, const Vec3& tangent,
                        const PolarimetricCoefficient& c) {
  Vec3 phiIn = cross(tangent, dIn);
  phiIn = norm(phiIn) < 1e-12 ? any_perpendicular(dIn) : -normalized(phiIn);
  const Vec3 betaIn = cross(dIn, phiIn);
  Vec3 phiOut = cross(tangent, dOut);
  phiOut = norm(phiOut) < 1e-12 ? any_perpendicular(dOut) : normalized(phiOut);
  const Vec3 betaOut = cross(dOut, phiOut);
  return field_along(betaOut, -c.te * e.dot(betaIn)) + field_along(phiOut, -c.tm * e.dot(phiIn));
}

struct Hop {
  Interaction interaction;
  Vec3 normalOrTangent;
};

/// Builds the transfer matrix and geometry for a sequence of nodes and interactions.
PropagationPath assemble_path(const Vec3& tx, const Vec3& rx, std::vector<Hop> hops,
                              const TraceConfig& cfg) {
  PropagationPath path;
  std::vector<Vec3> nodes;
  nodes.push_back(tx);
  for (const Hop& h : hops) nodes.push_back(h.interaction.point);
  nodes.push_back(rx);

  std::vector<Vec3> dirs;
  double length = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const Vec3 d = nodes[i + 1] - nodes[i];
    length += norm(d);
    dirs.push_back(normalized(d));
  }

  const auto depBasis = ray_basis(dirs.front());
  Field eTheta = field_along(depBasis[0], 1.0);
  Field ePhi = field_along(depBasis[1], 1.0);
  for (std::size_t i = 0; i < hops.size(); ++i) {
    const Hop& h = hops[i];
    const Vec3& dIn = dirs[i];
    const Vec3& dOut = dirs[i + 1];
    if (h.interaction.kind == InteractionKind::Diffraction) {
      eTheta = apply_diffraction(eTheta, dIn, dOut, h.normalOrTangent, h.interaction.coefficient);
      ePhi = apply_diffraction(ePhi, dIn, dOut, h.normalOrTangent, h.interaction.coefficient);
    } else {
      eTheta = apply_specular(eTheta, dIn, dOut, h.normalOrTangent, h.interaction.coefficient);
      ePhi = apply_specular(ePhi, dIn, dOut, h.normalOrTangent, h.interaction.coefficient);
    }
  }
  const auto arrBasis = ray_basis(dirs.back());
  path.transfer = {{{eTheta.dot(arrBasis[0]), ePhi.dot(arrBasis[0])},
                    {eTheta.dot(arrBasis[1]), ePhi.dot(arrBasis[1])}}};

  for (Hop& h : hops) path.interactions.push_back(h.interaction);
  path.lengthM = length;
  path.delayNs = length / kSpeedOfLightMPerNs;
  path.departure = dirs.front();
  path.arrival = dirs.back();
  const auto dep = direction_angles_deg(path.departure);
  const auto arr = direction_angles_deg(-path.arrival);
  path.aodAz = dep[0];
  path.aodZe = dep[1];
  path.aoaAz = arr[0];
  path.aoaZe = arr[1];
  path.fieldAmp = path_field(path, cfg, cfg.txPattern, cfg.rxPattern);
  const double p = std::norm(path.fieldAmp);
  path.powerDbm = p > 0.0 ? 10.0 * std::log10(p * 1000.0) : -std::numeric_limits<double>::infinity();
  return path;
}

struct Refiner {
  const Scene& scene;
  const Vec3& tx;
  const Vec3& rx;
  const TraceConfig& cfg;
  double lambda;
  double k;

  Complex eta_of(MaterialId m) const { return permittivity(scene.materials()[m], cfg.frequencyHz).relative(); }

  bool rough(MaterialId m, double theta) const { return !is_smooth(scene.materials()[m].hRms, lambda, theta); }

  /// Re-solves a face sequence with mirror images; returns nullopt if the geometry is invalid.
  std::optional<PropagationPath> refine(const Sequence& seq, bool& roughReject) const {
    const auto& faces = scene.faces();
    std::vector<std::size_t> reflFaces;
    for (std::uint32_t code : seq) {
      if ((code & 1u) == 0) reflFaces.push_back(code >> 1);
    }
    // Image chain.
    std::vector<Vec3> images;
    Vec3 img = tx;
    for (std::size_t f : reflFaces) {
      img = mirror_point(img, faces[f]);
      images.push_back(img);
    }
    // Backtrack reflection points from the receiver.
    std::vector<Vec3> reflPoints(reflFaces.size());
    Vec3 target = rx;
    for (std::size_t j = reflFaces.size(); j-- > 0;) {
      const Face& face = faces[reflFaces[j]];
      const Vec3 d = target - images[j];
      const double denom = dot(d, face.normal);
      if (std::abs(denom) < 1e-12) return std::nullopt;
      const double u = dot(face.point - images[j], face.normal) / denom;
      if (!(u > 1e-9 && u < 1.0 - 1e-9)) return std::nullopt;
      reflPoints[j] = images[j] + d * u;
      target = reflPoints[j];
    }

    // Walk the sequence, validating segments between consecutive reflection points.
    std::vector<Hop> hops;
    Vec3 segStart = tx;
    std::size_t seqPos = 0;
    for (std::size_t r = 0; r <= reflFaces.size(); ++r) {
      const Vec3 segEnd = r < reflFaces.size() ? reflPoints[r] : rx;
      std::vector<std::size_t> expected;
      while (seqPos < seq.size() && (seq[seqPos] & 1u) == 1u) expected.push_back(seq[seqPos++] >> 1);
      if (r < reflFaces.size()) ++seqPos;  // consume the reflection itself

      const Vec3 segDir = normalized(segEnd - segStart);
      std::vector<Hit> hits = scene.segment_hits(segStart, segEnd);
      std::vector<Hit> crossings;
      for (const Hit& h : hits) {
        if (!crossings.empty() && scene.face_of(crossings.back().triangle) == scene.face_of(h.triangle) &&
            h.t - crossings.back().t < 1e-6) {
          continue;
        }
        crossings.push_back(h);
      }
      if (crossings.size() != expected.size()) return std::nullopt;
      for (std::size_t i = 0; i < crossings.size(); ++i) {
        const std::size_t tri = crossings[i].triangle;
        if (scene.face_of(tri) != expected[i]) return std::nullopt;
        const Triangle& t = scene.triangles()[tri];
        const double theta = incidence_angle(segDir, t.normal);
        if (rough(t.material, theta)) {
          roughReject = true;
          return std::nullopt;
        }
        const Material& mat = scene.materials()[t.material];
        PolarimetricCoefficient c = penetration(eta_of(t.material), theta, mat.thickness, cfg.frequencyHz);
        // The slab is zero-thickness in the geometry; keep only its excess over free space.
        const Complex freeSpace = std::exp(-kJ * k * mat.thickness * std::cos(theta));
        c.te /= freeSpace;
        c.tm /= freeSpace;
        hops.push_back({Interaction{InteractionKind::Penetration, segStart + segDir * crossings[i].t, tri, c}, t.normal});
      }

      if (r < reflFaces.size()) {
        const auto tri = triangle_containing(scene, reflFaces[r], reflPoints[r]);
        if (!tri) return std::nullopt;
        const Triangle& t = scene.triangles()[*tri];
        const double theta = incidence_angle(segDir, t.normal);
        if (rough(t.material, theta)) {
          roughReject = true;
          return std::nullopt;
        }
        const PolarimetricCoefficient c = fresnel(eta_of(t.material), theta);
        hops.push_back({Interaction{InteractionKind::Reflection, reflPoints[r], *tri, c}, t.normal});
      }
      segStart = segEnd;
    }
    return assemble_path(tx, rx, std::move(hops), cfg);
  }
};

}  // namespace

Complex AntennaPattern::field_gain(const Vec3&) const {
  return {std::pow(10.0, gainDbi / 20.0), 0.0};
}

std::string PropagationPath::signature() const {
  if (interactions.empty()) return "LOS";
  std::string out;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    if (i > 0) out += '-';
    switch (interactions[i].kind) {
      case InteractionKind::Reflection: out += 'R'; break;
      case InteractionKind::Penetration: out += 'P'; break;
      case InteractionKind::Diffraction: out += 'D'; break;
    }
    out += std::to_string(interactions[i].surfaceOrEdge);
  }
  return out;
}

void TraceConfig::validate() const {
  if (rayCount < 1) throw InputError("rayCount must be >= 1");
  if (maxDepth < 0) throw InputError("maxDepth must be >= 0");
  if (!(frequencyHz > 0.0)) throw InputError("frequency must be positive");
  if (!(cutoffDbm < txPowerDbm)) throw InputError("cutoff must be below the transmit power");
}

Vec3 fibonacci_direction(std::size_t i, std::size_t n) {
  const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = kGoldenAngle * static_cast<double>(i);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

std::vector<Vec3> fibonacci_directions(std::size_t n) {
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(fibonacci_direction(i, n));
  return out;
}

double reception_sphere_radius(std::size_t launchCount, double pathLength) {
  return pathLength * std::sqrt(4.0 * kPi / static_cast<double>(launchCount)) / std::sqrt(3.0);
}

std::array<Vec3, 2> ray_basis(const Vec3& direction) {
  const Vec3 d = normalized(direction);
  const double sinTheta = std::sqrt(d.x * d.x + d.y * d.y);
  if (sinTheta < 1e-12) {
    // Along the z axis the azimuth is undefined; use phi = 0.
    const double sgn = d.z >= 0.0 ? 1.0 : -1.0;
    return {Vec3{sgn, 0.0, 0.0}, Vec3{0.0, 1.0, 0.0}};
  }
  const double cosPhi = d.x / sinTheta;
  const double sinPhi = d.y / sinTheta;
  return {Vec3{d.z * cosPhi, d.z * sinPhi, -sinTheta}, Vec3{-sinPhi, cosPhi, 0.0}};
}

double fspl_db(double frequencyHz, double distanceM) {
  return 20.0 * std::log10(4.0 * kPi * distanceM * frequencyHz / kSpeedOfLight);
}

Complex path_field(const PropagationPath& path, const TraceConfig& cfg, const AntennaPattern& txPattern,
                   const AntennaPattern& rxPattern) {
  const double lambda = wavelength(cfg.frequencyHz);
  const double k = wavenumber(cfg.frequencyHz);
  const double e0 = std::sqrt(std::pow(10.0, cfg.txPowerDbm / 10.0) * 1e-3);  // sqrt(W)
  const Complex spread = (lambda / (4.0 * kPi)) * std::exp(-kJ * k * path.lengthM) / path.lengthM;
  // Vertical transmit and receive polarization: the theta-theta entry of the transfer.
  return spread * rxPattern.field_gain(-path.arrival) * path.transfer[0][0] *
         txPattern.field_gain(path.departure) * e0;
}

std::vector<PropagationPath> trace(const Scene& scene, const Vec3& tx, const Vec3& rx, const TraceConfig& cfg,
                                   TraceDiagnostics* diagnostics) {
  cfg.validate();
  if (!scene.in_bounds(tx)) throw InputError("transmitter position outside scene bounds");
  if (!scene.in_bounds(rx)) throw InputError("receiver position outside scene bounds");
  if (distance(tx, rx) < 1e-9) throw InputError("transmitter and receiver coincide");

  TraceDiagnostics diag;
  const unsigned workers = resolve_workers(cfg.workers);
  const double lambda = wavelength(cfg.frequencyHz);
  const double k = wavenumber(cfg.frequencyHz);
  std::vector<PropagationPath> paths;

  if (!scene.occluded(tx, rx)) paths.push_back(assemble_path(tx, rx, {}, cfg));

  // Launch rays to propose specular face sequences.
  const bool launch = cfg.maxDepth > 0 && !scene.triangles().empty() &&
                      (cfg.enableReflection || cfg.enablePenetration);
  std::set<Sequence> candidates;
  if (launch) {
    const std::size_t n = cfg.rayCount;
    diag.launchedRays = n;
    std::vector<std::set<Sequence>> perWorker(workers);
    std::vector<std::size_t> roughPerWorker(workers, 0);
    parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end, unsigned w) {
      std::vector<LaunchState> stack;
      auto& found = perWorker[w];
      for (std::size_t i = begin; i < end; ++i) {
        stack.push_back({tx, fibonacci_direction(i, n), 0.0, {}});
        while (!stack.empty()) {
          LaunchState st = std::move(stack.back());
          stack.pop_back();
          const auto hit = scene.intersect(st.origin, st.dir, std::numeric_limits<double>::infinity());
          const double tHit = hit ? hit->t : std::numeric_limits<double>::infinity();
          if (!st.seq.empty()) {
            const Vec3 w2 = rx - st.origin;
            const double tc = std::clamp(dot(w2, st.dir), 0.0, tHit);
            if (tc > 0.0) {
              const double miss = norm(w2 - st.dir * tc);
              if (miss <= kCaptureSlack * reception_sphere_radius(n, st.unfolded + tc)) found.insert(st.seq);
            }
          }
          if (!hit || static_cast<int>(st.seq.size()) >= cfg.maxDepth) continue;
          const Triangle& tri = scene.triangles()[hit->triangle];
          const Material& mat = scene.materials()[tri.material];
          const double theta = incidence_angle(st.dir, tri.normal);
          if (!is_smooth(mat.hRms, lambda, theta)) {
            ++roughPerWorker[w];
            continue;
          }
          const Vec3 p = st.origin + st.dir * hit->t;
          const auto face = static_cast<std::uint32_t>(scene.face_of(hit->triangle));
          if (cfg.enablePenetration) {
            LaunchState through{p, st.dir, st.unfolded + hit->t, st.seq};
            through.seq.push_back(face * 2u + 1u);
            stack.push_back(std::move(through));
          }
          if (cfg.enableReflection) {
            LaunchState bounce{p, normalized(reflect_direction(st.dir, tri.normal)), st.unfolded + hit->t,
                               std::move(st.seq)};
            bounce.seq.push_back(face * 2u);
            stack.push_back(std::move(bounce));
          }
        }
      }
    });
    for (auto& s : perWorker) candidates.insert(s.begin(), s.end());
    for (std::size_t r : roughPerWorker) diag.roughTerminations += r;
  }
  diag.candidateSequences = candidates.size();

  // Exact re-solution of each proposed sequence.
  const std::vector<Sequence> ordered(candidates.begin(), candidates.end());
  std::vector<std::optional<PropagationPath>> refined(ordered.size());
  std::vector<char> roughFlags(ordered.size(), 0);
  const Refiner refiner{scene, tx, rx, cfg, lambda, k};
  parallel_for(ordered.size(), workers, [&](std::size_t i) {
    bool rough = false;
    refined[i] = refiner.refine(ordered[i], rough);
    roughFlags[i] = rough ? 1 : 0;
  });
  for (std::size_t i = 0; i < refined.size(); ++i) {
    if (refined[i]) {
      paths.push_back(std::move(*refined[i]));
    } else {
      ++diag.rejectedCandidates;
      diag.roughTerminations += static_cast<std::size_t>(roughFlags[i]);
    }
  }

  // Single-edge diffraction: Keller-cone stationary point on each visible edge.
  if (cfg.enableDiffraction) {
    const auto& edges = scene.edges();
    std::vector<std::optional<PropagationPath>> diffracted(edges.size());
    parallel_for(edges.size(), workers, [&](std::size_t e) {
      const DiffractionEdge& edge = edges[e];
      const EdgeFrame frame = make_edge_frame(edge, scene.triangles());
      const Vec3 t = frame.tangent;
      const double ps = dot(tx - edge.a, t);
      const double pr = dot(rx - edge.a, t);
      const double rhoS = norm(tx - edge.a - t * ps);
      const double rhoR = norm(rx - edge.a - t * pr);
      if (rhoS < 1e-9 || rhoR < 1e-9) return;
      const double along = ps + (pr - ps) * rhoS / (rhoS + rhoR);
      if (!(along > 1e-9 && along < frame.length - 1e-9)) return;
      const Vec3 q = edge.a + t * along;
      const Vec3 toSrc = tx - q;
      const Vec3 toObs = rx - q;
      const double sPrime = norm(toSrc);
      const double s = norm(toObs);
      if (sPrime <= kGeomEpsilon || s <= kGeomEpsilon) return;
      const double wedge = frame.n * kPi + 1e-9;
      if (frame.phi(toSrc) > wedge || frame.phi(toObs) > wedge) return;
      if (scene.occluded(tx, q) || scene.occluded(q, rx)) return;
      const Triangle& face0 = scene.triangles()[edge.face0];
      const Complex eta = permittivity(scene.materials()[face0.material], cfg.frequencyHz).relative();
      const PolarimetricCoefficient c = utd_coefficient(frame, toSrc, toObs, sPrime, s, k, eta);
      diffracted[e] = assemble_path(tx, rx, {Hop{Interaction{InteractionKind::Diffraction, q, e, c}, t}}, cfg);
    });
    for (auto& d : diffracted) {
      if (d) paths.push_back(std::move(*d));
    }
  }

  std::vector<PropagationPath> kept;
  kept.reserve(paths.size());
  for (auto& p : paths) {
    if (p.powerDbm >= cfg.cutoffDbm) {
      kept.push_back(std::move(p));
    } else {
      ++diag.belowCutoff;
    }
  }
  std::vector<std::string> sigs;
  std::vector<std::size_t> order(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    order[i] = i;
    sigs.push_back(kept[i].signature());
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (kept[a].delayNs != kept[b].delayNs) return kept[a].delayNs < kept[b].delayNs;
    return sigs[a] < sigs[b];
  });
  std::vector<PropagationPath> out;
  out.reserve(kept.size());
  for (std::size_t i : order) out.push_back(std::move(kept[i]));
  if (diagnostics) *diagnostics = diag;
  return out;
}

std::string format_paths(const std::vector<PropagationPath>& paths) {
  std::ostringstream os;
  os << "delay_ns,power_dbm,aod_az_deg,aod_ze_deg,aoa_az_deg,aoa_ze_deg,signature\n";
  os << std::fixed << std::setprecision(6);
  for (const auto& p : paths) {
    os << p.delayNs << ',' << p.powerDbm << ',' << p.aodAz << ',' << p.aodZe << ',' << p.aoaAz << ','
       << p.aoaZe << ',' << p.signature() << '\n';
  }
  return os.str();
}

}  // namespace raycal
