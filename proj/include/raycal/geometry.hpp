#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

namespace raycal {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;     // m/s
inline constexpr double kSpeedOfLightMPerNs = 0.299792458;
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return n > 0.0 ? v / n : Vec3{};
}

inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

/// Axis-aligned box; default-constructed box is empty.
struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  bool empty() const { return lo.x > hi.x || lo.y > hi.y || lo.z > hi.z; }

  void expand(const Vec3& p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }

  void expand(const Aabb& b) {
    if (b.empty()) return;
    expand(b.lo);
    expand(b.hi);
  }

  Aabb padded(double margin) const {
    if (empty()) return *this;
    Aabb out = *this;
    out.lo = lo - Vec3{margin, margin, margin};
    out.hi = hi + Vec3{margin, margin, margin};
    return out;
  }

  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }

  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return (lo + hi) * 0.5; }

  int longest_axis() const {
    const Vec3 e = extent();
    if (e.x >= e.y && e.x >= e.z) return 0;
    return e.y >= e.z ? 1 : 2;
  }

  /// Slab test; returns the entry parameter if the ray overlaps the box within [0, tMax].
  std::optional<double> ray_entry(const Vec3& origin, const Vec3& invDir, double tMax) const {
    double t0 = 0.0;
    double t1 = tMax;
    for (int a = 0; a < 3; ++a) {
      double tn = (lo[a] - origin[a]) * invDir[a];
      double tf = (hi[a] - origin[a]) * invDir[a];
      if (std::isnan(tn) || std::isnan(tf)) {
        // Ray parallel to the slab and lying on its boundary plane.
        if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
        continue;
      }
      if (tn > tf) std::swap(tn, tf);
      t0 = std::max(t0, tn);
      t1 = std::min(t1, tf);
      if (t0 > t1) return std::nullopt;
    }
    return t0;
  }
};

/// Unit direction to (azimuth, zenith) in degrees; azimuth in [0,360), zenith in [0,180].
inline std::array<double, 2> direction_angles_deg(const Vec3& d) {
  const Vec3 u = normalized(d);
  double az = std::atan2(u.y, u.x) * 180.0 / kPi;
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  const double ze = std::acos(std::clamp(u.z, -1.0, 1.0)) * 180.0 / kPi;
  return {az, ze};
}

}  // namespace raycal
