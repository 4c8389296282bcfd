#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "raycal/geometry.hpp"

namespace raycal {

/// Self-intersection guard for ray offsets, meters.
inline constexpr double kGeomEpsilon = 1e-4;
/// Vertex welding tolerance, meters.
inline constexpr double kWeldTolerance = 1e-6;
/// Default exterior-dihedral deviation for automatic diffraction edges.
inline constexpr double kDefaultDihedralThreshold = kPi / 12.0;

using MaterialId = std::uint32_t;

/// Surface material: ITU-style permittivity power law plus roughness and slab thickness.
/// eps' = a * f_GHz^b, sigma = c * f_GHz^d (S/m).
struct Material {
  std::string name;
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double hRms = 0.0;       // m
  double thickness = 0.1;  // m
};

/// The bundled material table (concrete, brick, glass, wood, plasterboard, metal).
std::vector<Material> builtin_materials();

struct Triangle {
  Vec3 v0, v1, v2;
  Vec3 normal;  // unit, right-hand rule on (v1-v0) x (v2-v0)
  MaterialId material = 0;

  double area() const { return 0.5 * norm(cross(v1 - v0, v2 - v0)); }
  Vec3 centroid() const { return (v0 + v1 + v2) / 3.0; }
};

struct DiffractionEdge {
  Vec3 a, b;
  std::size_t face0 = 0;  // triangle indices
  std::size_t face1 = 0;
  double interiorAngle = kPi / 2;  // rad, measured through the solid

  double length() const { return distance(a, b); }
  Vec3 tangent() const { return normalized(b - a); }
};

struct Hit {
  double t = 0.0;
  std::size_t triangle = 0;
  double u = 0.0;  // barycentric weight of v1
  double v = 0.0;  // barycentric weight of v2
};

/// Planar patch of connected coplanar triangles sharing one material.
struct Face {
  Vec3 point;
  Vec3 normal;
  MaterialId material = 0;
  std::vector<std::size_t> triangles;
};

/// Triangle as read from input, before validation.
struct TriangleInput {
  Vec3 v0, v1, v2;
  MaterialId material = 0;
};

struct EdgeInput {
  Vec3 a, b;
};

class Bvh;

/// Immutable, indexed environment. Safe for concurrent reads.
class Scene {
 public:
  /// Validates triangles, derives normals, welds vertices, extracts edges and builds the index.
  /// Throws InputError on degenerate or non-finite triangles and unresolved material ids.
  static Scene build(std::vector<Material> materials, std::span<const TriangleInput> triangles,
                     std::span<const EdgeInput> declaredEdges = {},
                     std::optional<Aabb> bounds = std::nullopt,
                     double dihedralThreshold = kDefaultDihedralThreshold);

  Scene();
  ~Scene();
  Scene(Scene&&) noexcept;
  Scene& operator=(Scene&&) noexcept;
  Scene(const Scene&) = delete;
  Scene& operator=(const Scene&) = delete;

  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Material>& materials() const { return materials_; }
  const std::vector<DiffractionEdge>& edges() const { return edges_; }
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t face_of(std::size_t triangle) const { return faceOfTriangle_[triangle]; }
  const Material& material_of(std::size_t triangle) const {
    return materials_[triangles_[triangle].material];
  }
  std::optional<MaterialId> find_material(std::string_view name) const;

  /// Region in which TX/RX positions are accepted. Empty scenes are unbounded.
  const Aabb& bounds() const { return bounds_; }
  bool in_bounds(const Vec3& p) const;

  /// Nearest hit with t in (kGeomEpsilon, tMax) using the acceleration index.
  std::optional<Hit> intersect(const Vec3& origin, const Vec3& direction, double tMax) const;
  /// Same contract as intersect(), exhaustive over all triangles.
  std::optional<Hit> intersect_brute(const Vec3& origin, const Vec3& direction, double tMax) const;
  /// True iff a triangle crosses the open segment (p,q) farther than kGeomEpsilon from both ends.
  bool occluded(const Vec3& p, const Vec3& q) const;
  /// All crossings of the open segment (p,q), sorted by distance from p.
  std::vector<Hit> segment_hits(const Vec3& p, const Vec3& q) const;

 private:
  std::vector<Material> materials_;
  std::vector<Triangle> triangles_;
  std::vector<DiffractionEdge> edges_;
  std::vector<Face> faces_;
  std::vector<std::size_t> faceOfTriangle_;
  Aabb bounds_;
  std::unique_ptr<Bvh> bvh_;
};

/// Moller-Trumbore test without culling; returns hit parameters for any t.
std::optional<Hit> intersect_triangle(const Triangle& tri, std::size_t index, const Vec3& origin,
                                      const Vec3& direction);

/// Interior edges whose dihedral deviates from flat by more than the threshold.
/// Interior angle is the smaller of the two angles between the half-planes.
std::vector<DiffractionEdge> extract_edges(std::span<const Triangle> triangles,
                                           double dihedralThreshold = kDefaultDihedralThreshold);

/// Parses a scene document (JSON). sourceName is used in error messages.
Scene parse_scene(std::string_view text, const std::string& sourceName = "<scene>");
Scene load_scene(const std::filesystem::path& path);

}  // namespace raycal
