#include "raycal/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "bvh.hpp"
#include "raycal/errors.hpp"

namespace raycal {

std::vector<Material> builtin_materials() {
  // Permittivity coefficients follow ITU-R P.2040; h_rms from surface profilometry of
  // common building materials (upper end of the measured range).
  return {
      {"concrete", 5.24, 0.0, 0.0462, 0.7822, 269.0e-6, 0.30},
      {"brick", 3.91, 0.0, 0.0238, 0.16, 325.0e-6, 0.20},
      {"glass", 6.31, 0.0, 0.0036, 1.3394, 14.5e-6, 0.01},
      {"wood", 1.99, 0.0, 0.0047, 1.0718, 80.0e-6, 0.05},
      {"plasterboard", 2.73, 0.0, 0.0085, 0.9395, 99.2e-6, 0.0125},
      {"metal", 1.0, 0.0, 1.0e7, 0.0, 0.0, 0.005},
  };
}

namespace {

/// Welds vertices closer than kWeldTolerance; returns a canonical id per input point.
class VertexWelder {
 public:
  std::size_t id(const Vec3& p) {
    const auto key = cell(p);
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(Key{key.x + dx, key.y + dy, key.z + dz});
          if (it == cells_.end()) continue;
          for (std::size_t idx : it->second) {
            if (distance(points_[idx], p) <= kWeldTolerance) return idx;
          }
        }
      }
    }
    const std::size_t idx = points_.size();
    points_.push_back(p);
    cells_[key].push_back(idx);
    return idx;
  }

  const Vec3& point(std::size_t id) const { return points_[id]; }

 private:
  struct Key {
    long x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::size_t h = static_cast<std::size_t>(k.x) * 73856093u;
      h ^= static_cast<std::size_t>(k.y) * 19349663u;
      h ^= static_cast<std::size_t>(k.z) * 83492791u;
      return h;
    }
  };

  static Key cell(const Vec3& p) {
    return {static_cast<long>(std::floor(p.x / kWeldTolerance)),
            static_cast<long>(std::floor(p.y / kWeldTolerance)),
            static_cast<long>(std::floor(p.z / kWeldTolerance))};
  }

  std::vector<Vec3> points_;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

/// In-plane unit direction from the edge line into the triangle.
Vec3 inward_direction(const Triangle& tri, const Vec3& a, const Vec3& b) {
  const Vec3 t = normalized(b - a);
  const Vec3 rel = tri.centroid() - a;
  return normalized(rel - t * dot(rel, t));
}

double face_angle(const Triangle& t0, const Triangle& t1, const Vec3& a, const Vec3& b) {
  const Vec3 f0 = inward_direction(t0, a, b);
  const Vec3 f1 = inward_direction(t1, a, b);
  return std::acos(std::clamp(dot(f0, f1), -1.0, 1.0));
}

using EdgeMap = std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>>;

EdgeMap build_edge_map(std::span<const Triangle> triangles, VertexWelder& welder) {
  EdgeMap edges;
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const Triangle& t = triangles[i];
    const std::size_t ids[3] = {welder.id(t.v0), welder.id(t.v1), welder.id(t.v2)};
    for (int k = 0; k < 3; ++k) {
      std::size_t a = ids[k];
      std::size_t b = ids[(k + 1) % 3];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      edges[{a, b}].push_back(i);
    }
  }
  return edges;
}

bool point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b, double tol) {
  const Vec3 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 <= 0.0) return distance(p, a) <= tol;
  const double s = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(a + ab * s, p) <= tol;
}

bool segment_on_triangle_boundary(const Triangle& t, const Vec3& a, const Vec3& b) {
  const Vec3 v[3] = {t.v0, t.v1, t.v2};
  for (int k = 0; k < 3; ++k) {
    const Vec3& p = v[k];
    const Vec3& q = v[(k + 1) % 3];
    if (point_on_segment(a, p, q, kWeldTolerance) && point_on_segment(b, p, q, kWeldTolerance)) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<DiffractionEdge> extract_edges(std::span<const Triangle> triangles,
                                           double dihedralThreshold) {
  VertexWelder welder;
  const EdgeMap edgeMap = build_edge_map(triangles, welder);
  std::vector<DiffractionEdge> out;
  for (const auto& [key, tris] : edgeMap) {
    if (tris.size() != 2) continue;  // boundary or non-manifold
    const Vec3 a = welder.point(key.first);
    const Vec3 b = welder.point(key.second);
    if (distance(a, b) <= 1e-6) continue;
    const double alpha = face_angle(triangles[tris[0]], triangles[tris[1]], a, b);
    if (kPi - alpha <= dihedralThreshold) continue;
    if (alpha <= 0.0) continue;
    DiffractionEdge e;
    e.a = a;
    e.b = b;
    e.face0 = std::min(tris[0], tris[1]);
    e.face1 = std::max(tris[0], tris[1]);
    e.interiorAngle = alpha;
    out.push_back(e);
  }
  return out;
}

std::optional<Hit> intersect_triangle(const Triangle& tri, std::size_t index, const Vec3& origin,
                                      const Vec3& direction) {
  const Vec3 e1 = tri.v1 - tri.v0;
  const Vec3 e2 = tri.v2 - tri.v0;
  const Vec3 p = cross(direction, e2);
  const double det = dot(e1, p);
  const double scale = norm(e1) * norm(e2);
  if (std::abs(det) <= 1e-12 * scale) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - tri.v0;
  const double u = dot(s, p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(direction, q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = dot(e2, q) * inv;
  return Hit{t, index, u, v};
}

Scene::Scene() = default;
Scene::~Scene() = default;
Scene::Scene(Scene&&) noexcept = default;
Scene& Scene::operator=(Scene&&) noexcept = default;

Scene Scene::build(std::vector<Material> materials, std::span<const TriangleInput> triangles,
                   std::span<const EdgeInput> declaredEdges, std::optional<Aabb> bounds,
                   double dihedralThreshold) {
  Scene scene;
  scene.materials_ = std::move(materials);
  scene.triangles_.reserve(triangles.size());
  Aabb geometry;
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const TriangleInput& in = triangles[i];
    if (!is_finite(in.v0) || !is_finite(in.v1) || !is_finite(in.v2)) {
      throw InputError("triangle " + std::to_string(i) + " has non-finite vertices");
    }
    if (in.material >= scene.materials_.size()) {
      throw InputError("triangle " + std::to_string(i) + " references unknown material id " +
                       std::to_string(in.material));
    }
    Triangle t;
    t.v0 = in.v0;
    t.v1 = in.v1;
    t.v2 = in.v2;
    t.material = in.material;
    const Vec3 n = cross(t.v1 - t.v0, t.v2 - t.v0);
    if (0.5 * norm(n) <= 1e-9) {
      throw InputError("triangle " + std::to_string(i) + " is degenerate (area <= 1e-9 m^2)");
    }
    t.normal = normalized(n);
    geometry.expand(t.v0);
    geometry.expand(t.v1);
    geometry.expand(t.v2);
    scene.triangles_.push_back(t);
  }

  if (bounds) {
    scene.bounds_ = *bounds;
  } else if (!geometry.empty()) {
    const Vec3 e = geometry.extent();
    const double diag = norm(e);
    scene.bounds_ = geometry.padded(std::max(10.0, 0.1 * diag));
  }

  scene.edges_ = extract_edges(scene.triangles_, dihedralThreshold);

  for (std::size_t i = 0; i < declaredEdges.size(); ++i) {
    const EdgeInput& de = declaredEdges[i];
    if (distance(de.a, de.b) <= 1e-6) {
      throw InputError("declared edge " + std::to_string(i) + " is shorter than 1e-6 m");
    }
    std::vector<std::size_t> adjacent;
    for (std::size_t t = 0; t < scene.triangles_.size(); ++t) {
      if (segment_on_triangle_boundary(scene.triangles_[t], de.a, de.b)) adjacent.push_back(t);
    }
    if (adjacent.size() != 2) {
      throw InputError("declared edge " + std::to_string(i) + " must border exactly two triangles (found " +
                       std::to_string(adjacent.size()) + ")");
    }
    const bool duplicate = std::any_of(scene.edges_.begin(), scene.edges_.end(), [&](const DiffractionEdge& e) {
      return (distance(e.a, de.a) <= kWeldTolerance && distance(e.b, de.b) <= kWeldTolerance) ||
             (distance(e.a, de.b) <= kWeldTolerance && distance(e.b, de.a) <= kWeldTolerance);
    });
    if (duplicate) continue;
    DiffractionEdge e;
    e.a = de.a;
    e.b = de.b;
    e.face0 = adjacent[0];
    e.face1 = adjacent[1];
    e.interiorAngle = face_angle(scene.triangles_[adjacent[0]], scene.triangles_[adjacent[1]], de.a, de.b);
    if (!(e.interiorAngle > 0.0 && e.interiorAngle < 2 * kPi)) {
      throw InputError("declared edge " + std::to_string(i) + " has a degenerate wedge angle");
    }
    scene.edges_.push_back(e);
  }

  // Faces: union of edge-connected, coplanar, same-material triangles.
  const std::size_t n = scene.triangles_.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  VertexWelder welder;
  const EdgeMap edgeMap = build_edge_map(scene.triangles_, welder);
  for (const auto& [key, tris] : edgeMap) {
    for (std::size_t i = 0; i + 1 < tris.size(); ++i) {
      for (std::size_t j = i + 1; j < tris.size(); ++j) {
        const Triangle& a = scene.triangles_[tris[i]];
        const Triangle& b = scene.triangles_[tris[j]];
        if (a.material != b.material) continue;
        if (std::abs(std::abs(dot(a.normal, b.normal)) - 1.0) > 1e-9) continue;
        if (std::abs(dot(b.centroid() - a.v0, a.normal)) > 1e-6) continue;
        const std::size_t ra = find(tris[i]);
        const std::size_t rb = find(tris[j]);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  std::map<std::size_t, std::size_t> faceIndex;
  scene.faceOfTriangle_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find(i);
    auto [it, inserted] = faceIndex.emplace(root, scene.faces_.size());
    if (inserted) {
      const Triangle& t = scene.triangles_[root];
      scene.faces_.push_back(Face{t.v0, t.normal, t.material, {}});
    }
    scene.faces_[it->second].triangles.push_back(i);
    scene.faceOfTriangle_[i] = it->second;
  }

  scene.bvh_ = std::make_unique<Bvh>(scene.triangles_);
  return scene;
}

std::optional<MaterialId> Scene::find_material(std::string_view name) const {
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    if (materials_[i].name == name) return static_cast<MaterialId>(i);
  }
  return std::nullopt;
}

bool Scene::in_bounds(const Vec3& p) const {
  if (!is_finite(p)) return false;
  return bounds_.empty() || bounds_.contains(p);
}

std::optional<Hit> Scene::intersect(const Vec3& origin, const Vec3& direction, double tMax) const {
  if (!bvh_) return std::nullopt;
  return bvh_->closest(triangles_, origin, direction, kGeomEpsilon, tMax);
}

std::optional<Hit> Scene::intersect_brute(const Vec3& origin, const Vec3& direction,
                                          double tMax) const {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < triangles_.size(); ++i) {
    auto h = intersect_triangle(triangles_[i], i, origin, direction);
    if (!h || h->t <= kGeomEpsilon || h->t >= tMax) continue;
    if (!best || h->t < best->t) best = h;
  }
  return best;
}

bool Scene::occluded(const Vec3& p, const Vec3& q) const {
  if (!bvh_) return false;
  const Vec3 d = q - p;
  const double len = norm(d);
  if (len <= 2 * kGeomEpsilon) return false;
  const Vec3 dir = d / len;
  bool blocked = false;
  bvh_->for_each_hit(triangles_, p, dir, kGeomEpsilon, len - kGeomEpsilon, [&](const Hit&) {
    blocked = true;
    return false;
  });
  return blocked;
}

std::vector<Hit> Scene::segment_hits(const Vec3& p, const Vec3& q) const {
  std::vector<Hit> hits;
  if (!bvh_) return hits;
  const Vec3 d = q - p;
  const double len = norm(d);
  if (len <= 2 * kGeomEpsilon) return hits;
  bvh_->for_each_hit(triangles_, p, d / len, kGeomEpsilon, len - kGeomEpsilon, [&](const Hit& h) {
    hits.push_back(h);
    return true;
  });
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return a.t < b.t || (a.t == b.t && a.triangle < b.triangle);
  });
  return hits;
}

// --- scene document --------------------------------------------------------

namespace {

using nlohmann::json;

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

Vec3 read_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw InputError(where + ": expected [x, y, z]");
  for (const auto& c : j) {
    if (!c.is_number()) throw InputError(where + ": coordinates must be numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw InputError(where + ": '" + key + "' must be a number");
  return obj[key].get<double>();
}

}  // namespace

Scene parse_scene(std::string_view text, const std::string& sourceName) {
  json doc;
  const bool blank = std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  if (blank) {
    doc = json::object();
  } else {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw InputError(sourceName + ":" + std::to_string(line_of(text, e.byte)) + ": parse error: " + e.what());
    }
  }
  if (!doc.is_object()) throw InputError(sourceName + ": scene document must be an object");

  std::vector<Material> materials = builtin_materials();
  auto materialIndex = [&](const std::string& name) -> std::optional<MaterialId> {
    for (std::size_t i = 0; i < materials.size(); ++i) {
      if (materials[i].name == name) return static_cast<MaterialId>(i);
    }
    return std::nullopt;
  };

  if (doc.contains("materials")) {
    const json& mats = doc["materials"];
    if (!mats.is_object()) throw InputError(sourceName + ": 'materials' must be an object");
    for (const auto& [name, m] : mats.items()) {
      const std::string where = sourceName + ": material '" + name + "'";
      if (!m.is_object()) throw InputError(where + " must be an object");
      Material base;
      if (auto idx = materialIndex(name)) base = materials[*idx];
      base.name = name;
      base.a = number_or(m, "a", base.a, where);
      base.b = number_or(m, "b", base.b, where);
      base.c = number_or(m, "c", base.c, where);
      base.d = number_or(m, "d", base.d, where);
      base.hRms = number_or(m, "h_rms_m", base.hRms, where);
      base.thickness = number_or(m, "thickness_m", base.thickness, where);
      if (!(base.a > 0.0) || base.c < 0.0 || base.hRms < 0.0 || !(base.thickness > 0.0)) {
        throw InputError(where + ": requires a > 0, c >= 0, h_rms_m >= 0, thickness_m > 0");
      }
      if (auto idx = materialIndex(name)) {
        materials[*idx] = base;
      } else {
        materials.push_back(base);
      }
    }
  }

  std::vector<TriangleInput> triangles;
  auto resolve = [&](const json& item, const std::string& where) -> MaterialId {
    if (!item.contains("material") || !item["material"].is_string()) {
      throw InputError(where + ": missing material name");
    }
    const std::string name = item["material"].get<std::string>();
    auto idx = materialIndex(name);
    if (!idx) throw InputError(where + ": unknown material '" + name + "'");
    return *idx;
  };

  if (doc.contains("quads")) {
    const json& quads = doc["quads"];
    if (!quads.is_array()) throw InputError(sourceName + ": 'quads' must be an array");
    for (std::size_t i = 0; i < quads.size(); ++i) {
      const std::string where = sourceName + ": quad " + std::to_string(i);
      const json& q = quads[i];
      if (!q.is_object() || !q.contains("vertices") || !q["vertices"].is_array() || q["vertices"].size() != 4) {
        throw InputError(where + ": expected 4 vertices");
      }
      const MaterialId mat = resolve(q, where);
      Vec3 v[4];
      for (int k = 0; k < 4; ++k) v[k] = read_point(q["vertices"][k], where);
      triangles.push_back({v[0], v[1], v[2], mat});
      triangles.push_back({v[0], v[2], v[3], mat});
    }
  }

  if (doc.contains("triangles")) {
    const json& tris = doc["triangles"];
    if (!tris.is_array()) throw InputError(sourceName + ": 'triangles' must be an array");
    for (std::size_t i = 0; i < tris.size(); ++i) {
      const std::string where = sourceName + ": triangle " + std::to_string(i);
      const json& t = tris[i];
      if (!t.is_object() || !t.contains("vertices") || !t["vertices"].is_array() || t["vertices"].size() != 3) {
        throw InputError(where + ": expected 3 vertices");
      }
      const MaterialId mat = resolve(t, where);
      triangles.push_back({read_point(t["vertices"][0], where), read_point(t["vertices"][1], where),
                           read_point(t["vertices"][2], where), mat});
    }
  }

  std::vector<EdgeInput> edges;
  if (doc.contains("edges")) {
    const json& es = doc["edges"];
    if (!es.is_array()) throw InputError(sourceName + ": 'edges' must be an array");
    for (std::size_t i = 0; i < es.size(); ++i) {
      const std::string where = sourceName + ": edge " + std::to_string(i);
      if (!es[i].is_object() || !es[i].contains("a") || !es[i].contains("b")) {
        throw InputError(where + ": expected {\"a\": [..], \"b\": [..]}");
      }
      edges.push_back({read_point(es[i]["a"], where), read_point(es[i]["b"], where)});
    }
  }

  std::optional<Aabb> bounds;
  if (doc.contains("bounds")) {
    const json& b = doc["bounds"];
    const std::string where = sourceName + ": bounds";
    if (!b.is_object() || !b.contains("min") || !b.contains("max")) {
      throw InputError(where + ": expected {\"min\": [..], \"max\": [..]}");
    }
    Aabb box;
    box.expand(read_point(b["min"], where));
    box.expand(read_point(b["max"], where));
    bounds = box;
  }

  const double threshold =
      number_or(doc, "dihedral_threshold_rad", kDefaultDihedralThreshold, sourceName);

  try {
    return Scene::build(std::move(materials), triangles, edges, bounds, threshold);
  } catch (const InputError& e) {
    throw InputError(sourceName + ": " + e.what());
  }
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path.string() + ": cannot open scene file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str(), path.string());
}

}  // namespace raycal
