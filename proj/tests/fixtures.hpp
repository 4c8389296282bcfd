#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "raycal/scene.hpp"

namespace fixtures {

using raycal::TriangleInput;
using raycal::Vec3;

inline raycal::MaterialId material(const std::string& name) {
  const auto mats = raycal::builtin_materials();
  for (std::size_t i = 0; i < mats.size(); ++i) {
    if (mats[i].name == name) return static_cast<raycal::MaterialId>(i);
  }
  throw std::runtime_error("no material " + name);
}

/// Quad a-b-c-d split along a-c.
inline void add_quad(std::vector<TriangleInput>& out, Vec3 a, Vec3 b, Vec3 c, Vec3 d, raycal::MaterialId m) {
  out.push_back({a, b, c, m});
  out.push_back({a, c, d, m});
}

/// Vertical wall in the plane y = y0 spanning x in [x0, x1], z in [z0, z1].
inline void add_wall_y(std::vector<TriangleInput>& out, double y0, double x0, double x1, double z0, double z1,
                       raycal::MaterialId m) {
  add_quad(out, {x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1}, m);
}

inline raycal::Scene scene_of(const std::vector<TriangleInput>& tris) {
  return raycal::Scene::build(raycal::builtin_materials(), tris);
}

/// Axis-aligned box with outward-facing quads.
inline void add_box(std::vector<TriangleInput>& out, Vec3 lo, Vec3 hi, raycal::MaterialId m) {
  const Vec3 p[8] = {{lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {lo.x, hi.y, lo.z},
                     {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}};
  add_quad(out, p[0], p[3], p[2], p[1], m);
  add_quad(out, p[4], p[5], p[6], p[7], m);
  add_quad(out, p[0], p[1], p[5], p[4], m);
  add_quad(out, p[1], p[2], p[6], p[5], m);
  add_quad(out, p[2], p[3], p[7], p[6], m);
  add_quad(out, p[3], p[0], p[4], p[7], m);
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v{g(rng), g(rng), g(rng)};
  return raycal::normalized(v);
}

}  // namespace fixtures

namespace fixtures {

/// Ground plane and a handful of buildings around a street crossing.
inline raycal::Scene calibration_scene() {
  std::vector<TriangleInput> t;
  const auto concrete = material("concrete");
  const auto brick = material("brick");
  const auto glass = material("glass");
  add_quad(t, {-120, -120, 0}, {120, -120, 0}, {120, 120, 0}, {-120, 120, 0}, concrete);
  add_box(t, {-60, 12, 0}, {-10, 40, 18}, brick);
  add_box(t, {10, 14, 0}, {55, 45, 25}, glass);
  add_box(t, {-55, -45, 0}, {-12, -10, 12}, concrete);
  add_box(t, {12, -40, 0}, {35, -11, 30}, brick);
  add_box(t, {40, -35, 0}, {70, -15, 9}, concrete);
  add_box(t, {-90, -5, 0}, {-75, 8, 20}, glass);
  return scene_of(t);
}

}  // namespace fixtures
