#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "raycal/scene.hpp"

namespace raycal {

/// Binary BVH, median split on the longest centroid axis.
class Bvh {
 public:
  explicit Bvh(std::span<const Triangle> triangles);

  /// Nearest hit with t in (tMin, tMax); ties resolve to the lowest triangle index.
  std::optional<Hit> closest(std::span<const Triangle> triangles, const Vec3& origin,
                             const Vec3& direction, double tMin, double tMax) const;

  /// Calls visit for every triangle hit with t in (tMin, tMax). Stops early if visit returns false.
  void for_each_hit(std::span<const Triangle> triangles, const Vec3& origin, const Vec3& direction,
                    double tMin, double tMax, const std::function<bool(const Hit&)>& visit) const;

 private:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: first primitive; inner: right child
    std::uint32_t count = 0;  // 0 for inner nodes
  };

  std::uint32_t build(std::span<const Triangle> triangles, std::vector<Vec3>& centroids,
                      std::uint32_t begin, std::uint32_t end);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

}  // namespace raycal
