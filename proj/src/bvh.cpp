#include "bvh.hpp"

#include <algorithm>
#include <numeric>

namespace raycal {

namespace {
constexpr std::uint32_t kLeafSize = 4;

Vec3 inverse(const Vec3& d) { return {1.0 / d.x, 1.0 / d.y, 1.0 / d.z}; }
}  // namespace

Bvh::Bvh(std::span<const Triangle> triangles) {
  if (triangles.empty()) return;
  order_.resize(triangles.size());
  std::iota(order_.begin(), order_.end(), 0u);
  std::vector<Vec3> centroids;
  centroids.reserve(triangles.size());
  for (const auto& t : triangles) centroids.push_back(t.centroid());
  nodes_.reserve(2 * triangles.size());
  build(triangles, centroids, 0, static_cast<std::uint32_t>(triangles.size()));
}

std::uint32_t Bvh::build(std::span<const Triangle> triangles, std::vector<Vec3>& centroids,
                         std::uint32_t begin, std::uint32_t end) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  Aabb box;
  Aabb centroidBox;
  for (std::uint32_t i = begin; i < end; ++i) {
    const Triangle& t = triangles[order_[i]];
    box.expand(t.v0);
    box.expand(t.v1);
    box.expand(t.v2);
    centroidBox.expand(centroids[order_[i]]);
  }
  nodes_[index].box = box;

  const std::uint32_t n = end - begin;
  const Vec3 spread = centroidBox.extent();
  if (n <= kLeafSize || (spread.x <= 0.0 && spread.y <= 0.0 && spread.z <= 0.0)) {
    nodes_[index].first = begin;
    nodes_[index].count = n;
    return index;
  }

  const int axis = centroidBox.longest_axis();
  const std::uint32_t mid = begin + n / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = centroids[a][axis];
                     const double cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  build(triangles, centroids, begin, mid);
  const std::uint32_t right = build(triangles, centroids, mid, end);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  return index;
}

std::optional<Hit> Bvh::closest(std::span<const Triangle> triangles, const Vec3& origin,
                                const Vec3& direction, double tMin, double tMax) const {
  std::optional<Hit> best;
  if (nodes_.empty()) return best;
  double bestT = tMax;
  const Vec3 inv = inverse(direction);
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const std::uint32_t idx = stack[--top];
    const Node& node = nodes_[idx];
    if (!node.box.ray_entry(origin, inv, bestT)) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = order_[i];
        auto h = intersect_triangle(triangles[tri], tri, origin, direction);
        if (!h || h->t <= tMin || h->t >= tMax) continue;
        if (h->t < bestT || (h->t == bestT && best && h->triangle < best->triangle) ||
            (h->t == bestT && !best)) {
          bestT = h->t;
          best = h;
        }
      }
    } else {
      stack[top++] = node.first;
      stack[top++] = idx + 1;
    }
  }
  return best;
}

void Bvh::for_each_hit(std::span<const Triangle> triangles, const Vec3& origin,
                       const Vec3& direction, double tMin, double tMax,
                       const std::function<bool(const Hit&)>& visit) const {
  if (nodes_.empty()) return;
  const Vec3 inv = inverse(direction);
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!node.box.ray_entry(origin, inv, tMax)) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = order_[i];
        auto h = intersect_triangle(triangles[tri], tri, origin, direction);
        if (h && h->t > tMin && h->t < tMax) {
          if (!visit(*h)) return;
        }
      }
    } else {
      const auto self = static_cast<std::uint32_t>(&node - nodes_.data());
      stack[top++] = node.first;
      stack[top++] = self + 1;
    }
  }
}

}  // namespace raycal
