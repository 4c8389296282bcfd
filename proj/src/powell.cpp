#include <algorithm>
#include <cmath>
#include <string>

#include "raycal/calib.hpp"
#include "raycal/errors.hpp"

namespace raycal {

namespace {

constexpr double kInvPhi = 0.61803398874989484820;
constexpr double kLineTol = 0.01;
constexpr double kInitialStep = 1.0;

struct Point {
  double x, y;
};

class Objective {
 public:
  explicit Objective(const std::function<double(double, double)>& f) : f_(f) {}

  double operator()(const Point& p) {
    const double v = f_(p.x, p.y);
    ++evaluations;
    if (!std::isfinite(v)) {
      throw InvariantError("objective is not finite at (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
    }
    return v;
  }

  std::size_t evaluations = 0;

 private:
  const std::function<double(double, double)>& f_;
};

/// Parameter interval [lo, hi] keeping p + t d inside the disc.
bool disc_interval(const Point& p, const Point& d, const Point& c, double r, double& lo, double& hi) {
  const double ox = p.x - c.x;
  const double oy = p.y - c.y;
  const double a = d.x * d.x + d.y * d.y;
  const double b = 2.0 * (ox * d.x + oy * d.y);
  const double cc = ox * ox + oy * oy - r * r;
  const double disc = b * b - 4.0 * a * cc;
  if (a <= 0.0 || disc < 0.0) return false;
  const double s = std::sqrt(disc);
  lo = std::min(0.0, (-b - s) / (2.0 * a));
  hi = std::max(0.0, (-b + s) / (2.0 * a));
  return hi - lo > 1e-12;
}

/// Bracketed golden-section search along a unit direction. Returns the best step (0 if none improves).
double line_search(Objective& f, const Point& p, const Point& d, double f0, const Point& c, double r, double& fBest) {
  fBest = f0;
  double lo = 0.0;
  double hi = 0.0;
  if (!disc_interval(p, d, c, r, lo, hi)) return 0.0;
  double tBest = 0.0;
  auto g = [&](double t) {
    const double v = f({p.x + t * d.x, p.y + t * d.y});
    if (v < fBest) {
      fBest = v;
      tBest = t;
    }
    return v;
  };

  const double h = kInitialStep;
  double a = std::max(lo, -h);
  double b = std::min(hi, h);
  const double ga = a < 0.0 ? g(a) : f0;
  const double gb = b > 0.0 ? g(b) : f0;
  if (gb < f0 && gb <= ga) {
    double t0 = 0.0, t1 = b, g1 = gb;
    b = hi;
    while (t1 < hi) {
      const double t2 = std::min(hi, t1 + 1.618 * (t1 - t0));
      const double g2 = g(t2);
      if (g2 >= g1) {
        b = t2;
        break;
      }
      t0 = t1;
      t1 = t2;
      g1 = g2;
    }
    a = t0;
  } else if (ga < f0) {
    double t0 = 0.0, t1 = a, g1 = ga;
    a = lo;
    while (t1 > lo) {
      const double t2 = std::max(lo, t1 + 1.618 * (t1 - t0));
      const double g2 = g(t2);
      if (g2 >= g1) {
        a = t2;
        break;
      }
      t0 = t1;
      t1 = t2;
      g1 = g2;
    }
    b = t0;
  }

  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double g1 = g(x1);
  double g2 = g(x2);
  while (b - a > kLineTol) {
    if (g1 <= g2) {
      b = x2;
      x2 = x1;
      g2 = g1;
      x1 = b - kInvPhi * (b - a);
      g1 = g(x1);
    } else {
      a = x1;
      x1 = x2;
      g1 = g2;
      x2 = a + kInvPhi * (b - a);
      g2 = g(x2);
    }
  }
  return tBest;
}

}  // namespace

PowellResult powell_minimize(const std::function<double(double, double)>& f, LocalXY x0, LocalXY center,
                             double radius, double tolM, int maxIterations) {
  Objective obj(f);
  const Point c{center.x, center.y};
  Point x{x0.x, x0.y};
  double fx = obj(x);
  PowellResult out;
  out.trace.push_back(fx);
  Point dirs[2] = {{1.0, 0.0}, {0.0, 1.0}};

  for (int iter = 1; iter <= maxIterations; ++iter) {
    out.iterations = iter;
    const Point start = x;
    const double fStart = fx;
    double biggestDrop = 0.0;
    int biggestIndex = 0;
    for (int i = 0; i < 2; ++i) {
      double fNew = fx;
      const double t = line_search(obj, x, dirs[i], fx, c, radius, fNew);
      if (fNew < fx) {
        if (fx - fNew > biggestDrop) {
          biggestDrop = fx - fNew;
          biggestIndex = i;
        }
        x = {x.x + t * dirs[i].x, x.y + t * dirs[i].y};
        fx = fNew;
      }
    }
    const Point delta{x.x - start.x, x.y - start.y};
    const double moved = std::hypot(delta.x, delta.y);
    if (moved > 1e-12) {
      const Point d{delta.x / moved, delta.y / moved};
      double fNew = fx;
      const double t = line_search(obj, x, d, fx, c, radius, fNew);
      if (fNew < fx) {
        x = {x.x + t * d.x, x.y + t * d.y};
        fx = fNew;
      }
      if (fStart - fx > 0.0) {
        dirs[biggestIndex] = dirs[1];
        dirs[1] = d;
      }
    }
    out.trace.push_back(fx);
    if (std::hypot(x.x - start.x, x.y - start.y) < tolM) break;
  }
  out.x = {x.x, x.y};
  out.fx = fx;
  out.evaluations = obj.evaluations;
  return out;
}

}  // namespace raycal
