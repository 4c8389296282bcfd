#include <array>
#include <cmath>

#include "raycal/em.hpp"

namespace raycal {

namespace {

// Mielenz, "Computation of Fresnel Integrals II", J. Res. NIST 105 (2000).
// Power series below x = 1.6; rational auxiliary functions f(x), g(x) above.
constexpr std::array<double, 12> kCos = {
    1.0,
    -0.24674011002723,
    0.02818550087789,
    -0.00160488313564,
    5.407413381408390e-05,
    -1.200097255860028e-06,
    1.884349911527268e-08,
    -2.202276925445466e-10,
    1.989685792418021e-12,
    -1.430918973171519e-14,
    8.384729705118549e-17,
    -4.079981449233875e-19};

constexpr std::array<double, 12> kSin = {
    0.52359877559830,
    -0.09228058535804,
    0.00724478420420,
    -3.121169423545791e-04,
    8.444272883545251e-06,
    -1.564714450092211e-07,
    2.108212193321454e-09,
    -2.157430680584343e-11,
    1.733410208887483e-13,
    -1.122324478798395e-15,
    5.980053239210401e-18,
    -2.667871362841397e-20};

constexpr std::array<double, 12> kF = {0.318309844,  9.34626e-8,   -0.09676631, 0.000606222,
                                       0.325539361,  0.325206461,  -7.450551455, 32.20380908,
                                       -78.8035274,  118.5343352,  -102.4339798, 39.06207702};

constexpr std::array<double, 12> kG = {0.0,          0.101321519,  -4.07292e-5,  -0.152068115,
                                       -0.046292605, 1.622793598,  -5.199186089, 7.477942354,
                                       -0.695291507, -15.10996796, 22.28401942,  -10.89968491};

constexpr double kSeriesLimit = 1.6;

struct Auxiliary {
  double f;
  double g;
};

// f(x), g(x) with C = 1/2 + f sin(pi x^2/2) - g cos(pi x^2/2), S = 1/2 - f cos - g sin.
Auxiliary auxiliary(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  double f = 0.0;
  double g = 0.0;
  for (int n = 11; n >= 0; --n) {
    f = f * inv2 + kF[static_cast<std::size_t>(n)];
    g = g * inv2 + kG[static_cast<std::size_t>(n)];
  }
  return {f * inv, g * inv};
}

}  // namespace

FresnelCS fresnel_integrals(double x) {
  const double ax = std::abs(x);
  FresnelCS out{0.0, 0.0};
  if (ax <= kSeriesLimit) {
    const double x4 = ax * ax * ax * ax;
    double c = 0.0;
    double s = 0.0;
    for (int n = 11; n >= 0; --n) {
      c = c * x4 + kCos[static_cast<std::size_t>(n)];
      s = s * x4 + kSin[static_cast<std::size_t>(n)];
    }
    out = {c * ax, s * ax * ax * ax};
  } else {
    const auto [f, g] = auxiliary(ax);
    const double arg = 0.5 * kPi * ax * ax;
    const double sn = std::sin(arg);
    const double cs = std::cos(arg);
    out = {0.5 + f * sn - g * cs, 0.5 - f * cs - g * sn};
  }
  if (x < 0.0) {
    out.c = -out.c;
    out.s = -out.s;
  }
  return out;
}

Complex transition_function(double x) {
  if (x <= 0.0) return {0.0, 0.0};
  const double rootX = std::sqrt(x);
  const double u = rootX * std::sqrt(2.0 / kPi);
  if (u > kSeriesLimit) {
    // The oscillating phases cancel exactly: F = sqrt(2 pi X) (f + j g).
    const auto [f, g] = auxiliary(u);
    return std::sqrt(2.0 * kPi * x) * Complex{f, g};
  }
  const FresnelCS cs = fresnel_integrals(u);
  const Complex tail = std::sqrt(kPi / 2.0) * Complex{0.5 - cs.c, -(0.5 - cs.s)};
  return Complex{0.0, 2.0} * rootX * std::exp(Complex{0.0, x}) * tail;
}

}  // namespace raycal
