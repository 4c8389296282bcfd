// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "../fixtures.hpp"
#include "raycal/calib.hpp"
#include "raycal/channel.hpp"
#include "raycal/em.hpp"
#include "raycal/tracer.hpp"
#include "raycal/validate.hpp"

using namespace raycal;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limitS, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool inTime = limitS <= 0.0 || sec < limitS;
  const bool pass = o.pass && inTime;
  if (!pass) ++failures;
  std::printf("%s  %d  %-34s %8.3f s  %s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(), sec, o.detail.c_str(),
              inTime ? "" : " (over time limit)");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome ci_fits() {
  const auto rows = load_point_data(std::string(RAYCAL_TEST_DATA) + "/table1_point_data.csv");
  struct Want {
    double f;
    LosType loc;
    double n;
    double sigma;  // < 0: not checked
  };
  const Want want[] = {{6.75, LosType::Los, 1.86, 1.06},
                       {6.75, LosType::Nlos, 2.82, -1.0},
                       {16.95, LosType::Los, 1.88, 1.14},
                       {16.95, LosType::Nlos, 2.85, -1.0}};
  bool ok = true;
  std::string detail;
  for (const auto& w : want) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) {
      if (!r.outage && std::abs(r.frequencyGhz - w.f) < 1e-9 && r.losType == w.loc) pts.emplace_back(r.trSepM, r.omniPlDb);
    }
    const auto fit = fit_ci(pts, w.f);
    ok = ok && std::abs(fit.n - w.n) <= 0.02;
    if (w.sigma >= 0.0) ok = ok && std::abs(fit.sigmaDb - w.sigma) <= 0.05;
    detail += fmt("%g %s n=%.3f s=%.3f; ", w.f, w.loc == LosType::Los ? "LOS" : "NLOS", fit.n, fit.sigmaDb);
  }
  return {ok, detail};
}

Outcome ks_exact() {
  const struct {
    double d;
    std::size_t n;
    double p;
  } cases[] = {{8.0 / 18.0, 18, 0.0560}, {5.0 / 13.0, 13, 0.2999}, {3.0 / 11.0, 11, 0.8326}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const double p = ks_p_exact_equal_n(c.d, c.n);
    ok = ok && std::abs(p - c.p) <= 0.0005;
    detail += fmt("n=%zu p=%.4f (want %.4f); ", c.n, p, c.p);
  }
  return {ok, detail};
}

Outcome rayleigh() {
  const double h1 = rayleigh_threshold(wavelength(6.75e9), 0.0);
  const double h2 = rayleigh_threshold(wavelength(16.95e9), 0.0);
  bool ok = std::abs(h1 - 5.6e-3) <= 0.1e-3 && std::abs(h2 - 2.2e-3) <= 0.1e-3;
  int rough = 0;
  for (const auto& m : builtin_materials()) {
    for (double f : {6.75e9, 16.95e9}) rough += is_smooth(m.hRms, wavelength(f), 0.0) ? 0 : 1;
  }
  ok = ok && rough == 0;
  return {ok, fmt("%.2f mm / %.2f mm, %d rough material-frequency pairs", h1 * 1e3, h2 * 1e3, rough)};
}

Outcome free_space() {
  const Scene empty = Scene::build(builtin_materials(), {});
  double worst = 0.0;
  for (double f : {6.75, 16.95}) {
    for (double d : {10.0, 50.0, 100.0, 500.0, 1000.0}) {
      TraceConfig cfg;
      cfg.frequencyHz = f * 1e9;
      cfg.rayCount = 1000;
      cfg.maxDepth = 1;
      const Vec3 tx{0, 0, 10};
      const Vec3 rx{d, 0, 10};
      const auto paths = trace(empty, tx, rx, cfg);
      const auto pl = omni_path_loss(synthesize_cir(paths, cfg.cutoffDbm), 0.0);
      if (!pl) return {false, fmt("no LOS at %g GHz, %g m", f, d)};
      worst = std::max(worst, std::abs(*pl - (fspl_1m_db(f) + 20.0 * std::log10(d))));
    }
  }
  return {worst <= 0.05, fmt("max |PL - FSPL| = %.4f dB", worst)};
}

Outcome canyon() {
  std::vector<TriangleInput> t;
  const auto metal = fixtures::material("metal");
  const double w = 20.0;
  fixtures::add_wall_y(t, 0.0, -300.0, 400.0, -100.0, 100.0, metal);
  fixtures::add_wall_y(t, w, -300.0, 400.0, -100.0, 100.0, metal);
  const Scene s = fixtures::scene_of(t);
  const Vec3 tx{0, 6, 10};
  const Vec3 rx{60, 13, 10};
  const int depth = 5;
  TraceConfig cfg;
  cfg.frequencyHz = 6.75e9;
  cfg.rayCount = 100000;
  cfg.maxDepth = depth;
  const auto paths = trace(s, tx, rx, cfg);

  // Image ladder: alternate mirrors starting on either wall.
  std::vector<std::pair<double, int>> images{{distance(tx, rx), 0}};
  for (int first = 0; first < 2; ++first) {
    Vec3 img = tx;
    int wall = first;
    for (int order = 1; order <= depth; ++order) {
      img.y = 2.0 * (wall == 0 ? 0.0 : w) - img.y;
      images.emplace_back(distance(img, rx), order);
      wall = 1 - wall;
    }
  }
  std::sort(images.begin(), images.end());
  if (paths.size() != images.size()) return {false, fmt("%zu paths, %zu images", paths.size(), images.size())};

  const Complex eta = permittivity(s.materials()[metal], cfg.frequencyHz).relative();
  double dt = 0.0, dp = 0.0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto [d, order] = images[i];
    const double sinGrazing = std::abs(tx.x - rx.x) / d;
    const double gamma = std::abs(fresnel(eta, std::acos(std::sqrt(1.0 - sinGrazing * sinGrazing))).te);
    dt = std::max(dt, std::abs(paths[i].delayNs - d / kSpeedOfLightMPerNs));
    dp = std::max(dp, std::abs(paths[i].powerDbm - (-fspl_db(cfg.frequencyHz, d) + order * 20.0 * std::log10(gamma))));
  }
  return {dt <= 0.1 && dp <= 0.1, fmt("%zu paths, max delay err %.2e ns, max power err %.2e dB", paths.size(), dt, dp)};
}

Outcome calibration() {
  const Scene s = fixtures::calibration_scene();
  TraceConfig cfg;
  cfg.frequencyHz = 6.75e9;
  cfg.rayCount = 5000;
  cfg.maxDepth = 2;
  const Vec3 txTrue{-40, 3, 4};
  const Vec3 rxTrue{45, -5, 1.5};
  const auto meas = simulate_pdp(s, txTrue, rxTrue, cfg, 1.0);
  const CalibConfig cc;

  int recovered = 0, monotone = 0, reduced = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const double a = 2.0 * kPi * seed / 10.0 + 0.3;
    const double b = a + 2.1;
    const double r1 = 3.0 + 2.0 * ((seed * 7) % 10) / 10.0;
    const double r2 = 3.0 + 2.0 * ((seed * 3) % 10) / 10.0;
    const Vec3 tx0 = txTrue + Vec3{r1 * std::cos(a), r1 * std::sin(a), 0.0};
    const Vec3 rx0 = rxTrue + Vec3{r2 * std::cos(b), r2 * std::sin(b), 0.0};
    const auto res = calibrate(s, tx0, rx0, meas, cfg, cc);
    const double etx = distance(res.txStar, txTrue);
    const double erx = distance(res.rxStar, rxTrue);
    bool mono = true;
    for (std::size_t i = 1; i < res.lossTrace.size(); ++i) mono = mono && res.lossTrace[i].total <= res.lossTrace[i - 1].total;
    recovered += etx <= 0.5 && erx <= 0.5;
    monotone += mono;
    reduced += res.loss_reduction_percent() >= 90.0;
    std::printf("      seed %d: start %.2f/%.2f m, end %.2f/%.2f m, loss %.2f -> %.2f (%.1f%%)\n", seed, r1, r2, etx, erx,
                res.initial_loss(), res.final_loss(), res.loss_reduction_percent());
  }
  const bool ok = recovered >= 9 && monotone == 10 && reduced >= 9;
  return {ok, fmt("recovered %d/10, monotone %d/10, >=90%% reduction %d/10", recovered, monotone, reduced)};
}

Outcome utd_continuity() {
  const double f = 6.75e9;
  const double k = wavenumber(f);
  EdgeFrame e;
  e.origin = {0, 0, 0};
  e.tangent = {0, 0, 1};
  e.xAxis = {1, 0, 0};
  e.yAxis = {0, 1, 0};
  e.n = 1.5;
  e.length = 100.0;
  const double phiS = kPi / 3.0;
  const double sp = 10.0;
  const double so = 10.0;
  const Vec3 src{sp * std::cos(phiS), sp * std::sin(phiS), 0.0};
  const double boundary = kPi + phiS;
  const Complex pec{std::numeric_limits<double>::infinity(), 0.0};
  auto total_db = [&](double phi, bool soft) {
    const Vec3 obs{so * std::cos(phi), so * std::sin(phi), 0.0};
    Complex field{0.0, 0.0};
    if (phi < boundary) {
      const double r = distance(src, obs);
      field += std::exp(Complex{0.0, -k * r}) / r;
    }
    const auto d = utd_coefficient(e, normalized(src), normalized(obs), sp, so, k, pec);
    field += std::exp(Complex{0.0, -k * (sp + so)}) / (sp + so) * (soft ? d.te : d.tm);
    return 20.0 * std::log10(std::abs(field));
  };
  const double half = kPi / 180.0;
  const double step = 1e-4;
  double worst = 0.0;
  for (bool soft : {true, false}) {
    double prev = total_db(boundary - half, soft);
    for (double phi = boundary - half + step; phi <= boundary + half; phi += step) {
      const double cur = total_db(phi, soft);
      worst = std::max(worst, std::abs(cur - prev));
      prev = cur;
    }
    worst = std::max(worst, std::abs(total_db(boundary - 1e-7, soft) - total_db(boundary + 1e-7, soft)));
  }
  return {worst <= 0.5, fmt("largest step across the sweep %.3f dB", worst)};
}

Outcome kernels() {
  PowerDelayProfile p;
  p.binWidthNs = 1.0;
  p.powerMw.assign(101, 0.0);
  p.powerMw.front() = p.powerMw.back() = 1.0;
  const double ds = rms_delay_spread(p).value_or(-1.0);
  const std::vector<AngularComponent> pair{{-60.0, 1.0}, {60.0, 1.0}};
  const std::vector<AngularComponent> one{{37.0, 1.0}};
  const double as3 = angular_spread_3gpp(pair);
  const double asf = angular_spread_fleury(pair);
  const double single = std::max(angular_spread_3gpp(one), angular_spread_fleury(one));
  PowerDelayProfile tap;
  tap.powerMw = {1.0};
  const double ds1 = rms_delay_spread(tap).value_or(-1.0);
  const bool ok = std::abs(ds - 50.0) < 1e-9 && std::abs(as3 - 67.51) <= 0.01 && std::abs(asf - 60.0) <= 0.5 &&
                  single == 0.0 && ds1 == 0.0;
  return {ok, fmt("DS %.4f ns, 3GPP AS %.4f deg (want 67.51 +-0.01), Fleury AS %.4f deg, single %.1f/%.1f", ds, as3, asf,
                  ds1, single)};
}

}  // namespace

int main() {
  report(1, "CI fit from published point data", 1.0, ci_fits);
  report(2, "exact KS p-values", 1.0, ks_exact);
  report(3, "Rayleigh thresholds", 0.0, rayleigh);
  report(4, "free-space Friis", 5.0, free_space);
  report(5, "canyon image ladder", 60.0, canyon);
  report(6, "synthetic calibration recovery", 600.0, calibration);
  report(7, "UTD shadow-boundary continuity", 10.0, utd_continuity);
  report(8, "statistics kernels", 0.0, kernels);
  std::printf("N/A   9  published DS/AS means, field calibration metrics and filtered CDF shapes: not reproducible "
              "without the measured data and scene\n");
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
