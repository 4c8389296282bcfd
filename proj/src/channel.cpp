#include "raycal/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "raycal/errors.hpp"

namespace raycal {

namespace {

double wrap_deg(double a) {
  double r = std::fmod(a + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  return r - 180.0;
}

double total_power(std::span<const AngularComponent> components) {
  double total = 0.0;
  for (const auto& c : components) total += c.powerMw;
  if (!(total > 0.0)) throw InputError("angular spread requires positive total power");
  return total;
}

}  // namespace

double PowerDelayProfile::total_power_mw() const {
  return std::accumulate(powerMw.begin(), powerMw.end(), 0.0);
}

std::size_t PowerDelayProfile::peak_bin() const {
  return static_cast<std::size_t>(std::max_element(powerMw.begin(), powerMw.end()) - powerMw.begin());
}

Cir synthesize_cir(const std::vector<PropagationPath>& paths, double cutoffDbm) {
  Cir cir;
  cir.cutoffDbm = cutoffDbm;
  for (const auto& p : paths) {
    if (p.powerDbm >= cutoffDbm) cir.taps.push_back({p.delayNs, p.fieldAmp});
  }
  std::stable_sort(cir.taps.begin(), cir.taps.end(),
                   [](const CirTap& a, const CirTap& b) { return a.delayNs < b.delayNs; });
  return cir;
}

PowerDelayProfile pdp(const Cir& cir, double binWidthNs) {
  if (!(binWidthNs > 0.0)) throw InputError("PDP bin width must be positive");
  PowerDelayProfile out;
  out.binWidthNs = binWidthNs;
  if (cir.taps.empty()) return out;
  double earliest = std::numeric_limits<double>::infinity();
  for (const auto& t : cir.taps) earliest = std::min(earliest, t.delayNs);
  out.firstBinDelayNs = std::floor(earliest / binWidthNs) * binWidthNs;
  for (const auto& t : cir.taps) {
    const auto bin = static_cast<std::size_t>(std::floor((t.delayNs - out.firstBinDelayNs) / binWidthNs + 1e-9));
    if (bin >= out.powerMw.size()) out.powerMw.resize(bin + 1, 0.0);
    out.powerMw[bin] += t.power_mw();
  }
  return out;
}

std::optional<double> omni_path_loss(const Cir& cir, double txPowerDbm) {
  if (cir.taps.empty()) return std::nullopt;
  Complex h{0.0, 0.0};
  for (const auto& t : cir.taps) h += t.amplitude;
  const double pMw = std::norm(h) * 1000.0;
  if (!(pMw > 0.0)) return kOutagePathLossDb;
  return std::min(kOutagePathLossDb, txPowerDbm - 10.0 * std::log10(pMw));
}

double fspl_1m_db(double frequencyGhz) { return 32.4 + 20.0 * std::log10(frequencyGhz); }

PathLossFit fit_ci(std::span<const std::pair<double, double>> records, double frequencyGhz) {
  if (records.size() < 2) throw InputError("CI fit needs at least two records");
  PathLossFit fit;
  fit.fsplRefDb = fspl_1m_db(frequencyGhz);
  fit.count = records.size();
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& [d, pl] : records) {
    if (!(d >= 1.0)) throw InputError("CI fit requires distances >= 1 m");
    const double x = 10.0 * std::log10(d);
    sxy += x * (pl - fit.fsplRefDb);
    sxx += x * x;
  }
  if (!(sxx > 0.0)) throw InputError("CI fit is degenerate: all distances are 1 m");
  fit.n = sxy / sxx;
  double ss = 0.0;
  for (const auto& [d, pl] : records) {
    const double r = (pl - fit.fsplRefDb) - fit.n * 10.0 * std::log10(d);
    ss += r * r;
  }
  fit.sigmaDb = std::sqrt(ss / static_cast<double>(records.size()));
  return fit;
}

std::optional<double> rms_delay_spread(const PowerDelayProfile& p, double thresholdDb) {
  if (p.empty()) return std::nullopt;
  const double peak = p.powerMw[p.peak_bin()];
  if (!(peak > 0.0)) return std::nullopt;
  const double floor = peak * std::pow(10.0, thresholdDb / 10.0);
  std::optional<double> reference;
  double sumP = 0.0;
  double sumTau = 0.0;
  for (std::size_t i = 0; i < p.powerMw.size(); ++i) {
    const double w = p.powerMw[i];
    if (!(w > 0.0) || w < floor) continue;
    if (!reference) reference = p.bin_delay(i);
    sumP += w;
    sumTau += w * (p.bin_delay(i) - *reference);
  }
  const double mean = sumTau / sumP;
  double second = 0.0;
  for (std::size_t i = 0; i < p.powerMw.size(); ++i) {
    const double w = p.powerMw[i];
    if (!(w > 0.0) || w < floor) continue;
    const double d = (p.bin_delay(i) - *reference) - mean;
    second += w * d * d;
  }
  return std::sqrt(std::max(0.0, second / sumP));
}

double angular_spread_3gpp(std::span<const AngularComponent> components) {
  const double total = total_power(components);
  Complex sum{0.0, 0.0};
  for (const auto& c : components) sum += c.powerMw * std::polar(1.0, c.angleDeg * kPi / 180.0);
  const double r = std::min(1.0, std::abs(sum) / total);
  if (r <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(std::max(0.0, -2.0 * std::log(r))) * 180.0 / kPi;
}

double angular_spread_fleury(std::span<const AngularComponent> components) {
  const double total = total_power(components);
  double best = std::numeric_limits<double>::infinity();
  for (int shift = 0; shift < 360; ++shift) {
    double mean = 0.0;
    for (const auto& c : components) mean += wrap_deg(c.angleDeg + shift) * c.powerMw;
    mean /= total;
    double second = 0.0;
    for (const auto& c : components) {
      const double rel = wrap_deg(wrap_deg(c.angleDeg + shift) - mean);
      second += rel * rel * c.powerMw;
    }
    best = std::min(best, std::sqrt(second / total));
  }
  return best;
}

namespace {

struct SpreadSet {
  double asa3, asaF, asd3, asdF, zsa3, zsaF, zsd3, zsdF;
};

SpreadSet spreads_of(const std::vector<const PropagationPath*>& paths, const std::vector<double>& weights) {
  std::vector<AngularComponent> aoa, aod, zoa, zod;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const double p = std::norm(paths[i]->fieldAmp) * 1000.0 * weights[i];
    aoa.push_back({paths[i]->aoaAz, p});
    aod.push_back({paths[i]->aodAz, p});
    zoa.push_back({paths[i]->aoaZe, p});
    zod.push_back({paths[i]->aodZe, p});
  }
  return {angular_spread_3gpp(aoa), angular_spread_fleury(aoa), angular_spread_3gpp(aod),
          angular_spread_fleury(aod), angular_spread_3gpp(zoa), angular_spread_fleury(zoa),
          angular_spread_3gpp(zod), angular_spread_fleury(zod)};
}

void store_spreads(PointDataRecord& r, const SpreadSet& s) {
  r.asaDeg3gpp = s.asa3;
  r.asaDegFleury = s.asaF;
  r.asdDeg3gpp = s.asd3;
  r.asdDegFleury = s.asdF;
  r.zsaDeg3gpp = s.zsa3;
  r.zsaDegFleury = s.zsaF;
  r.zsdDeg3gpp = s.zsd3;
  r.zsdDegFleury = s.zsdF;
}

PointDataRecord base_record(const Vec3& tx, const Vec3& rx, const LinkContext& link) {
  PointDataRecord r;
  r.frequencyGhz = link.frequencyHz / 1e9;
  r.txId = link.txId;
  r.rxId = link.rxId;
  r.trSepM = distance(tx, rx);
  return r;
}

}  // namespace

PointDataRecord assemble_point_record(const std::vector<PropagationPath>& paths, const Vec3& tx, const Vec3& rx,
                                      const LinkContext& link, double binWidthNs) {
  PointDataRecord r = base_record(tx, rx, link);
  const Cir cir = synthesize_cir(paths, -std::numeric_limits<double>::infinity());
  const auto pl = omni_path_loss(cir, link.txPowerDbm);
  const auto ds = rms_delay_spread(pdp(cir, binWidthNs));
  if (!pl || !ds || *pl >= kOutagePathLossDb) {
    r.outage = true;
    return r;
  }
  r.losType = std::any_of(paths.begin(), paths.end(), [](const auto& p) { return p.is_los(); }) ? LosType::Los
                                                                                               : LosType::Nlos;
  r.omniPlDb = *pl;
  r.omniDsNs = *ds;
  std::vector<const PropagationPath*> ptrs;
  for (const auto& p : paths) ptrs.push_back(&p);
  store_spreads(r, spreads_of(ptrs, std::vector<double>(ptrs.size(), 1.0)));
  return r;
}

std::vector<Vec3> spatial_average_offsets(const Vec3& rx, double wavelengthM) {
  const double h = 1.0 / std::sqrt(2.0);
  const Vec3 dirs[8] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {h, h, 0}, {h, -h, 0}, {-h, h, 0}, {-h, -h, 0}};
  std::vector<Vec3> out{rx};
  for (int m = 1; m <= 3; ++m) {
    for (const Vec3& d : dirs) out.push_back(rx + d * (m * wavelengthM));
  }
  return out;
}

SpatialAverage spatial_average_stats(const Scene& scene, const Vec3& tx, const Vec3& rx, const TraceConfig& cfg,
                                     const LinkContext& link) {
  SpatialAverage out;
  out.record = base_record(tx, rx, link);
  const auto points = spatial_average_offsets(rx, wavelength(cfg.frequencyHz));
  std::vector<std::vector<PropagationPath>> traced;
  bool centerLos = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!scene.in_bounds(points[i])) {
      out.diagnostics.push_back("offset point " + std::to_string(i) + " outside scene bounds; skipped");
      continue;
    }
    auto paths = trace(scene, tx, points[i], cfg);
    if (i == 0) centerLos = std::any_of(paths.begin(), paths.end(), [](const auto& p) { return p.is_los(); });
    traced.push_back(std::move(paths));
  }
  out.pointsUsed = traced.size();
  if (traced.empty()) {
    out.record.outage = true;
    return out;
  }

  const double weight = 1.0 / static_cast<double>(traced.size());
  double meanPowerMw = 0.0;
  Cir pooled;
  pooled.cutoffDbm = cfg.cutoffDbm;
  std::vector<const PropagationPath*> pooledPaths;
  std::vector<double> weights;
  for (const auto& paths : traced) {
    const Cir cir = synthesize_cir(paths, cfg.cutoffDbm);
    Complex h{0.0, 0.0};
    for (const auto& t : cir.taps) {
      h += t.amplitude;
      pooled.taps.push_back({t.delayNs, t.amplitude * std::sqrt(weight)});
    }
    meanPowerMw += std::norm(h) * 1000.0 * weight;
    for (const auto& p : paths) {
      pooledPaths.push_back(&p);
      weights.push_back(weight);
    }
  }
  std::stable_sort(pooled.taps.begin(), pooled.taps.end(),
                   [](const CirTap& a, const CirTap& b) { return a.delayNs < b.delayNs; });
  const auto ds = rms_delay_spread(pdp(pooled));
  if (!(meanPowerMw > 0.0) || !ds || pooledPaths.empty()) {
    out.record.outage = true;
    return out;
  }
  out.record.omniPlDb = std::min(kOutagePathLossDb, link.txPowerDbm - 10.0 * std::log10(meanPowerMw));
  out.record.omniDsNs = *ds;
  out.record.losType = centerLos ? LosType::Los : LosType::Nlos;
  store_spreads(out.record, spreads_of(pooledPaths, weights));
  return out;
}

}  // namespace raycal
