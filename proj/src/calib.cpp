#include "raycal/calib.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "json.hpp"
#include "raycal/errors.hpp"
#include "raycal/parallel.hpp"

namespace raycal {

namespace {

constexpr double kDeg = kPi / 180.0;

long long bin_index(double delayNs, double binWidthNs) { return std::llround(delayNs / binWidthNs); }

void require_same_grid(const PowerDelayProfile& a, const PowerDelayProfile& b) {
  if (std::abs(a.binWidthNs - b.binWidthNs) > 1e-9 * std::max(a.binWidthNs, b.binWidthNs)) {
    throw InputError("profiles must share a bin width");
  }
}

double power_at(const PowerDelayProfile& p, long long k) {
  const long long i = k - bin_index(p.firstBinDelayNs, p.binWidthNs);
  if (i < 0 || i >= static_cast<long long>(p.powerMw.size())) return 0.0;
  return p.powerMw[static_cast<std::size_t>(i)];
}

double peak_dbm(const PowerDelayProfile& p) {
  if (p.empty()) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p.powerMw[p.peak_bin()]);
}

}  // namespace

LocalXY gps_to_local(double latDeg, double lonDeg, const GeoOrigin& origin) {
  if (!(std::abs(latDeg) <= 90.0) || !(std::abs(lonDeg) <= 180.0) || !(std::abs(origin.lat0) <= 90.0) ||
      !(std::abs(origin.lon0) <= 180.0)) {
    throw InputError("latitude/longitude out of range");
  }
  const double p1 = origin.lat0 * kDeg;
  const double p2 = latDeg * kDeg;
  const double dl = (lonDeg - origin.lon0) * kDeg;
  const double sdp = std::sin((p2 - p1) / 2.0);
  const double sdl = std::sin(dl / 2.0);
  const double a = std::clamp(sdp * sdp + std::cos(p1) * std::cos(p2) * sdl * sdl, 0.0, 1.0);
  const double c = 2.0 * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
  if (c >= kPi - 1e-9) throw InputError("point is antipodal to the projection origin");
  const double az = std::atan2(std::sin(dl) * std::cos(p2),
                               std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl));
  return {origin.earthRadiusM * c * std::sin(az), origin.earthRadiusM * c * std::cos(az)};
}

void CalibConfig::validate() const {
  if (!(dMaxM > fineRangeM && fineRangeM > fineStepM && fineStepM > 0.0)) {
    throw InputError("calibration requires dMax > fine range > fine step > 0");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
  if (!(epsilonM > 0.0) || maxIters < 1) throw InputError("epsilon and maxIters must be positive");
  if (coarseOffsets.empty()) throw InputError("coarse offsets must not be empty");
  if (!(tNormNs > 0.0) || !(tauRefNs > 0.0)) throw InputError("time constants must be positive");
}

std::vector<Peak> extract_peaks(const PowerDelayProfile& p, double thresholdDb) {
  std::vector<Peak> out;
  if (p.empty()) return out;
  const double peak = p.powerMw[p.peak_bin()];
  if (!(peak > 0.0)) return out;
  const double floor = peak * std::pow(10.0, thresholdDb / 10.0);
  const std::size_t n = p.powerMw.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && p.powerMw[j + 1] == p.powerMw[i]) ++j;
    const double v = p.powerMw[i];
    const bool leftLower = i == 0 || p.powerMw[i - 1] < v;
    const bool rightLower = j + 1 == n || p.powerMw[j + 1] < v;
    if (v > 0.0 && v >= floor && leftLower && rightLower) out.push_back({p.bin_center(i), v / peak});
    i = j + 1;
  }
  return out;
}

double align_max_peak(const PowerDelayProfile& sim, const PowerDelayProfile& meas) {
  if (sim.empty() || meas.empty()) throw InputError("alignment requires non-empty profiles");
  return sim.bin_center(sim.peak_bin()) - meas.bin_center(meas.peak_bin());
}

double align_correlation(const PowerDelayProfile& sim, const PowerDelayProfile& meas, double windowNs) {
  if (sim.empty() || meas.empty()) throw InputError("alignment requires non-empty profiles");
  require_same_grid(sim, meas);
  const double bw = sim.binWidthNs;
  const long long window = static_cast<long long>(std::floor(windowNs / bw + 1e-9));
  const long long s0 = bin_index(sim.firstBinDelayNs, bw);
  auto score = [&](long long shift) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sim.powerMw.size(); ++i) {
      if (sim.powerMw[i] > 0.0) acc += sim.powerMw[i] * power_at(meas, s0 + static_cast<long long>(i) + shift);
    }
    return acc;
  };
  long long best = 0;
  double bestScore = score(0);
  for (long long m = 1; m <= window; ++m) {
    for (long long s : {-m, m}) {
      const double v = score(s);
      if (v > bestScore) {
        bestScore = v;
        best = s;
      }
    }
  }
  return static_cast<double>(best) * bw;
}

PeakLoss peak_matching_loss(const std::vector<Peak>& simPeaks, const std::vector<Peak>& measPeaks,
                            const CalibConfig& cfg) {
  if (simPeaks.empty() || measPeaks.empty()) return {};
  double sum = 0.0;
  for (const auto& s : simPeaks) {
    const double w = std::exp(-s.delayNs / cfg.tauRefNs);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : measPeaks) {
      best = std::min(best, std::abs(s.delayNs - m.delayNs) / cfg.tNormNs + std::abs(s.normPower - m.normPower));
    }
    sum += w * best;
  }
  return {sum / static_cast<double>(simPeaks.size()), simPeaks.size()};
}

double unmatched_penalty(std::size_t nSim, std::size_t nMeas, double wUnmatched) {
  const std::size_t hi = std::max(nSim, nMeas);
  if (hi == 0) return wUnmatched;
  const double diff = nSim > nMeas ? static_cast<double>(nSim - nMeas) : static_cast<double>(nMeas - nSim);
  return wUnmatched * diff / static_cast<double>(hi);
}

double shape_loss(const PowerDelayProfile& sim, const PowerDelayProfile& meas, double thresholdDb) {
  if (sim.empty() || meas.empty()) return 0.0;
  require_same_grid(sim, meas);
  const double bw = sim.binWidthNs;
  const double floorSimDb = peak_dbm(sim) + thresholdDb;
  const double floorMeasDb = peak_dbm(meas) + thresholdDb;
  const long long a0 = bin_index(sim.firstBinDelayNs, bw);
  const long long b0 = bin_index(meas.firstBinDelayNs, bw);
  const long long lo = std::min(a0, b0);
  const long long hi = std::max(a0 + static_cast<long long>(sim.powerMw.size()),
                                b0 + static_cast<long long>(meas.powerMw.size()));
  auto level = [](double mw, double floorDb) {
    return mw > 0.0 ? std::max(10.0 * std::log10(mw), floorDb) : floorDb;
  };
  double sum = 0.0;
  std::size_t count = 0;
  for (long long k = lo; k < hi; ++k) {
    const double s = power_at(sim, k);
    const double m = power_at(meas, k);
    const double sDb = level(s, floorSimDb);
    const double mDb = level(m, floorMeasDb);
    const bool sigS = s > 0.0 && 10.0 * std::log10(s) >= floorSimDb;
    const bool sigM = m > 0.0 && 10.0 * std::log10(m) >= floorMeasDb;
    if (!sigS && !sigM) continue;
    sum += (sDb - mDb) * (sDb - mDb);
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

LossBreakdown combined_loss(const PowerDelayProfile& sim, const PowerDelayProfile& meas, const Vec3& dispTx,
                            const Vec3& dispRx, const CalibConfig& cfg) {
  if (sim.empty() || meas.empty()) throw InputError("loss requires non-empty profiles");
  LossBreakdown out;
  const auto simPeaks = extract_peaks(sim, cfg.peakThresholdDb);
  const auto measPeaks = extract_peaks(meas, cfg.peakThresholdDb);
  out.correlationAlignment = std::max(simPeaks.size(), measPeaks.size()) >= cfg.correlationPeakCount;
  out.simShiftNs = out.correlationAlignment ? align_correlation(sim, meas, cfg.alignWindowNs) : -align_max_peak(sim, meas);

  PowerDelayProfile shifted = sim;
  shifted.firstBinDelayNs += out.simShiftNs;
  const double reference = std::min(meas.firstBinDelayNs, shifted.firstBinDelayNs);
  std::vector<Peak> simExcess = simPeaks;
  for (auto& p : simExcess) p.delayNs += out.simShiftNs - reference;
  std::vector<Peak> measExcess = measPeaks;
  for (auto& p : measExcess) p.delayNs -= reference;

  out.lPeak = peak_matching_loss(simExcess, measExcess, cfg).loss;
  out.lUnmatched = unmatched_penalty(simPeaks.size(), measPeaks.size(), cfg.wUnmatched);
  out.lShape = shape_loss(shifted, meas, cfg.peakThresholdDb);
  out.lDistance = (dot(dispTx, dispTx) + dot(dispRx, dispRx)) / (cfg.dMaxM * cfg.dMaxM);
  out.total = cfg.alpha * (out.lPeak + out.lUnmatched) + (1.0 - cfg.alpha) * out.lShape + cfg.beta * out.lDistance;
  return out;
}

double CalibrationResult::loss_reduction_percent() const {
  const double l0 = initial_loss();
  if (!(l0 > 0.0)) return 0.0;
  return 100.0 * (l0 - final_loss()) / l0;
}

double CalibrationResult::peak_power_improvement_db() const {
  return std::abs(initialPeakDbm - measPeakDbm) - std::abs(finalPeakDbm - measPeakDbm);
}

PowerDelayProfile simulate_pdp(const Scene& scene, const Vec3& tx, const Vec3& rx, const TraceConfig& cfg,
                               double binWidthNs) {
  const auto paths = trace(scene, tx, rx, cfg);
  return pdp(synthesize_cir(paths, cfg.cutoffDbm), binWidthNs);
}

namespace {

class Evaluator {
 public:
  Evaluator(const Scene& scene, const Vec3& tx0, const Vec3& rx0, const PowerDelayProfile& meas,
            const TraceConfig& traceCfg, const CalibConfig& cfg)
      : scene_(scene), tx0_(tx0), rx0_(rx0), meas_(meas), traceCfg_(traceCfg), cfg_(cfg) {}

  LossBreakdown evaluate(const Vec3& tx, const Vec3& rx, unsigned workers) {
    // Candidates that leave the scene are scored like outages.
    const bool inside = scene_.in_bounds(tx) && scene_.in_bounds(rx);
    const auto sim = inside ? profile(tx, rx, workers) : nullptr;
    if (!sim || sim->empty()) {
      LossBreakdown out;
      out.lDistance = (dot(tx - tx0_, tx - tx0_) + dot(rx - rx0_, rx - rx0_)) / (cfg_.dMaxM * cfg_.dMaxM);
      out.total = cfg_.outageLoss;
      return out;
    }
    feasible_ = true;
    return combined_loss(*sim, meas_, tx - tx0_, rx - rx0_, cfg_);
  }

  std::shared_ptr<const PowerDelayProfile> profile(const Vec3& tx, const Vec3& rx, unsigned workers) {
    const Key key = quantize(tx, rx);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    TraceConfig cfg = traceCfg_;
    cfg.workers = workers;
    auto sim = std::make_shared<const PowerDelayProfile>(simulate_pdp(scene_, tx, rx, cfg, meas_.binWidthNs));
    ++runs_;
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, std::move(sim)).first->second;
  }

  bool feasible() const { return feasible_; }
  std::size_t runs() const { return runs_; }

 private:
  using Key = std::array<long long, 6>;

  static Key quantize(const Vec3& a, const Vec3& b) {
    auto q = [](double v) { return std::llround(v * 100.0); };
    return {q(a.x), q(a.y), q(a.z), q(b.x), q(b.y), q(b.z)};
  }

  const Scene& scene_;
  Vec3 tx0_, rx0_;
  const PowerDelayProfile& meas_;
  TraceConfig traceCfg_;
  const CalibConfig& cfg_;
  std::mutex mutex_;
  std::map<Key, std::shared_ptr<const PowerDelayProfile>> cache_;
  std::atomic<bool> feasible_{false};
  std::atomic<std::size_t> runs_{0};
};

/// Offsets from the side's origin are truncated to whole centimetres, so a cached trace is
/// exactly the trace of the position reported and snapping never leaves the dMax disc.
Vec3 snap(const Vec3& origin, double x, double y) {
  auto q = [](double v) { return std::trunc(v * 100.0) / 100.0; };
  return {origin.x + q(x - origin.x), origin.y + q(y - origin.y), origin.z};
}

struct Candidate {
  double dx = 0.0, dy = 0.0;  // offset from the side's origin
  LossBreakdown loss;
};

bool better(const Candidate& a, const Candidate& b) {
  return std::tie(a.loss.total, a.dx, a.dy) < std::tie(b.loss.total, b.dx, b.dy);
}

}  // namespace

CalibrationResult calibrate(const Scene& scene, const Vec3& tx0, const Vec3& rx0, const PowerDelayProfile& measPdp,
                            const TraceConfig& traceCfg, const CalibConfig& cfg) {
  cfg.validate();
  traceCfg.validate();
  if (measPdp.empty()) throw InputError("measured PDP is empty");
  if (!scene.in_bounds(tx0) || !scene.in_bounds(rx0)) throw InputError("calibration start lies outside the scene");

  Evaluator eval(scene, tx0, rx0, measPdp, traceCfg, cfg);
  const unsigned outer = resolve_workers(traceCfg.workers);
  const unsigned inner = outer;

  CalibrationResult result;
  result.tx0 = tx0;
  result.rx0 = rx0;
  result.measPeakDbm = peak_dbm(measPdp);
  Vec3 tx = tx0;
  Vec3 rx = rx0;
  LossBreakdown current = eval.evaluate(tx, rx, inner);
  result.lossTrace.push_back(current);
  result.initialPeakDbm = peak_dbm(*eval.profile(tx, rx, inner));

  auto optimize_side = [&](bool rxSide) {
    const Vec3 origin = rxSide ? rx0 : tx0;
    auto place = [&](double x, double y) {
      const Vec3 p = snap(origin, x, y);
      return rxSide ? std::pair{tx, p} : std::pair{p, rx};
    };
    auto grid = [&](double cx, double cy, const std::vector<double>& offsets) {
      std::vector<Candidate> cands;
      for (double ox : offsets) {
        for (double oy : offsets) {
          const double dx = cx + ox;
          const double dy = cy + oy;
          if (std::hypot(dx, dy) > cfg.dMaxM + 1e-9) continue;
          cands.push_back({dx, dy, {}});
        }
      }
      parallel_for(cands.size(), outer, [&](std::size_t i) {
        const auto [t, r] = place(origin.x + cands[i].dx, origin.y + cands[i].dy);
        cands[i].loss = eval.evaluate(t, r, 1);
      });
      return *std::min_element(cands.begin(), cands.end(), better);
    };

    const Candidate coarse = grid(0.0, 0.0, cfg.coarseOffsets);
    std::vector<double> fineOffsets;
    const int steps = static_cast<int>(std::floor(cfg.fineRangeM / cfg.fineStepM + 1e-9));
    for (int i = -steps; i <= steps; ++i) fineOffsets.push_back(i * cfg.fineStepM);
    Candidate best = grid(coarse.dx, coarse.dy, fineOffsets);
    if (better(coarse, best)) best = coarse;

    auto objective = [&](double x, double y) {
      const auto [t, r] = place(x, y);
      return eval.evaluate(t, r, inner).total;
    };
    const auto pw = powell_minimize(objective, {origin.x + best.dx, origin.y + best.dy}, {origin.x, origin.y},
                                    cfg.dMaxM, cfg.epsilonM);
    Vec3 chosen = snap(origin, origin.x + best.dx, origin.y + best.dy);
    LossBreakdown chosenLoss = best.loss;
    if (pw.fx < chosenLoss.total) {
      chosen = snap(origin, pw.x.x, pw.x.y);
      const auto [t, r] = place(pw.x.x, pw.x.y);
      chosenLoss = eval.evaluate(t, r, inner);
    }
    const Vec3 before = rxSide ? rx : tx;
    if (chosenLoss.total < current.total) {
      (rxSide ? rx : tx) = chosen;
      current = chosenLoss;
    }
    result.lossTrace.push_back(current);
    return distance(before, rxSide ? rx : tx);
  };

  for (int iter = 1; iter <= cfg.maxIters; ++iter) {
    result.iterations = iter;
    const double moveRx = optimize_side(true);
    const double moveTx = optimize_side(false);
    if (moveRx < cfg.epsilonM && moveTx < cfg.epsilonM) {
      result.converged = true;
      break;
    }
  }
  if (!eval.feasible()) throw InfeasibleError("every calibration candidate is an outage");

  result.txStar = tx;
  result.rxStar = rx;
  result.displacementTx = distance(tx, tx0);
  result.displacementRx = distance(rx, rx0);
  result.finalPeakDbm = peak_dbm(*eval.profile(tx, rx, inner));
  result.traceRuns = eval.runs();
  return result;
}

std::string format_calibration_report(const CalibrationResult& r) {
  using nlohmann::ordered_json;
  auto vec = [](const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); };
  ordered_json trace = ordered_json::array();
  for (const auto& l : r.lossTrace) {
    trace.push_back({{"peak", l.lPeak},
                     {"unmatched", l.lUnmatched},
                     {"shape", l.lShape},
                     {"distance", l.lDistance},
                     {"total", l.total},
                     {"sim_shift_ns", l.simShiftNs},
                     {"alignment", l.correlationAlignment ? "correlation" : "max_peak"}});
  }
  ordered_json j = {{"tx_initial", vec(r.tx0)},
                    {"rx_initial", vec(r.rx0)},
                    {"tx_final", vec(r.txStar)},
                    {"rx_final", vec(r.rxStar)},
                    {"displacement_tx_m", r.displacementTx},
                    {"displacement_rx_m", r.displacementRx},
                    {"converged", r.converged},
                    {"iterations", r.iterations},
                    {"trace_runs", r.traceRuns},
                    {"initial_loss", r.initial_loss()},
                    {"final_loss", r.final_loss()},
                    {"loss_reduction_percent", r.loss_reduction_percent()},
                    {"meas_peak_dbm", r.measPeakDbm},
                    {"initial_peak_dbm", r.initialPeakDbm},
                    {"final_peak_dbm", r.finalPeakDbm},
                    {"peak_power_improvement_db", r.peak_power_improvement_db()},
                    {"loss_trace", trace}};
  return j.dump(2) + "\n";
}

}  // namespace raycal
