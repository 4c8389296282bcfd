#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "raycal/channel.hpp"

namespace raycal {

struct GeoOrigin {
  double lat0 = 0.0;
  double lon0 = 0.0;
  double earthRadiusM = 6371008.8;
};

struct LocalXY {
  double x = 0.0;  // east
  double y = 0.0;  // north
};

/// Spherical azimuthal equidistant projection about the origin.
/// Throws InputError for invalid coordinates or a point antipodal to the origin.
LocalXY gps_to_local(double latDeg, double lonDeg, const GeoOrigin& origin);

struct CalibConfig {
  double dMaxM = 10.0;
  double epsilonM = 0.1;
  int maxIters = 10;
  std::vector<double> coarseOffsets{-5.0, -2.5, 0.0, 2.5, 5.0};
  double fineRangeM = 1.5;
  double fineStepM = 0.5;
  double alpha = 0.7;
  double beta = 0.05;
  double wUnmatched = 0.5;
  double tauRefNs = 500.0;
  double tNormNs = 100.0;
  double peakThresholdDb = -25.0;
  double alignWindowNs = 500.0;
  /// Peak count at which alignment switches from max-peak to correlation.
  std::size_t correlationPeakCount = 3;
  /// Loss assigned to a candidate position whose trace yields no paths.
  double outageLoss = 1e6;

  void validate() const;
};

struct Peak {
  double delayNs = 0.0;
  double normPower = 0.0;  // linear, global peak = 1
};

/// Local maxima within thresholdDb of the global peak, at bin centers. A plateau yields one peak.
std::vector<Peak> extract_peaks(const PowerDelayProfile& pdp, double thresholdDb);

/// tau_sim(max) - tau_meas(max). Throws InputError for an empty profile.
double align_max_peak(const PowerDelayProfile& sim, const PowerDelayProfile& meas);

/// Shift s (a whole number of bins within +-windowNs) maximizing sum P_sim(t) P_meas(t + s).
/// Ties go to the smallest |s|, then the negative one.
double align_correlation(const PowerDelayProfile& sim, const PowerDelayProfile& meas, double windowNs);

struct PeakLoss {
  double loss = 0.0;
  std::size_t nMatched = 0;
};

/// Peak delays must already be excess delays on a common reference.
PeakLoss peak_matching_loss(const std::vector<Peak>& simPeaks, const std::vector<Peak>& measPeaks,
                            const CalibConfig& cfg);

double unmatched_penalty(std::size_t nSim, std::size_t nMeas, double wUnmatched);

/// Mean squared dB difference over bins where either profile is significant; each profile is
/// floored at its own threshold. Both must share a bin width.
double shape_loss(const PowerDelayProfile& sim, const PowerDelayProfile& meas, double thresholdDb);

struct LossBreakdown {
  double lPeak = 0.0;
  double lUnmatched = 0.0;
  double lShape = 0.0;
  double lDistance = 0.0;
  double total = 0.0;
  double simShiftNs = 0.0;  // delay shift applied to the simulated profile
  bool correlationAlignment = false;
};

/// Aligns sim to meas, then evaluates the weighted peak, richness, shape and displacement terms.
LossBreakdown combined_loss(const PowerDelayProfile& sim, const PowerDelayProfile& meas, const Vec3& dispTx,
                            const Vec3& dispRx, const CalibConfig& cfg);

struct PowellResult {
  LocalXY x;
  double fx = 0.0;
  int iterations = 0;
  std::size_t evaluations = 0;
  std::vector<double> trace;  // best value after each iteration, starting with f(x0)
};

/// Powell conjugate directions with golden-section line searches confined to the disc of the
/// given radius about center. Throws InvariantError if the objective is not finite.
PowellResult powell_minimize(const std::function<double(double, double)>& f, LocalXY x0, LocalXY center,
                             double radius, double tolM = 0.1, int maxIterations = 20);

struct CalibrationResult {
  Vec3 tx0, rx0;
  Vec3 txStar, rxStar;
  std::vector<LossBreakdown> lossTrace;  // initial state, then one entry per accepted step
  double displacementTx = 0.0;
  double displacementRx = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t traceRuns = 0;
  double initialPeakDbm = 0.0;
  double finalPeakDbm = 0.0;
  double measPeakDbm = 0.0;

  double initial_loss() const { return lossTrace.front().total; }
  double final_loss() const { return lossTrace.back().total; }
  double loss_reduction_percent() const;
  /// |sim peak - meas peak| before calibration minus the same after.
  double peak_power_improvement_db() const;
};

/// Simulated PDP for one position pair on the measured grid; empty when nothing is received.
PowerDelayProfile simulate_pdp(const Scene& scene, const Vec3& tx, const Vec3& rx, const TraceConfig& cfg,
                               double binWidthNs);

/// Alternating RX/TX minimization: coarse grid, fine grid and Powell per side, positions
/// confined to dMax about the starting points and z fixed. Throws InfeasibleError when every
/// evaluated candidate is an outage.
CalibrationResult calibrate(const Scene& scene, const Vec3& tx0, const Vec3& rx0, const PowerDelayProfile& measPdp,
                            const TraceConfig& traceCfg, const CalibConfig& calibCfg);

std::string format_calibration_report(const CalibrationResult& result);

}  // namespace raycal
