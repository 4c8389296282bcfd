#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raycal/channel.hpp"

namespace raycal {

inline constexpr double kRatioEpsilon = 1e-6;

struct PairedSample {
  double rtValue = 0.0;
  double measValue = 0.0;
  std::string linkId;
};

/// meas / (rt + epsilon).
double ratio(const PairedSample& pair, double epsilon = kRatioEpsilon);

/// Drops pairs where either value is zero (outages) or not finite.
std::vector<PairedSample> exclude_zeros(std::span<const PairedSample> pairs);

/// Linear interpolation between order statistics at h = (n - 1) q.
double percentile_linear(std::vector<double> values, double q);

enum class RemovalReason { Ratio, Absolute, Both };

struct RemovedPair {
  PairedSample pair;
  RemovalReason reason = RemovalReason::Ratio;
  double ratio = 0.0;
  double absDifference = 0.0;
};

struct FilterReport {
  std::vector<PairedSample> kept;
  std::vector<RemovedPair> removed;
  double p90Threshold = 0.0;
  std::vector<double> ratios;  // per input pair

  std::vector<PairedSample> removed_by_ratio() const;
  std::vector<PairedSample> removed_by_absolute() const;
};

/// Single pass: removes |meas - rt| > P90 or ratio outside [0.2, 5]. Needs at least two pairs.
FilterReport combined_filter(std::span<const PairedSample> pairs);

/// sup |F_a - F_b| over the pooled sample points.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Exact two-sided p-value for equal sample sizes n = m (up to n = 64).
double ks_p_exact_equal_n(double d, std::size_t n);

/// Kolmogorov limiting distribution with effective size nm / (n + m).
double ks_p_asymptotic(double d, std::size_t n, std::size_t m);

struct KsResult {
  double d = 0.0;
  std::optional<double> pExact;
  double pAsymptotic = 1.0;
  std::size_t n = 0;
  std::size_t m = 0;
};

KsResult ks_test(std::span<const double> rt, std::span<const double> meas);

struct CdfPoint {
  double value = 0.0;
  double probability = 0.0;
};

/// Sorted distinct values with F = (number of samples <= value) / n.
std::vector<CdfPoint> cdf_export(std::span<const double> samples);

enum class Parameter { Ds, Asa, Asd, Zsa, Zsd };

Parameter parse_parameter(const std::string& name);
std::string parameter_name(Parameter p);
/// The 3GPP or Fleury column for spreads; the DS column for Ds.
double parameter_value(const PointDataRecord& r, Parameter p, bool fleury);

struct ValidationGroup {
  std::string label;  // "pooled" or "<freq> GHz"
  std::vector<PairedSample> pairs;  // after zero exclusion
  std::size_t excludedZeros = 0;
  FilterReport filter;
  KsResult before;
  KsResult after;
};

struct ValidationReport {
  Parameter parameter = Parameter::Ds;
  bool fleury = false;
  std::vector<ValidationGroup> groups;
};

/// Pairs records by (frequency, link id), then runs zero exclusion, the combined filter and KS
/// before and after filtering. perFrequency adds one group per frequency besides the pooled one.
ValidationReport validate_point_data(std::span<const PointDataRecord> rt, std::span<const PointDataRecord> meas,
                                     Parameter parameter, bool fleury, bool perFrequency);

std::string format_validation_report(const ValidationReport& report);

}  // namespace raycal
