#include "raycal/validate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "json.hpp"
#include "raycal/errors.hpp"

namespace raycal {

namespace {

__extension__ using Int128 = __int128;
__extension__ using UInt128 = unsigned __int128;

constexpr std::size_t kMaxExactN = 64;

std::vector<UInt128> binomial_row(std::size_t n) {
  std::vector<UInt128> row(n + 1, 0);
  row[0] = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = i; j > 0; --j) row[j] += row[j - 1];
  }
  return row;
}

}  // namespace

double ratio(const PairedSample& pair, double epsilon) { return pair.measValue / (pair.rtValue + epsilon); }

std::vector<PairedSample> exclude_zeros(std::span<const PairedSample> pairs) {
  std::vector<PairedSample> out;
  for (const auto& p : pairs) {
    if (p.rtValue != 0.0 && p.measValue != 0.0 && std::isfinite(p.rtValue) && std::isfinite(p.measValue)) {
      out.push_back(p);
    }
  }
  return out;
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

std::vector<PairedSample> FilterReport::removed_by_ratio() const {
  std::vector<PairedSample> out;
  for (const auto& r : removed) {
    if (r.reason != RemovalReason::Absolute) out.push_back(r.pair);
  }
  return out;
}

std::vector<PairedSample> FilterReport::removed_by_absolute() const {
  std::vector<PairedSample> out;
  for (const auto& r : removed) {
    if (r.reason != RemovalReason::Ratio) out.push_back(r.pair);
  }
  return out;
}

FilterReport combined_filter(std::span<const PairedSample> pairs) {
  if (pairs.size() < 2) throw InputError("outlier filtering needs at least two valid pairs");
  FilterReport report;
  std::vector<double> diffs;
  for (const auto& p : pairs) diffs.push_back(std::abs(p.measValue - p.rtValue));
  report.p90Threshold = percentile_linear(diffs, 0.9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double r = ratio(pairs[i]);
    report.ratios.push_back(r);
    const bool absolute = diffs[i] > report.p90Threshold;
    const bool extreme = r < 0.2 || r > 5.0;
    if (!absolute && !extreme) {
      report.kept.push_back(pairs[i]);
      continue;
    }
    const RemovalReason reason =
        absolute && extreme ? RemovalReason::Both : (absolute ? RemovalReason::Absolute : RemovalReason::Ratio);
    report.removed.push_back({pairs[i], reason, r, diffs[i]});
  }
  return report;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("KS statistic needs two non-empty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  double d = 0.0;
  for (const auto* sample : {&sa, &sb}) {
    for (double x : *sample) {
      const double fa = static_cast<double>(std::upper_bound(sa.begin(), sa.end(), x) - sa.begin()) / na;
      const double fb = static_cast<double>(std::upper_bound(sb.begin(), sb.end(), x) - sb.begin()) / nb;
      d = std::max(d, std::abs(fa - fb));
    }
  }
  return d;
}

double ks_p_exact_equal_n(double d, std::size_t n) {
  if (n == 0 || n > kMaxExactN) throw InputError("exact KS p-value supports 1 <= n <= 64");
  if (!(d >= 0.0 && d <= 1.0 + 1e-12)) throw InputError("KS statistic must lie in [0, 1]");
  const long long k = static_cast<long long>(std::ceil(d * static_cast<double>(n) - 1e-9));
  if (k <= 0) return 1.0;
  const auto row = binomial_row(2 * n);
  Int128 num = 0;
  const long long nn = static_cast<long long>(n);
  for (long long j = 1; nn - j * k >= 0; ++j) {
    const auto term = static_cast<Int128>(row[static_cast<std::size_t>(nn - j * k)]);
    num += (j % 2 == 1) ? term : -term;
  }
  const long double p = 2.0L * static_cast<long double>(num) / static_cast<long double>(row[n]);
  return std::clamp(static_cast<double>(p), 0.0, 1.0);
}

double ks_p_asymptotic(double d, std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw InputError("KS sample sizes must be positive");
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double lambda = d * std::sqrt(nd * md / (nd + md));
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  for (int k = 1; k < 1'000'000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1) ? term : -term;
    if (term < 1e-12) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> rt, std::span<const double> meas) {
  KsResult r;
  r.d = ks_statistic(rt, meas);
  r.n = rt.size();
  r.m = meas.size();
  r.pAsymptotic = ks_p_asymptotic(r.d, r.n, r.m);
  if (r.n == r.m && r.n <= kMaxExactN) r.pExact = ks_p_exact_equal_n(r.d, r.n);
  return r;
}

std::vector<CdfPoint> cdf_export(std::span<const double> samples) {
  if (samples.empty()) throw InputError("CDF of an empty sample");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i + 1] == s[i]) continue;
    out.push_back({s[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

Parameter parse_parameter(const std::string& name) {
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "ds") return Parameter::Ds;
  if (lower == "asa") return Parameter::Asa;
  if (lower == "asd") return Parameter::Asd;
  if (lower == "zsa") return Parameter::Zsa;
  if (lower == "zsd") return Parameter::Zsd;
  throw InputError("unknown parameter '" + name + "' (expected ds, asa, asd, zsa or zsd)");
}

std::string parameter_name(Parameter p) {
  switch (p) {
    case Parameter::Ds: return "DS";
    case Parameter::Asa: return "ASA";
    case Parameter::Asd: return "ASD";
    case Parameter::Zsa: return "ZSA";
    case Parameter::Zsd: return "ZSD";
  }
  return "?";
}

double parameter_value(const PointDataRecord& r, Parameter p, bool fleury) {
  if (r.outage) return 0.0;
  switch (p) {
    case Parameter::Ds: return r.omniDsNs;
    case Parameter::Asa: return fleury ? r.asaDegFleury : r.asaDeg3gpp;
    case Parameter::Asd: return fleury ? r.asdDegFleury : r.asdDeg3gpp;
    case Parameter::Zsa: return fleury ? r.zsaDegFleury : r.zsaDeg3gpp;
    case Parameter::Zsd: return fleury ? r.zsdDegFleury : r.zsdDeg3gpp;
  }
  return 0.0;
}

namespace {

ValidationGroup run_group(std::string label, const std::vector<PairedSample>& raw) {
  ValidationGroup g;
  g.label = std::move(label);
  g.pairs = exclude_zeros(raw);
  g.excludedZeros = raw.size() - g.pairs.size();
  if (g.pairs.size() < 2) throw InputError(g.label + ": fewer than two valid pairs after zero exclusion");
  auto values = [](const std::vector<PairedSample>& ps, bool rt) {
    std::vector<double> v;
    for (const auto& p : ps) v.push_back(rt ? p.rtValue : p.measValue);
    return v;
  };
  g.before = ks_test(values(g.pairs, true), values(g.pairs, false));
  g.filter = combined_filter(g.pairs);
  if (!g.filter.kept.empty()) g.after = ks_test(values(g.filter.kept, true), values(g.filter.kept, false));
  return g;
}

std::string reason_name(RemovalReason r) {
  switch (r) {
    case RemovalReason::Ratio: return "ratio";
    case RemovalReason::Absolute: return "p90";
    case RemovalReason::Both: return "ratio+p90";
  }
  return "?";
}

}  // namespace

ValidationReport validate_point_data(std::span<const PointDataRecord> rt, std::span<const PointDataRecord> meas,
                                     Parameter parameter, bool fleury, bool perFrequency) {
  using Key = std::tuple<long long, std::string>;
  auto key = [](const PointDataRecord& r) { return Key{std::llround(r.frequencyGhz * 1e6), r.link_id()}; };
  std::map<Key, const PointDataRecord*> measByKey;
  for (const auto& r : meas) measByKey.emplace(key(r), &r);

  std::vector<PairedSample> pooled;
  std::map<long long, std::vector<PairedSample>> byFreq;
  for (const auto& r : rt) {
    const auto it = measByKey.find(key(r));
    if (it == measByKey.end()) continue;
    PairedSample s{parameter_value(r, parameter, fleury), parameter_value(*it->second, parameter, fleury),
                   r.link_id()};
    pooled.push_back(s);
    byFreq[std::get<0>(key(r))].push_back(s);
  }
  if (pooled.empty()) throw InputError("no common links between the two point-data files");

  ValidationReport report;
  report.parameter = parameter;
  report.fleury = fleury;
  report.groups.push_back(run_group("pooled", pooled));
  if (perFrequency) {
    for (const auto& [f, pairs] : byFreq) {
      std::string label = std::to_string(static_cast<double>(f) / 1e6);
      label.erase(label.find_last_not_of('0') + 1);
      if (label.back() == '.') label.pop_back();
      report.groups.push_back(run_group(label + " GHz", pairs));
    }
  }
  return report;
}

std::string format_validation_report(const ValidationReport& report) {
  using nlohmann::ordered_json;
  auto ks_json = [](const KsResult& k) {
    ordered_json j = {{"d", k.d}, {"n", k.n}, {"m", k.m}, {"p_asymptotic", k.pAsymptotic}};
    j["p_exact"] = k.pExact ? ordered_json(*k.pExact) : ordered_json(nullptr);
    return j;
  };
  auto cdf_json = [](const std::vector<PairedSample>& ps, bool rt) {
    std::vector<double> v;
    for (const auto& p : ps) v.push_back(rt ? p.rtValue : p.measValue);
    ordered_json arr = ordered_json::array();
    if (v.empty()) return arr;
    for (const auto& c : cdf_export(v)) arr.push_back({c.value, c.probability});
    return arr;
  };
  ordered_json groups = ordered_json::array();
  for (const auto& g : report.groups) {
    ordered_json removed = ordered_json::array();
    for (const auto& r : g.filter.removed) {
      removed.push_back({{"link", r.pair.linkId},
                         {"rt", r.pair.rtValue},
                         {"meas", r.pair.measValue},
                         {"ratio", r.ratio},
                         {"abs_difference", r.absDifference},
                         {"reason", reason_name(r.reason)}});
    }
    const double reduction = g.before.d > 0.0 ? 100.0 * (g.before.d - g.after.d) / g.before.d : 0.0;
    groups.push_back({{"group", g.label},
                      {"pairs", g.pairs.size()},
                      {"excluded_zeros", g.excludedZeros},
                      {"p90_threshold", g.filter.p90Threshold},
                      {"kept", g.filter.kept.size()},
                      {"removed", removed},
                      {"ks_original", ks_json(g.before)},
                      {"ks_filtered", ks_json(g.after)},
                      {"ks_reduction_percent", reduction},
                      {"cdf", {{"rt_original", cdf_json(g.pairs, true)},
                               {"meas_original", cdf_json(g.pairs, false)},
                               {"rt_filtered", cdf_json(g.filter.kept, true)},
                               {"meas_filtered", cdf_json(g.filter.kept, false)}}}});
  }
  ordered_json j = {{"parameter", parameter_name(report.parameter)},
                    {"definition", report.parameter == Parameter::Ds ? "" : (report.fleury ? "fleury" : "3gpp")},
                    {"groups", groups}};
  return j.dump(2) + "\n";
}

}  // namespace raycal
