#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "raycal/errors.hpp"
#include "raycal/validate.hpp"

using namespace raycal;

namespace {

std::vector<PairedSample> pairs_of(const std::vector<std::pair<double, double>>& v) {
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back({v[i].first, v[i].second, "L" + std::to_string(i)});
  return out;
}

/// Lattice-path count of walks that stay strictly inside |i - j| < k, as a probability.
double ks_p_lattice(std::size_t n, std::size_t k) {
  std::vector<std::vector<long double>> w(n + 1, std::vector<long double>(n + 1, 0.0L));
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= n; ++j) {
      const long long gap = static_cast<long long>(i) - static_cast<long long>(j);
      if (std::llabs(gap) >= static_cast<long long>(k)) continue;
      if (i == 0 && j == 0) {
        w[i][j] = 1.0L;
        continue;
      }
      w[i][j] = (i > 0 ? w[i - 1][j] : 0.0L) + (j > 0 ? w[i][j - 1] : 0.0L);
    }
  }
  long double total = 1.0L;  // C(2n, n)
  for (std::size_t i = 1; i <= n; ++i) total = total * static_cast<long double>(n + i) / static_cast<long double>(i);
  return static_cast<double>(1.0L - w[n][n] / total);
}

double ecdf(const std::vector<double>& s, double x) {
  return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) /
         static_cast<double>(s.size());
}

double ks_brute(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  double d = 0.0;
  for (double x : pts) d = std::max(d, std::abs(ecdf(a, x) - ecdf(b, x)));
  return d;
}

/// Independent filter: R7 percentile of |diff|, then the union rule.
std::set<std::string> removed_brute(const std::vector<PairedSample>& pairs) {
  std::vector<double> diffs;
  for (const auto& p : pairs) diffs.push_back(std::abs(p.measValue - p.rtValue));
  std::vector<double> sorted = diffs;
  std::sort(sorted.begin(), sorted.end());
  const double h = 0.9 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double p90 = sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
  std::set<std::string> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double r = pairs[i].measValue / (pairs[i].rtValue + 1e-6);
    if (diffs[i] > p90 || r < 0.2 || r > 5.0) out.insert(pairs[i].linkId);
  }
  return out;
}

PointDataRecord rec(double f, const std::string& tx, const std::string& rx, double ds, bool outage = false) {
  PointDataRecord r;
  r.frequencyGhz = f;
  r.txId = tx;
  r.rxId = rx;
  r.trSepM = 50.0;
  r.omniDsNs = ds;
  r.asaDeg3gpp = ds / 2;
  r.asaDegFleury = ds / 3;
  r.outage = outage;
  return r;
}

}  // namespace

TEST_CASE("ratio and zero exclusion") {
  CHECK(ratio({10, 10, "a"}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(ratio({2, 12, "a"}) == doctest::Approx(12.0 / 2.000001).epsilon(1e-15));
  const auto kept = exclude_zeros(pairs_of({{0, 3}, {3, 0}, {2, 2}, {std::nan(""), 4}, {5, 6}}));
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].linkId == "L2");
  CHECK(kept[1].linkId == "L4");
}

TEST_CASE("percentile") {
  std::vector<double> v;
  for (int i = 1; i <= 9; ++i) v.push_back(i);
  v.push_back(100);
  CHECK(percentile_linear(v, 0.9) == doctest::Approx(18.1).epsilon(1e-12));
  CHECK(percentile_linear({4.0}, 0.9) == 4.0);
  CHECK(percentile_linear({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(percentile_linear({3.0, 1.0, 2.0}, 1.0) == 3.0);
  CHECK(percentile_linear({3.0, 1.0, 2.0}, 0.0) == 1.0);
}

TEST_CASE("combined filter") {
  SUBCASE("identical pairs") {
    const auto r = combined_filter(pairs_of({{5, 5}, {5, 5}, {5, 5}, {5, 5}}));
    CHECK(r.removed.empty());
    CHECK(r.kept.size() == 4);
  }
  SUBCASE("ratio outlier") {
    const auto r = combined_filter(pairs_of({{10, 11}, {10, 9}, {10, 10.5}, {2, 12}, {20, 21}}));
    REQUIRE(r.removed_by_ratio().size() == 1);
    CHECK(r.removed_by_ratio()[0].linkId == "L3");
  }
  SUBCASE("absolute outlier") {
    std::vector<std::pair<double, double>> v;
    for (int i = 1; i <= 9; ++i) v.emplace_back(100.0, 100.0 + i);
    v.emplace_back(100.0, 200.0);
    const auto r = combined_filter(pairs_of(v));
    CHECK(r.p90Threshold == doctest::Approx(18.1));
    REQUIRE(r.removed.size() == 1);
    CHECK(r.removed[0].pair.linkId == "L9");
    CHECK(r.removed[0].reason == RemovalReason::Absolute);
    CHECK(r.removed_by_absolute().size() == 1);
    CHECK(r.removed_by_ratio().empty());
  }
  SUBCASE("random data against brute force") {
    std::mt19937_64 rng(8);
    std::lognormal_distribution<double> val(3.0, 0.5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<std::pair<double, double>> v;
      const int n = 2 + static_cast<int>(u(rng) * 40);
      for (int i = 0; i < n; ++i) {
        const double rt = val(rng);
        double meas = rt * std::exp(0.3 * (u(rng) - 0.5));
        if (u(rng) < 0.1) meas = rt * (u(rng) < 0.5 ? 0.1 : 8.0);
        v.emplace_back(rt, meas);
      }
      const auto pairs = pairs_of(v);
      const auto r = combined_filter(pairs);
      std::set<std::string> removed;
      for (const auto& p : r.removed) removed.insert(p.pair.linkId);
      CHECK(removed == removed_brute(pairs));
      CHECK(r.kept.size() + r.removed.size() == pairs.size());
      for (const auto& p : r.removed) {
        const bool c1 = p.absDifference > r.p90Threshold;
        const bool c2 = p.ratio < 0.2 || p.ratio > 5.0;
        CHECK(p.reason == (c1 && c2 ? RemovalReason::Both : c1 ? RemovalReason::Absolute : RemovalReason::Ratio));
      }
      // The ratio rule finds nothing new on a second pass.
      const auto again = combined_filter(r.kept.size() >= 2 ? r.kept : pairs);
      if (r.kept.size() >= 2) CHECK(again.removed_by_ratio().empty());
    }
  }
  CHECK_THROWS_AS(combined_filter(pairs_of({{1, 1}})), InputError);
}

TEST_CASE("ks statistic") {
  const std::vector<double> a{1, 2, 3};
  CHECK(ks_statistic(a, a) == 0.0);
  CHECK(ks_statistic(a, std::vector<double>{10, 11}) == 1.0);
  CHECK(ks_statistic(a, std::vector<double>{1.5, 2.5, 3.5}) == doctest::Approx(1.0 / 3.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 30);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> x, y;
    const int n = size(rng), m = size(rng);
    for (int i = 0; i < n; ++i) x.push_back(std::round(g(rng) * 4.0) / 4.0);
    for (int i = 0; i < m; ++i) y.push_back(std::round((g(rng) + 0.3) * 4.0) / 4.0);
    const double d = ks_statistic(x, y);
    CHECK(d == doctest::Approx(ks_brute(x, y)).epsilon(1e-12));
    CHECK(d == ks_statistic(y, x));
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
  CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, a), InputError);
}

TEST_CASE("exact ks p-values") {
  CHECK(std::abs(ks_p_exact_equal_n(8.0 / 18.0, 18) - 0.0560) <= 0.0005);
  CHECK(std::abs(ks_p_exact_equal_n(5.0 / 13.0, 13) - 0.2999) <= 0.0005);
  CHECK(std::abs(ks_p_exact_equal_n(3.0 / 11.0, 11) - 0.8326) <= 0.0005);
  CHECK(ks_p_exact_equal_n(0.4444, 18) == ks_p_exact_equal_n(8.0 / 18.0, 18));

  for (std::size_t n = 1; n <= 64; n += (n < 20 ? 1 : 7)) {
    for (std::size_t k = 1; k <= n; ++k) {
      const double p = ks_p_exact_equal_n(static_cast<double>(k) / n, n);
      CHECK(p == doctest::Approx(ks_p_lattice(n, k)).epsilon(1e-9));
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
  CHECK(ks_p_exact_equal_n(0.0, 10) == 1.0);
  CHECK_THROWS_AS(ks_p_exact_equal_n(0.5, 65), InputError);
}

TEST_CASE("asymptotic ks p-values") {
  CHECK(ks_p_asymptotic(0.0, 10, 10) == 1.0);
  CHECK(ks_p_asymptotic(0.4444, 18, 18) == doctest::Approx(0.0571).epsilon(1e-3));
  double prev = 1.0;
  for (double d = 0.0; d <= 1.0; d += 0.01) {
    const double p = ks_p_asymptotic(d, 20, 31);
    CHECK(p <= prev + 1e-9);
    CHECK(p >= 0.0);
    prev = p;
  }
  for (std::size_t n : {50u, 60u, 64u}) {
    for (std::size_t k = 1; k <= n; ++k) {
      const double d = static_cast<double>(k) / n;
      CHECK(std::abs(ks_p_exact_equal_n(d, n) - ks_p_asymptotic(d, n, n)) < 0.02);
    }
  }
}

TEST_CASE("ks test wrapper") {
  const std::vector<double> a{1, 2, 3, 4}, b{2.5, 3.5, 4.5, 5.5}, c{1, 2, 3};
  const auto eq = ks_test(a, b);
  REQUIRE(eq.pExact);
  CHECK(eq.d == 0.5);
  CHECK(*eq.pExact == doctest::Approx(ks_p_exact_equal_n(0.5, 4)));
  const auto ne = ks_test(a, c);
  CHECK_FALSE(ne.pExact);
  CHECK(ne.n == 4);
  CHECK(ne.m == 3);
}

TEST_CASE("cdf export") {
  const auto one = cdf_export(std::vector<double>{5});
  REQUIRE(one.size() == 1);
  CHECK(one[0].value == 5);
  CHECK(one[0].probability == 1.0);
  const auto ties = cdf_export(std::vector<double>{1, 2, 1});
  REQUIRE(ties.size() == 2);
  CHECK(ties[0].value == 1);
  CHECK(ties[0].probability == doctest::Approx(2.0 / 3.0));
  CHECK(ties[1].probability == 1.0);

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> v(0, 20);
  std::vector<double> s;
  for (int i = 0; i < 100; ++i) s.push_back(v(rng));
  const auto c = cdf_export(s);
  for (std::size_t i = 1; i < c.size(); ++i) {
    CHECK(c[i].value > c[i - 1].value);
    CHECK(c[i].probability > c[i - 1].probability);
  }
  for (const auto& pt : c) CHECK(pt.probability == doctest::Approx(ecdf(s, pt.value)));
  CHECK_THROWS_AS(cdf_export(std::vector<double>{}), InputError);
}

TEST_CASE("parameters") {
  CHECK(parse_parameter("DS") == Parameter::Ds);
  CHECK(parse_parameter("zsd") == Parameter::Zsd);
  CHECK_THROWS_AS(parse_parameter("K"), InputError);
  for (auto p : {Parameter::Ds, Parameter::Asa, Parameter::Asd, Parameter::Zsa, Parameter::Zsd})
    CHECK(parse_parameter(parameter_name(p)) == p);
  const auto r = rec(6.75, "TX1", "RX1", 30.0);
  CHECK(parameter_value(r, Parameter::Ds, false) == 30.0);
  CHECK(parameter_value(r, Parameter::Asa, false) == 15.0);
  CHECK(parameter_value(r, Parameter::Asa, true) == 10.0);
}

TEST_CASE("point data validation") {
  std::vector<PointDataRecord> rt, meas;
  for (int i = 0; i < 6; ++i) {
    rt.push_back(rec(6.75, "TX1", "RX" + std::to_string(i), 10.0 + i));
    meas.push_back(rec(6.75, "TX1", "RX" + std::to_string(i), 10.0 + i));
    rt.push_back(rec(16.95, "TX1", "RX" + std::to_string(i), 12.0 + i));
    meas.push_back(rec(16.95, "TX1", "RX" + std::to_string(i), 12.0 + i));
  }
  meas.push_back(rec(28.0, "TX9", "RX9", 5.0));  // no partner
  meas[3].outage = true;
  meas[5].omniDsNs = 0.0;

  const auto report = validate_point_data(rt, meas, Parameter::Ds, false, true);
  REQUIRE(report.groups.size() == 3);
  CHECK(report.groups[0].label == "pooled");
  CHECK(report.groups[0].pairs.size() == 10);
  CHECK(report.groups[0].excludedZeros == 2);
  CHECK(report.groups[0].before.d == 0.0);
  CHECK(report.groups[0].after.d == 0.0);
  CHECK(report.groups[0].filter.removed.empty());
  CHECK(report.groups[1].pairs.size() + report.groups[2].pairs.size() == 10);

  const std::string json = format_validation_report(report);
  CHECK(json.find("\"pooled\"") != std::string::npos);
  CHECK(json.find("\"cdf\"") != std::string::npos);

  std::vector<PointDataRecord> other{rec(6.75, "TX5", "RX5", 1.0)};
  CHECK_THROWS_AS(validate_point_data(rt, other, Parameter::Ds, false, false), InputError);
}
