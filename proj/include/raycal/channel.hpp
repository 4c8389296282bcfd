#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "raycal/tracer.hpp"

namespace raycal {

inline constexpr double kDefaultBinWidthNs = 1.0;
inline constexpr double kDefaultSpreadThresholdDb = -25.0;
/// Path loss reported when the coherent sum vanishes.
inline constexpr double kOutagePathLossDb = 300.0;

struct CirTap {
  double delayNs = 0.0;
  Complex amplitude;  // sqrt(W)

  double power_mw() const { return std::norm(amplitude) * 1000.0; }
};

struct Cir {
  std::vector<CirTap> taps;  // sorted by delay
  double cutoffDbm = -160.0;
};

struct PowerDelayProfile {
  double binWidthNs = kDefaultBinWidthNs;
  double firstBinDelayNs = 0.0;
  std::vector<double> powerMw;
  double frequencyHz = 0.0;
  std::string txId;
  std::string rxId;

  bool empty() const { return powerMw.empty(); }
  double bin_delay(std::size_t i) const { return firstBinDelayNs + binWidthNs * static_cast<double>(i); }
  double bin_center(std::size_t i) const { return bin_delay(i) + 0.5 * binWidthNs; }
  double total_power_mw() const;
  std::size_t peak_bin() const;
};

struct PathLossFit {
  double n = 0.0;
  double sigmaDb = 0.0;
  double fsplRefDb = 0.0;
  std::size_t count = 0;
};

struct AngularComponent {
  double angleDeg = 0.0;
  double powerMw = 0.0;
};

enum class LosType { Los, Nlos };

/// One link's statistics row. Metric fields are meaningless when outage is set.
struct PointDataRecord {
  double frequencyGhz = 0.0;
  std::string txId;
  std::string rxId;
  LosType losType = LosType::Nlos;
  double trSepM = 0.0;
  bool outage = false;
  double omniPlDb = 0.0;
  double omniDsNs = 0.0;
  double asaDeg3gpp = 0.0;
  double asaDegFleury = 0.0;
  double asdDeg3gpp = 0.0;
  double asdDegFleury = 0.0;
  double zsaDeg3gpp = 0.0;
  double zsaDegFleury = 0.0;
  double zsdDeg3gpp = 0.0;
  double zsdDegFleury = 0.0;

  std::string link_id() const { return txId + "-" + rxId; }
};

Cir synthesize_cir(const std::vector<PropagationPath>& paths, double cutoffDbm);

/// Bins taps non-coherently; the first bin starts at the earliest delay floored to the grid.
PowerDelayProfile pdp(const Cir& cir, double binWidthNs = kDefaultBinWidthNs);

/// Coherent path loss; nullopt for an empty CIR. Clamped at kOutagePathLossDb.
std::optional<double> omni_path_loss(const Cir& cir, double txPowerDbm);

/// FSPL(f, 1 m) = 32.4 + 20 log10(f / 1 GHz).
double fspl_1m_db(double frequencyGhz);

/// Close-in reference model fit; records are (3D distance m, path loss dB).
/// Throws InputError for fewer than two records or any distance below 1 m.
PathLossFit fit_ci(std::span<const std::pair<double, double>> records, double frequencyGhz);

/// RMS delay spread over bins within thresholdDb of the peak; nullopt if nothing qualifies.
std::optional<double> rms_delay_spread(const PowerDelayProfile& pdp,
                                       double thresholdDb = kDefaultSpreadThresholdDb);

/// Circular (phasor) spread in degrees. Throws InputError for zero total power.
double angular_spread_3gpp(std::span<const AngularComponent> components);

/// Wrapped second central moment minimized over a 1 degree shift grid. Degrees.
double angular_spread_fleury(std::span<const AngularComponent> components);

struct LinkContext {
  double frequencyHz = 6.75e9;
  double txPowerDbm = 0.0;
  std::string txId;
  std::string rxId;
};

/// Packs PL, DS and both spread definitions for every angle type.
PointDataRecord assemble_point_record(const std::vector<PropagationPath>& paths, const Vec3& tx,
                                      const Vec3& rx, const LinkContext& link,
                                      double binWidthNs = kDefaultBinWidthNs);

/// The receiver position plus 1, 2, 3 wavelengths in eight horizontal directions (25 points).
std::vector<Vec3> spatial_average_offsets(const Vec3& rx, double wavelengthM);

struct SpatialAverage {
  PointDataRecord record;
  std::size_t pointsUsed = 0;
  std::vector<std::string> diagnostics;
};

/// Traces the 25-point neighbourhood; PL averaged in linear power, DS and spreads pooled.
SpatialAverage spatial_average_stats(const Scene& scene, const Vec3& tx, const Vec3& rx,
                                     const TraceConfig& cfg, const LinkContext& link);

// --- file formats -------------------------------------------------------------

std::string point_data_header();
std::string format_point_record(const PointDataRecord& record);
std::string format_point_data(std::span<const PointDataRecord> records);
std::vector<PointDataRecord> parse_point_data(const std::string& text, const std::string& sourceName = "<point-data>");
std::vector<PointDataRecord> load_point_data(const std::filesystem::path& path);

/// delay_ns,power_dbm rows for non-empty bins, with '#' metadata lines.
std::string format_pdp(const PowerDelayProfile& pdp);
PowerDelayProfile parse_pdp(const std::string& text, const std::string& sourceName = "<pdp>");
PowerDelayProfile load_pdp(const std::filesystem::path& path);

}  // namespace raycal
