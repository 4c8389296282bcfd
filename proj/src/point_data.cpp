#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "raycal/channel.hpp"
#include "raycal/errors.hpp"
#include "raycal/format.hpp"

namespace raycal {

namespace {

constexpr const char* kOutage = "OUT";
constexpr std::size_t kColumns = 15;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw InputError(source + ":" + std::to_string(line) + ": " + what);
}

double number(const std::string& cell, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty()) fail(source, line, "invalid number '" + cell + "'");
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string point_data_header() {
  return "freq_ghz,tx,rx,loc_type,tr_sep_m,omni_abs_pl_db,omni_ds_ns,aoa_3gpp_deg,aoa_fleury_deg,"
         "aod_3gpp_deg,aod_fleury_deg,zoa_3gpp_deg,zoa_fleury_deg,zod_3gpp_deg,zod_fleury_deg";
}

std::string format_point_record(const PointDataRecord& r) {
  std::string out = format_double(r.frequencyGhz) + "," + r.txId + "," + r.rxId + "," +
                    (r.losType == LosType::Los ? "LOS" : "NLOS") + "," + format_double(r.trSepM);
  const double metrics[] = {r.omniPlDb,     r.omniDsNs,   r.asaDeg3gpp,   r.asaDegFleury, r.asdDeg3gpp,
                            r.asdDegFleury, r.zsaDeg3gpp, r.zsaDegFleury, r.zsdDeg3gpp,   r.zsdDegFleury};
  for (double m : metrics) out += "," + (r.outage ? std::string(kOutage) : format_double(m));
  return out;
}

std::string format_point_data(std::span<const PointDataRecord> records) {
  std::string out = point_data_header() + "\n";
  for (const auto& r : records) out += format_point_record(r) + "\n";
  return out;
}

std::vector<PointDataRecord> parse_point_data(const std::string& text, const std::string& sourceName) {
  std::vector<PointDataRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  bool headerSeen = false;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = split(t, ',');
    if (!headerSeen) {
      headerSeen = true;
      if (!cells.empty() && cells[0] == "freq_ghz") {
        if (cells.size() != kColumns) fail(sourceName, lineNo, "header must have 15 columns");
        continue;
      }
    }
    if (cells.size() != kColumns) {
      fail(sourceName, lineNo, "expected 15 columns, found " + std::to_string(cells.size()));
    }
    PointDataRecord r;
    r.frequencyGhz = number(cells[0], sourceName, lineNo);
    r.txId = cells[1];
    r.rxId = cells[2];
    if (cells[3] == "LOS") {
      r.losType = LosType::Los;
    } else if (cells[3] == "NLOS") {
      r.losType = LosType::Nlos;
    } else {
      fail(sourceName, lineNo, "loc_type must be LOS or NLOS, found '" + cells[3] + "'");
    }
    r.trSepM = number(cells[4], sourceName, lineNo);
    if (!(r.trSepM > 0.0)) fail(sourceName, lineNo, "tr_sep_m must be positive");
    double* metrics[] = {&r.omniPlDb,     &r.omniDsNs,   &r.asaDeg3gpp,   &r.asaDegFleury, &r.asdDeg3gpp,
                         &r.asdDegFleury, &r.zsaDeg3gpp, &r.zsaDegFleury, &r.zsdDeg3gpp,   &r.zsdDegFleury};
    for (std::size_t i = 0; i < 10; ++i) {
      const auto& cell = cells[5 + i];
      if (cell == kOutage) {
        r.outage = true;
        continue;
      }
      *metrics[i] = number(cell, sourceName, lineNo);
      if (i >= 1 && *metrics[i] < 0.0) fail(sourceName, lineNo, "spreads must be non-negative");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PointDataRecord> load_point_data(const std::filesystem::path& path) {
  return parse_point_data(read_file(path), path.string());
}

std::string format_pdp(const PowerDelayProfile& p) {
  std::string out;
  out += "# bin_width_ns=" + format_double(p.binWidthNs) + "\n";
  out += "# first_bin_delay_ns=" + format_double(p.firstBinDelayNs) + "\n";
  out += "# frequency_hz=" + format_double(p.frequencyHz) + "\n";
  out += "# tx=" + p.txId + "\n";
  out += "# rx=" + p.rxId + "\n";
  out += "delay_ns,power_dbm\n";
  for (std::size_t i = 0; i < p.powerMw.size(); ++i) {
    if (!(p.powerMw[i] > 0.0)) continue;
    out += format_double(p.bin_delay(i)) + "," + format_double(10.0 * std::log10(p.powerMw[i])) + "\n";
  }
  return out;
}

PowerDelayProfile parse_pdp(const std::string& text, const std::string& sourceName) {
  PowerDelayProfile p;
  std::optional<double> binWidth;
  std::optional<double> firstBin;
  std::vector<std::pair<double, double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string body = trim(std::string_view(t).substr(1));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(std::string_view(body).substr(0, eq));
      const std::string value = trim(std::string_view(body).substr(eq + 1));
      if (key == "bin_width_ns") {
        binWidth = number(value, sourceName, lineNo);
        if (!(*binWidth > 0.0)) fail(sourceName, lineNo, "bin_width_ns must be positive");
      } else if (key == "first_bin_delay_ns") {
        firstBin = number(value, sourceName, lineNo);
      } else if (key == "frequency_hz") {
        p.frequencyHz = number(value, sourceName, lineNo);
      } else if (key == "tx") {
        p.txId = value;
      } else if (key == "rx") {
        p.rxId = value;
      }
      continue;
    }
    const auto cells = split(t, ',');
    if (cells.size() == 2 && cells[0] == "delay_ns") continue;
    if (cells.size() != 2) fail(sourceName, lineNo, "expected delay_ns,power_dbm");
    rows.emplace_back(number(cells[0], sourceName, lineNo), number(cells[1], sourceName, lineNo));
  }
  if (!binWidth) {
    std::vector<double> delays;
    for (const auto& r : rows) delays.push_back(r.first);
    std::sort(delays.begin(), delays.end());
    double step = 0.0;
    for (std::size_t i = 1; i < delays.size(); ++i) {
      const double d = delays[i] - delays[i - 1];
      if (d > 1e-9 && (step == 0.0 || d < step)) step = d;
    }
    binWidth = step > 0.0 ? step : kDefaultBinWidthNs;
  }
  p.binWidthNs = *binWidth;
  if (rows.empty()) return p;
  double earliest = rows.front().first;
  for (const auto& r : rows) earliest = std::min(earliest, r.first);
  p.firstBinDelayNs = firstBin && *firstBin <= earliest ? *firstBin : std::floor(earliest / p.binWidthNs) * p.binWidthNs;
  for (const auto& [delay, dbm] : rows) {
    const auto bin = static_cast<std::size_t>(std::floor((delay - p.firstBinDelayNs) / p.binWidthNs + 1e-9));
    if (bin >= p.powerMw.size()) p.powerMw.resize(bin + 1, 0.0);
    p.powerMw[bin] += std::pow(10.0, dbm / 10.0);
  }
  return p;
}

PowerDelayProfile load_pdp(const std::filesystem::path& path) { return parse_pdp(read_file(path), path.string()); }

}  // namespace raycal
