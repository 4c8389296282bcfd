#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "raycal/channel.hpp"
#include "raycal/cli.hpp"
#include "raycal/validate.hpp"
#include "nlohmann/json.hpp"

using namespace raycal;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("raycal_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const std::string kTable1 = std::string(RAYCAL_TEST_DATA) + "/table1_point_data.csv";

std::string free_space_config(const fs::path& dir, const std::string& links) {
  return R"({"frequency_ghz": 6.75, "rays": 2000, "max_depth": 2, "out_dir": ")" + (dir / "out").string() +
         R"(", "links": [)" + links + "]}";
}

PointDataRecord ds_record(int i, double rt) {
  PointDataRecord r;
  r.frequencyGhz = 6.75;
  r.txId = "TX1";
  r.rxId = "RX" + std::to_string(i);
  r.trSepM = 40.0 + i;
  r.losType = LosType::Nlos;
  r.omniPlDb = 100.0;
  r.omniDsNs = rt;
  r.asaDeg3gpp = r.asaDegFleury = r.asdDeg3gpp = r.asdDegFleury = 10.0;
  r.zsaDeg3gpp = r.zsaDegFleury = r.zsdDeg3gpp = r.zsdDegFleury = 2.0;
  return r;
}

}  // namespace

TEST_CASE("trace in free space") {
  const fs::path dir = scratch("trace");
  write(dir / "run.json", free_space_config(dir, R"({"tx": "TX1", "rx": "RX1", "tx_position": [0, 0, 10],
      "rx_position": [100, 0, 10]})"));
  const auto r = run({"trace", "--config", (dir / "run.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("TX1-RX1") != std::string::npos);

  const auto rows = parse_point_data(read(dir / "out" / "point_data.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].omniPlDb == doctest::Approx(fspl_db(6.75e9, 100.0)).epsilon(1e-9));
  CHECK(std::abs(rows[0].omniPlDb - (32.4 + 20 * std::log10(6.75) + 20 * std::log10(100.0))) < 0.05);
  CHECK(rows[0].omniDsNs == 0.0);
  CHECK(rows[0].losType == LosType::Los);

  const auto pdp = parse_pdp(read(dir / "out" / "TX1-RX1.pdp.csv"));
  CHECK(pdp.txId == "TX1");
  CHECK(pdp.frequencyHz == 6.75e9);
  CHECK(read(dir / "out" / "TX1-RX1.paths.csv").find(",LOS") != std::string::npos);
  for (const auto& e : fs::directory_iterator(dir / "out")) CHECK(e.path().extension() != ".tmp");
}

TEST_CASE("trace keeps link order and reruns identically") {
  const fs::path dir = scratch("order");
  write(dir / "run.json", free_space_config(dir, R"(
      {"tx": "TX2", "rx": "RX9", "tx_position": [0, 0, 10], "rx_position": [300, 40, 1.5]},
      {"tx": "TX1", "rx": "RX1", "tx_position": [0, 0, 10], "rx_position": [20, 0, 1.5]},
      {"tx": "TX1", "rx": "RX4", "tx_gps": [40.6942, -73.9866, 10], "rx_gps": [40.6950, -73.9860, 1.5]})"));
  std::string cfg = read(dir / "run.json");
  cfg.insert(1, R"("geo_origin": {"lat": 40.6942, "lon": -73.9866}, )");
  write(dir / "run.json", cfg);

  REQUIRE(run({"trace", "--config", (dir / "run.json").string()}).code == 0);
  const std::string first = read(dir / "out" / "point_data.csv");
  const auto rows = parse_point_data(first);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].link_id() == "TX2-RX9");
  CHECK(rows[1].link_id() == "TX1-RX1");
  CHECK(rows[2].link_id() == "TX1-RX4");
  CHECK(rows[2].trSepM > 50.0);
  const std::string pdp = read(dir / "out" / "TX2-RX9.pdp.csv");

  REQUIRE(run({"trace", "--config", (dir / "run.json").string(), "--workers", "3"}).code == 0);
  CHECK(read(dir / "out" / "point_data.csv") == first);
  CHECK(read(dir / "out" / "TX2-RX9.pdp.csv") == pdp);

  // Only the selected link.
  const fs::path other = dir / "one";
  REQUIRE(run({"trace", "--config", (dir / "run.json").string(), "--link", "TX1-RX1", "--out-dir", other.string()})
              .code == 0);
  CHECK(parse_point_data(read(other / "point_data.csv")).size() == 1);
  CHECK(run({"trace", "--config", (dir / "run.json").string(), "--link", "TX7-RX7"}).code == 2);
}

TEST_CASE("flag overrides") {
  const fs::path dir = scratch("override");
  write(dir / "run.json", free_space_config(dir, R"({"tx": "TX1", "rx": "RX1", "tx_position": [0, 0, 10],
      "rx_position": [100, 0, 10]})"));
  REQUIRE(run({"trace", "--config", (dir / "run.json").string(), "--freq-ghz", "16.95"}).code == 0);
  const auto rows = parse_point_data(read(dir / "out" / "point_data.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].frequencyGhz == 16.95);
  CHECK(rows[0].omniPlDb == doctest::Approx(fspl_db(16.95e9, 100.0)));
}

TEST_CASE("scene errors leave no outputs") {
  const fs::path dir = scratch("badscene");
  write(dir / "scene.json", R"({"quads": [{"material": "unobtainium",
      "vertices": [[0, 5, 0], [10, 5, 0], [10, 5, 10], [0, 5, 10]]}]})");
  write(dir / "run.json", R"({"scene": "scene.json", "out_dir": "out", "links": [
      {"tx": "TX1", "rx": "RX1", "tx_position": [0, 0, 2], "rx_position": [5, 10, 2]}]})");
  const auto r = run({"trace", "--config", (dir / "run.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("scene.json") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  write(dir / "broken.json", "{\n\"links\": [\n  oops\n]}");
  const auto b = run({"trace", "--config", (dir / "broken.json").string()});
  CHECK(b.code == 2);
  CHECK(b.err.find("broken.json:3") != std::string::npos);

  CHECK(run({"trace"}).code == 2);
  CHECK(run({"trace", "--config", (dir / "missing.json").string()}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
}

TEST_CASE("stats on the published point data") {
  const auto r = run({"stats", "--point-data", kTable1});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(r.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0][3] == "ple_n");
  std::map<std::string, std::pair<double, double>> fits;
  for (std::size_t i = 1; i < rows.size(); ++i) fits[rows[i][0] + " " + rows[i][1]] = {std::stod(rows[i][3]), std::stod(rows[i][4])};
  CHECK(std::abs(fits.at("6.75 LOS").first - 1.86) <= 0.02);
  CHECK(std::abs(fits.at("6.75 NLOS").first - 2.82) <= 0.02);
  CHECK(std::abs(fits.at("16.95 LOS").first - 1.88) <= 0.02);
  CHECK(std::abs(fits.at("16.95 NLOS").first - 2.85) <= 0.02);
  CHECK(std::abs(fits.at("6.75 LOS").second - 1.06) <= 0.05);
  CHECK(std::abs(fits.at("16.95 LOS").second - 1.14) <= 0.05);

  const auto nlos = run({"stats", "--point-data", kTable1, "--freq-ghz", "16.95", "--loc", "NLOS"});
  REQUIRE(nlos.code == 0);
  CHECK(csv_rows(nlos.out).size() == 2);

  const fs::path dir = scratch("stats");
  write(dir / "one.csv", point_data_header() + "\n6.75,TX1,RX1,LOS,40,77.05,13.45,14.30,15.07,15.95,18.26,6.23,6.24,3.32,3.33\n");
  const auto single = run({"stats", "--point-data", (dir / "one.csv").string(), "--out", (dir / "s.csv").string()});
  REQUIRE(single.code == 0);
  CHECK(single.err.find("warning") != std::string::npos);
  const auto srow = csv_rows(read(dir / "s.csv"));
  REQUIRE(srow.size() == 2);
  CHECK(std::stod(srow[1][4]) == 0.0);
  CHECK(std::stod(srow[1][3]) == doctest::Approx((77.05 - fspl_1m_db(6.75)) / (10 * std::log10(40.0))));

  CHECK(run({"stats", "--point-data", kTable1, "--freq-ghz", "28"}).code == 2);
}

TEST_CASE("validate") {
  const fs::path dir = scratch("validate");
  const auto same = run({"validate", "--rt", kTable1, "--meas", kTable1, "--parameter", "ds"});
  REQUIRE(same.code == 0);
  CHECK(same.out.find("removed 0") != std::string::npos);
  CHECK(same.out.find("D=0,") != std::string::npos);

  // 13 well matched links plus 5 with a wild ratio.
  std::vector<PointDataRecord> rt, meas;
  for (int i = 0; i < 18; ++i) {
    const double v = 20.0 + 3.0 * i;
    rt.push_back(ds_record(i, v));
    meas.push_back(ds_record(i, i < 13 ? v * (1.0 + 0.01 * (i % 5)) : v * 7.0));
  }
  write(dir / "rt.csv", format_point_data(rt));
  write(dir / "meas.csv", format_point_data(meas));
  const auto r = run({"validate", "--rt", (dir / "rt.csv").string(), "--meas", (dir / "meas.csv").string(),
                      "--parameter", "ds", "--out", (dir / "report.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("pairs 18") != std::string::npos);
  CHECK(r.out.find("removed 5") != std::string::npos);
  const auto j = nlohmann::json::parse(read(dir / "report.json"));
  REQUIRE(j.contains("groups"));
  const auto& g = j["groups"][0];
  CHECK(g["ks_filtered"]["n"] == 13);
  CHECK(g["removed"].size() == 5);

  std::vector<double> keptRt, keptMeas;
  for (int i = 0; i < 13; ++i) {
    keptRt.push_back(rt[i].omniDsNs);
    keptMeas.push_back(meas[i].omniDsNs);
  }
  CHECK(g["ks_filtered"]["d"].get<double>() == doctest::Approx(ks_statistic(keptRt, keptMeas)));

  CHECK(run({"validate", "--rt", kTable1, "--meas", kTable1, "--parameter", "kfactor"}).code == 2);
}

TEST_CASE("average") {
  const fs::path dir = scratch("average");
  write(dir / "run.json", free_space_config(dir, R"({"tx": "TX1", "rx": "RX1", "tx_position": [0, 0, 10],
      "rx_position": [60, 80, 1.5]})"));
  const auto r = run({"average", "--config", (dir / "run.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("25 points") != std::string::npos);
  const auto rows = csv_rows(read(dir / "out" / "TX1-RX1.average.csv"));
  REQUIRE(rows.size() == 3);
  const double single = std::stod(rows[1][5]);
  const double averaged = std::stod(rows[2][5]);
  CHECK(std::abs(single - averaged) < 0.3);
}

TEST_CASE("calibrate") {
  const fs::path dir = scratch("calibrate");
  write(dir / "scene.json", R"({"quads": [
      {"material": "concrete", "vertices": [[-80, -80, 0], [80, -80, 0], [80, 80, 0], [-80, 80, 0]]},
      {"material": "brick", "vertices": [[-40, 20, 0], [40, 20, 0], [40, 20, 15], [-40, 20, 15]]}]})");
  write(dir / "run.json", R"({"scene": "scene.json", "rays": 3000, "max_depth": 1, "out_dir": "out",
      "mechanisms": {"diffraction": false},
      "calibration": {"max_iters": 2},
      "links": [{"tx": "TX1", "rx": "RX1", "tx_position": [-20, 0, 4], "rx_position": [25, 5, 1.5]}]})");
  REQUIRE(run({"trace", "--config", (dir / "run.json").string()}).code == 0);
  const auto r = run({"calibrate", "--config", (dir / "run.json").string(), "--link", "TX1-RX1", "--measured",
                      (dir / "out" / "TX1-RX1.pdp.csv").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(read(dir / "out" / "TX1-RX1.calibration.json"));
  CHECK(j["displacement_tx_m"].get<double>() < 0.1);
  CHECK(j["displacement_rx_m"].get<double>() < 0.1);
  CHECK(j["final_loss"].get<double>() < 1e-6);
  CHECK(j["converged"].get<bool>());

  CHECK(run({"calibrate", "--config", (dir / "run.json").string(), "--link", "TX1-RX1"}).code == 2);

  // Transmitter sealed in a metal box: nothing is ever received.
  write(dir / "sealed.json", R"({"quads": [
      {"material": "metal", "vertices": [[-20, -20, 0], [-20, 20, 0], [20, 20, 0], [20, -20, 0]]},
      {"material": "metal", "vertices": [[-20, -20, 10], [20, -20, 10], [20, 20, 10], [-20, 20, 10]]},
      {"material": "metal", "vertices": [[-20, -20, 0], [20, -20, 0], [20, -20, 10], [-20, -20, 10]]},
      {"material": "metal", "vertices": [[20, -20, 0], [20, 20, 0], [20, 20, 10], [20, -20, 10]]},
      {"material": "metal", "vertices": [[20, 20, 0], [-20, 20, 0], [-20, 20, 10], [20, 20, 10]]},
      {"material": "metal", "vertices": [[-20, 20, 0], [-20, -20, 0], [-20, -20, 10], [-20, 20, 10]]}]})");
  write(dir / "sealed_run.json", R"({"scene": "sealed.json", "rays": 2000, "max_depth": 1, "out_dir": "sealed_out",
      "mechanisms": {"diffraction": false},
      "calibration": {"d_max_m": 3, "coarse_offsets_m": [-2.5, 0, 2.5], "fine_range_m": 1.0},
      "links": [{"tx": "TX1", "rx": "RX1", "tx_position": [0, 0, 5], "rx_position": [25, 0, 1.5]}]})");
  const auto inf = run({"calibrate", "--config", (dir / "sealed_run.json").string(), "--link", "TX1-RX1", "--measured",
                        (dir / "out" / "TX1-RX1.pdp.csv").string()});
  CHECK(inf.code == 3);
  CHECK_FALSE(fs::exists(dir / "sealed_out" / "TX1-RX1.calibration.json"));
}
