#include "raycal/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "raycal/channel.hpp"
#include "raycal/errors.hpp"
#include "raycal/format.hpp"
#include "raycal/parallel.hpp"
#include "raycal/validate.hpp"

namespace raycal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Vec3 vec_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InputError(what + " must be an array of three numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec3 position_from(const json& link, const std::string& side, const std::optional<GeoOrigin>& origin) {
  if (link.contains(side + "_position")) return vec_from(link.at(side + "_position"), side + "_position");
  if (link.contains(side + "_gps")) {
    if (!origin) throw InputError(side + "_gps requires geo_origin");
    const auto& g = link.at(side + "_gps");
    if (!g.is_array() || g.size() != 3) throw InputError(side + "_gps must be [lat, lon, height_m]");
    const auto xy = gps_to_local(g[0].get<double>(), g[1].get<double>(), *origin);
    return {xy.x, xy.y, g[2].get<double>()};
  }
  throw InputError("link needs " + side + "_position or " + side + "_gps");
}

void read_calib(const json& j, CalibConfig& c) {
  c.dMaxM = j.value("d_max_m", c.dMaxM);
  c.epsilonM = j.value("epsilon_m", c.epsilonM);
  c.maxIters = j.value("max_iters", c.maxIters);
  c.coarseOffsets = j.value("coarse_offsets_m", c.coarseOffsets);
  c.fineRangeM = j.value("fine_range_m", c.fineRangeM);
  c.fineStepM = j.value("fine_step_m", c.fineStepM);
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.wUnmatched = j.value("w_unmatched", c.wUnmatched);
  c.tauRefNs = j.value("tau_ref_ns", c.tauRefNs);
  c.tNormNs = j.value("t_norm_ns", c.tNormNs);
  c.peakThresholdDb = j.value("peak_threshold_db", c.peakThresholdDb);
  c.alignWindowNs = j.value("align_window_ns", c.alignWindowNs);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Scene open_scene(const RunConfig& cfg) {
  if (cfg.scenePath.empty()) return Scene::build(builtin_materials(), {});
  return load_scene(cfg.scenePath);
}

std::vector<LinkSpec> select_links(const RunConfig& cfg, const std::vector<std::string>& wanted) {
  if (wanted.empty()) return cfg.links;
  std::vector<LinkSpec> out;
  for (const auto& id : wanted) {
    const auto it = std::find_if(cfg.links.begin(), cfg.links.end(), [&](const LinkSpec& l) { return l.id() == id; });
    if (it == cfg.links.end()) throw InputError("link '" + id + "' is not in the configuration");
    out.push_back(*it);
  }
  return out;
}

LinkContext context_for(const RunConfig& cfg, const LinkSpec& link) {
  return {cfg.trace.frequencyHz, cfg.trace.txPowerDbm, link.txId, link.rxId};
}

struct Overrides {
  std::string config;
  std::optional<std::string> scene;
  std::optional<double> freqGhz;
  std::optional<std::size_t> rays;
  std::optional<int> maxDepth;
  std::optional<double> cutoffDbm;
  std::optional<unsigned> workers;
  std::optional<std::string> outDir;
  std::vector<std::string> links;

  void attach(CLI::App* cmd, bool withLinks = true) {
    cmd->add_option("--config", config, "JSON run configuration")->required();
    cmd->add_option("--scene", scene, "scene file (overrides the configuration)");
    cmd->add_option("--freq-ghz", freqGhz, "carrier frequency in GHz");
    cmd->add_option("--rays", rays, "launched rays");
    cmd->add_option("--max-depth", maxDepth, "maximum interaction depth");
    cmd->add_option("--cutoff-dbm", cutoffDbm, "path power cutoff in dBm");
    cmd->add_option("--workers", workers, "worker threads (0: all cores)");
    cmd->add_option("--out-dir", outDir, "output directory");
    if (withLinks) cmd->add_option("--link", links, "link id TX-RX (repeatable)");
  }

  RunConfig resolve() const {
    RunConfig cfg = load_run_config(config);
    if (scene) cfg.scenePath = *scene;
    if (freqGhz) cfg.trace.frequencyHz = *freqGhz * 1e9;
    if (rays) cfg.trace.rayCount = *rays;
    if (maxDepth) cfg.trace.maxDepth = *maxDepth;
    if (cutoffDbm) cfg.trace.cutoffDbm = *cutoffDbm;
    if (workers) cfg.trace.workers = *workers;
    if (outDir) cfg.outDir = *outDir;
    cfg.trace.validate();
    return cfg;
  }
};

struct LinkOutput {
  PointDataRecord record;
  std::string paths;
  std::string pdp;
  std::size_t pathCount = 0;
};

int cmd_trace(const Overrides& o, std::ostream& out) {
  const RunConfig cfg = o.resolve();
  const Scene scene = open_scene(cfg);
  const auto links = select_links(cfg, o.links);
  if (links.empty()) throw InputError("no links to trace");

  const unsigned total = resolve_workers(cfg.trace.workers);
  const unsigned outer = std::min<unsigned>(total, static_cast<unsigned>(links.size()));
  TraceConfig inner = cfg.trace;
  inner.workers = std::max(1u, total / outer);
  std::vector<LinkOutput> results(links.size());
  parallel_for(links.size(), outer, [&](std::size_t i) {
    const auto& l = links[i];
    const auto paths = trace(scene, l.tx, l.rx, inner);
    auto p = pdp(synthesize_cir(paths, cfg.trace.cutoffDbm), cfg.binWidthNs);
    p.frequencyHz = cfg.trace.frequencyHz;
    p.txId = l.txId;
    p.rxId = l.rxId;
    results[i] = {assemble_point_record(paths, l.tx, l.rx, context_for(cfg, l), cfg.binWidthNs), format_paths(paths),
                  format_pdp(p), paths.size()};
  });

  fs::create_directories(cfg.outDir);
  std::vector<PointDataRecord> records;
  for (std::size_t i = 0; i < links.size(); ++i) {
    write_file_atomic(cfg.outDir / (links[i].id() + ".paths.csv"), results[i].paths);
    write_file_atomic(cfg.outDir / (links[i].id() + ".pdp.csv"), results[i].pdp);
    records.push_back(results[i].record);
  }
  write_file_atomic(cfg.outDir / "point_data.csv", format_point_data(records));
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto& r = results[i].record;
    out << links[i].id() << ": " << results[i].pathCount << " paths";
    if (r.outage) {
      out << ", OUTAGE\n";
    } else {
      out << ", PL " << format_double(r.omniPlDb) << " dB, DS " << format_double(r.omniDsNs) << " ns\n";
    }
  }
  return kExitOk;
}

int cmd_calibrate(const Overrides& o, const std::string& measured, std::ostream& out) {
  const RunConfig cfg = o.resolve();
  if (o.links.size() != 1) throw InputError("calibrate needs exactly one --link");
  const auto link = select_links(cfg, o.links).front();
  const auto meas = load_pdp(measured);
  if (meas.empty()) throw InputError(measured + ": measured PDP has no bins");
  const Scene scene = open_scene(cfg);
  const auto result = calibrate(scene, link.tx, link.rx, meas, cfg.trace, cfg.calib);
  fs::create_directories(cfg.outDir);
  const fs::path report = cfg.outDir / (link.id() + ".calibration.json");
  write_file_atomic(report, format_calibration_report(result));
  out << link.id() << ": loss " << format_double(result.initial_loss()) << " -> " << format_double(result.final_loss())
      << " (" << format_double(result.loss_reduction_percent()) << "% reduction), TX moved "
      << format_double(result.displacementTx) << " m, RX moved " << format_double(result.displacementRx)
      << " m, peak power improvement " << format_double(result.peak_power_improvement_db()) << " dB\n";
  out << "report: " << report.string() << "\n";
  return kExitOk;
}

int cmd_average(const Overrides& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = o.resolve();
  const Scene scene = open_scene(cfg);
  const auto links = select_links(cfg, o.links);
  if (links.empty()) throw InputError("no links to average");
  fs::create_directories(cfg.outDir);
  for (const auto& l : links) {
    const auto ctx = context_for(cfg, l);
    const auto single = assemble_point_record(trace(scene, l.tx, l.rx, cfg.trace), l.tx, l.rx, ctx, cfg.binWidthNs);
    const auto avg = spatial_average_stats(scene, l.tx, l.rx, cfg.trace, ctx);
    for (const auto& d : avg.diagnostics) err << l.id() << ": " << d << "\n";
    std::string text = "# rows: single point, then the average over " + std::to_string(avg.pointsUsed) + " points\n";
    const PointDataRecord rows[] = {single, avg.record};
    text += format_point_data(rows);
    write_file_atomic(cfg.outDir / (l.id() + ".average.csv"), text);
    out << l.id() << ": " << avg.pointsUsed << " points";
    if (avg.record.outage) {
      out << ", OUTAGE\n";
    } else {
      out << ", PL single " << format_double(single.omniPlDb) << " dB, averaged " << format_double(avg.record.omniPlDb)
          << " dB\n";
    }
  }
  return kExitOk;
}

double mean_nonzero(const std::vector<PointDataRecord>& rows, double PointDataRecord::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.*field > 0.0) {
      sum += r.*field;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

int cmd_stats(const std::string& path, std::optional<double> freqGhz, const std::string& loc,
              const std::optional<std::string>& outPath, std::ostream& out, std::ostream& err) {
  const auto records = load_point_data(path);
  std::map<std::pair<long long, int>, std::vector<PointDataRecord>> groups;
  for (const auto& r : records) {
    if (r.outage) continue;
    if (freqGhz && std::abs(r.frequencyGhz - *freqGhz) > 1e-6) continue;
    if (loc == "LOS" && r.losType != LosType::Los) continue;
    if (loc == "NLOS" && r.losType != LosType::Nlos) continue;
    groups[{std::llround(r.frequencyGhz * 1e6), r.losType == LosType::Los ? 0 : 1}].push_back(r);
  }
  if (groups.empty()) throw InputError(path + ": no rows match the filter");

  std::string text =
      "freq_ghz,loc_type,count,ple_n,sigma_db,mean_ds_ns,mean_asa_3gpp_deg,mean_asa_fleury_deg,mean_asd_3gpp_deg,"
      "mean_asd_fleury_deg,mean_zsa_3gpp_deg,mean_zsa_fleury_deg,mean_zsd_3gpp_deg,mean_zsd_fleury_deg\n";
  for (const auto& [key, rows] : groups) {
    const double f = static_cast<double>(key.first) / 1e6;
    const std::string locName = key.second == 0 ? "LOS" : "NLOS";
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) pts.emplace_back(r.trSepM, r.omniPlDb);
    PathLossFit fit;
    if (pts.size() >= 2) {
      fit = fit_ci(pts, f);
    } else {
      const double x = 10.0 * std::log10(pts[0].first);
      if (!(x > 0.0)) throw InputError("single-row fit needs a distance above 1 m");
      fit.fsplRefDb = fspl_1m_db(f);
      fit.n = (pts[0].second - fit.fsplRefDb) / x;
      fit.sigmaDb = 0.0;
      fit.count = 1;
      err << "warning: " << format_double(f) << " GHz " << locName << " has a single row; sigma is 0\n";
    }
    text += format_double(f) + "," + locName + "," + std::to_string(rows.size()) + "," + format_double(fit.n) + "," +
            format_double(fit.sigmaDb);
    for (auto field : {&PointDataRecord::omniDsNs, &PointDataRecord::asaDeg3gpp, &PointDataRecord::asaDegFleury,
                       &PointDataRecord::asdDeg3gpp, &PointDataRecord::asdDegFleury, &PointDataRecord::zsaDeg3gpp,
                       &PointDataRecord::zsaDegFleury, &PointDataRecord::zsdDeg3gpp, &PointDataRecord::zsdDegFleury}) {
      text += "," + format_double(mean_nonzero(rows, field));
    }
    text += "\n";
  }
  out << text;
  if (outPath) write_file_atomic(*outPath, text);
  return kExitOk;
}

int cmd_validate(const std::string& rtPath, const std::string& measPath, const std::string& parameter, bool fleury,
                 bool perFrequency, const std::optional<std::string>& outPath, std::ostream& out) {
  const auto rt = load_point_data(rtPath);
  const auto meas = load_point_data(measPath);
  const auto report = validate_point_data(rt, meas, parse_parameter(parameter), fleury, perFrequency);
  for (const auto& g : report.groups) {
    auto p = [](const KsResult& k) {
      return "D=" + format_double(k.d) +
             (k.pExact ? ", p_exact=" + format_double(*k.pExact) : std::string()) +
             ", p_asym=" + format_double(k.pAsymptotic);
    };
    out << parameter_name(report.parameter) << " [" << g.label << "] pairs " << g.pairs.size() << " (zeros excluded "
        << g.excludedZeros << "), removed " << g.filter.removed.size() << "\n";
    out << "  original: " << p(g.before) << "\n";
    if (!g.filter.kept.empty()) out << "  filtered: " << p(g.after) << "\n";
  }
  const std::string text = format_validation_report(report);
  if (outPath) {
    write_file_atomic(*outPath, text);
  } else {
    out << text;
  }
  return kExitOk;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& baseDir, const std::string& sourceName) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw InputError(sourceName + ":" + std::to_string(line) + ": " + e.what());
  }
  try {
    RunConfig cfg;
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : baseDir / p; };
    if (j.contains("scene") && !j.at("scene").get<std::string>().empty()) cfg.scenePath = resolve(j.at("scene"));
    cfg.trace.frequencyHz = j.value("frequency_ghz", cfg.trace.frequencyHz / 1e9) * 1e9;
    cfg.trace.txPowerDbm = j.value("tx_power_dbm", cfg.trace.txPowerDbm);
    cfg.trace.rayCount = j.value("rays", cfg.trace.rayCount);
    cfg.trace.maxDepth = j.value("max_depth", cfg.trace.maxDepth);
    cfg.trace.cutoffDbm = j.value("cutoff_dbm", cfg.trace.cutoffDbm);
    cfg.trace.workers = j.value("workers", cfg.trace.workers);
    if (j.contains("mechanisms")) {
      const auto& m = j.at("mechanisms");
      cfg.trace.enableReflection = m.value("reflection", cfg.trace.enableReflection);
      cfg.trace.enableDiffraction = m.value("diffraction", cfg.trace.enableDiffraction);
      cfg.trace.enablePenetration = m.value("penetration", cfg.trace.enablePenetration);
    }
    cfg.binWidthNs = j.value("bin_width_ns", cfg.binWidthNs);
    if (!(cfg.binWidthNs > 0.0)) throw InputError("bin_width_ns must be positive");
    if (j.contains("geo_origin")) {
      const auto& g = j.at("geo_origin");
      cfg.geoOrigin = GeoOrigin{g.at("lat").get<double>(), g.at("lon").get<double>()};
    }
    for (const auto& l : j.value("links", json::array())) {
      LinkSpec link;
      link.txId = l.at("tx").get<std::string>();
      link.rxId = l.at("rx").get<std::string>();
      link.tx = position_from(l, "tx", cfg.geoOrigin);
      link.rx = position_from(l, "rx", cfg.geoOrigin);
      cfg.links.push_back(std::move(link));
    }
    cfg.outDir = resolve(j.value("out_dir", std::string("out")));
    if (j.contains("calibration")) read_calib(j.at("calibration"), cfg.calib);
    cfg.trace.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw InputError(sourceName + ": " + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_text(path), path.parent_path(), path.string());
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw InputError("cannot write " + tmp.string());
    o << contents;
    if (!o.flush()) throw InputError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deterministic radio ray tracing, PDP calibration and channel validation"};
  app.require_subcommand(1);

  Overrides traceOpts;
  auto* trace = app.add_subcommand("trace", "trace every configured link and write paths, PDPs and point data");
  traceOpts.attach(trace);

  Overrides calibOpts;
  std::string measured;
  auto* calib = app.add_subcommand("calibrate", "calibrate one link's TX/RX positions against a measured PDP");
  calibOpts.attach(calib);
  calib->add_option("--measured", measured, "measured PDP file (delay_ns,power_dbm)")->required();

  Overrides avgOpts;
  auto* average = app.add_subcommand("average", "25-point spatially averaged statistics per link");
  avgOpts.attach(average);

  std::string pointData;
  std::optional<double> statsFreq;
  std::string loc = "all";
  std::optional<std::string> statsOut;
  auto* stats = app.add_subcommand("stats", "CI path-loss fit and mean spreads from point data");
  stats->add_option("--point-data", pointData, "point-data file")->required();
  stats->add_option("--freq-ghz", statsFreq, "only rows at this frequency");
  stats->add_option("--loc", loc, "LOS, NLOS or all")->check(CLI::IsMember({"LOS", "NLOS", "all"}));
  stats->add_option("--out", statsOut, "also write the table here");

  std::string rtPath, measPath, parameter = "ds";
  bool fleury = false;
  bool perFrequency = false;
  std::optional<std::string> validateOut;
  auto* validate = app.add_subcommand("validate", "outlier filtering and KS comparison of two point-data files");
  validate->add_option("--rt", rtPath, "simulated point data")->required();
  validate->add_option("--meas", measPath, "measured point data")->required();
  validate->add_option("--parameter", parameter, "ds, asa, asd, zsa or zsd");
  validate->add_flag("--fleury", fleury, "use the Fleury spread columns instead of 3GPP");
  validate->add_flag("--per-frequency", perFrequency, "add one group per frequency");
  validate->add_option("--out", validateOut, "report file (default: stdout)");

  std::vector<std::string> argvStore{"raycal"};
  argvStore.insert(argvStore.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argvStore) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*trace) return cmd_trace(traceOpts, out);
    if (*calib) return cmd_calibrate(calibOpts, measured, out);
    if (*average) return cmd_average(avgOpts, out, err);
    if (*stats) return cmd_stats(pointData, statsFreq, loc, statsOut, out, err);
    if (*validate) return cmd_validate(rtPath, measPath, parameter, fleury, perFrequency, validateOut, out);
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitInput;
}

}  // namespace raycal
