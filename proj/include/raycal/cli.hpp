#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "raycal/calib.hpp"
#include "raycal/tracer.hpp"

namespace raycal {

enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitInfeasible = 3, kExitInvariant = 4 };

struct LinkSpec {
  std::string txId;
  std::string rxId;
  Vec3 tx;
  Vec3 rx;

  std::string id() const { return txId + "-" + rxId; }
};

struct RunConfig {
  std::filesystem::path scenePath;  // empty: free space
  TraceConfig trace;
  double binWidthNs = 1.0;
  std::optional<GeoOrigin> geoOrigin;
  std::vector<LinkSpec> links;
  std::filesystem::path outDir = "out";
  CalibConfig calib;
};

/// Parses a JSON run configuration; relative paths resolve against baseDir.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& baseDir,
                           const std::string& sourceName = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Entry point shared by the executable and the tests. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace raycal
