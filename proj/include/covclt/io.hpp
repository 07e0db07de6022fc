#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "covclt/common.hpp"

namespace covclt::io {

using Json = nlohmann::ordered_json;

/// RFC 4180 writer: CRLF line ends, fields quoted when they contain a comma,
/// quote or line break.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
};

std::string csv_escape(const std::string& field);
/// Shortest round-trip decimal form.
std::string fmt(double x);

Json complex_json(Complex z);
void write_json(const Json& j, const std::string& path);

/// Parses "a:b:count" into count equispaced points; count = 0 gives an empty grid.
std::vector<double> parse_grid(const std::string& spec);

struct ExperimentConfig {
  std::string population = "identity";
  Index N = 200;
  Index n = 200;
  /// Entry law; fixes V and kappa unless they are given explicitly.
  std::string distribution = "real_gaussian";
  std::optional<Complex> V;
  std::optional<double> kappa;
  std::vector<std::string> functions = {"bump(1,5)"};
  /// Real grid for density tables, "a:b:count".
  std::string grid = "0:4:512";
  std::vector<Complex> z = {{0.0, 1.0}};
  Index replicates = 1000;
  std::uint64_t seed = 1;
  std::uint64_t experiment = 0;
  std::string out = "out";
  int threads = 1;
  double tol = 1e-13;
  /// Covariance method: auto, boundary or hs.
  std::string method = "auto";
  bool dump_replicates = true;

  static ExperimentConfig from_json(const Json& j);
  static ExperimentConfig load(const std::string& path);
  Json to_json() const;
  void validate() const;
};

}  // namespace covclt::io
