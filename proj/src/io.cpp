#include "covclt/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace covclt::io {

CsvWriter::CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write " + path);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << "\r\n";
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string s = "\"";
  for (char ch : field) {
    if (ch == '"') s += '"';
    s += ch;
  }
  s += '"';
  return s;
}

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Json complex_json(Complex z) { return Json::array({z.real(), z.imag()}); }

void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 3) throw std::invalid_argument("grid must be a:b:count");
  double a = 0.0, b = 0.0;
  long count = 0;
  try {
    a = std::stod(parts[0]);
    b = std::stod(parts[1]);
    count = std::stol(parts[2]);
  } catch (const std::exception&) {
    throw std::invalid_argument("grid must be a:b:count");
  }
  if (count < 0 || !(b >= a)) throw std::invalid_argument("grid needs count >= 0 and a <= b");
  std::vector<double> g(static_cast<size_t>(count));
  for (long i = 0; i < count; ++i) {
    g[static_cast<size_t>(i)] = count == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

namespace {

Complex parse_complex(const Json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw std::invalid_argument("complex values are numbers or [re, im] pairs");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  ExperimentConfig c;
  static const std::vector<std::string> known = {
      "population", "N",    "n",    "c",   "distribution", "V",      "kappa", "functions", "grid", "z",
      "replicates", "seed", "experiment", "out", "threads", "tol", "method", "dump_replicates"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  if (j.contains("population")) c.population = j["population"].get<std::string>();
  if (j.contains("N")) c.N = j["N"].get<Index>();
  if (j.contains("n")) c.n = j["n"].get<Index>();
  if (j.contains("c")) {
    const double ratio = j["c"].get<double>();
    if (!(ratio > 0.0)) throw std::invalid_argument("c must be positive");
    if (j.contains("n") && !j.contains("N")) {
      c.N = std::max<Index>(1, static_cast<Index>(std::lround(ratio * static_cast<double>(c.n))));
    } else {
      c.n = std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(c.N) / ratio)));
    }
  }
  if (j.contains("distribution")) c.distribution = j["distribution"].get<std::string>();
  if (j.contains("V")) c.V = parse_complex(j["V"]);
  if (j.contains("kappa")) c.kappa = j["kappa"].get<double>();
  if (j.contains("functions")) c.functions = j["functions"].get<std::vector<std::string>>();
  if (j.contains("grid")) c.grid = j["grid"].get<std::string>();
  if (j.contains("z")) {
    c.z.clear();
    for (const auto& z : j["z"]) c.z.push_back(parse_complex(z));
  }
  if (j.contains("replicates")) c.replicates = j["replicates"].get<Index>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("experiment")) c.experiment = j["experiment"].get<std::uint64_t>();
  if (j.contains("out")) c.out = j["out"].get<std::string>();
  if (j.contains("threads")) c.threads = j["threads"].get<int>();
  if (j.contains("tol")) c.tol = j["tol"].get<double>();
  if (j.contains("method")) c.method = j["method"].get<std::string>();
  if (j.contains("dump_replicates")) c.dump_replicates = j["dump_replicates"].get<bool>();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  ExperimentConfig c = from_json(j);
  // Relative file references resolve against the config's directory.
  const auto base = std::filesystem::path(path).parent_path();
  if (c.population.rfind("file:", 0) == 0) {
    const std::filesystem::path p = c.population.substr(5);
    if (p.is_relative() && !base.empty()) c.population = "file:" + (base / p).string();
  }
  return c;
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["population"] = population;
  j["N"] = N;
  j["n"] = n;
  j["distribution"] = distribution;
  if (V) j["V"] = complex_json(*V);
  if (kappa) j["kappa"] = *kappa;
  j["functions"] = functions;
  j["grid"] = grid;
  Json zs = Json::array();
  for (Complex w : z) zs.push_back(complex_json(w));
  j["z"] = zs;
  j["replicates"] = replicates;
  j["seed"] = seed;
  j["experiment"] = experiment;
  j["out"] = out;
  j["threads"] = threads;
  j["tol"] = tol;
  j["method"] = method;
  j["dump_replicates"] = dump_replicates;
  return j;
}

void ExperimentConfig::validate() const {
  if (N < 1 || n < 1) throw std::invalid_argument("N and n must be positive");
  if (replicates < 1) throw std::invalid_argument("replicates must be positive");
  if (threads < 1) throw std::invalid_argument("threads must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (method != "auto" && method != "boundary" && method != "hs") {
    throw std::invalid_argument("method must be auto, boundary or hs");
  }
  if (population.rfind("file:", 0) == 0 && !std::filesystem::exists(population.substr(5))) {
    throw std::invalid_argument("population file " + population.substr(5) + " does not exist");
  }
  for (const auto& f : functions) {
    const auto open = f.find("chebfit(");
    if (open == 0 && f.back() == ')') {
      const std::string path = f.substr(8, f.size() - 9);
      if (!std::filesystem::exists(path)) throw std::invalid_argument("sample file " + path + " does not exist");
    }
  }
  for (Complex w : z) {
    if (w.imag() == 0.0) throw std::invalid_argument("z points need Im z != 0");
  }
}

}  // namespace covclt::io
