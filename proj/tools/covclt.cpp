// covclt: deteq / predict / simulate / check front end.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "covclt/clt.hpp"
#include "covclt/deteq.hpp"
#include "covclt/hs.hpp"
#include "covclt/io.hpp"
#include "covclt/mc.hpp"
#include "covclt/parallel.hpp"

using namespace covclt;
using io::fmt;
using io::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::string population;
  double c = 0.0;
  Index N = 0;
  Index n = 0;
  std::string grid;
  std::vector<std::string> functions;
  std::vector<std::string> z;
  std::string dist;
  double V = 0.0;
  double kappa = 0.0;
  Index replicates = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  double tol = 0.0;
  std::string method;
  bool print_config = false;
};

Complex parse_z(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) return {std::stod(s), 0.0};
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw UsageError("bad z point '" + s + "' (expected re,im)");
  }
}

std::string z_label(Complex z) { return fmt(z.real()) + (z.imag() < 0 ? "" : "+") + fmt(z.imag()) + "i"; }

// Config file first, then explicit flags on top.
io::ExperimentConfig resolve_config(const Flags& fl, const CLI::App& sub) {
  io::ExperimentConfig cfg;
  if (!fl.config.empty()) cfg = io::ExperimentConfig::load(fl.config);
  // Subcommands define different option sets; an undefined option counts as not given.
  auto given = [&](const char* name) {
    const CLI::Option* opt = sub.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--population")) cfg.population = fl.population;
  if (given("--N")) cfg.N = fl.N;
  if (given("--n")) cfg.n = fl.n;
  if (given("--c")) {
    if (!(fl.c > 0.0)) throw UsageError("--c must be positive");
    cfg.n = std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(cfg.N) / fl.c)));
  }
  if (given("--grid")) cfg.grid = fl.grid;
  if (given("--f")) cfg.functions = fl.functions;
  if (given("--z")) {
    cfg.z.clear();
    for (const auto& s : fl.z) cfg.z.push_back(parse_z(s));
  }
  if (given("--dist")) cfg.distribution = fl.dist;
  if (given("--V")) cfg.V = Complex(fl.V, 0.0);
  if (given("--kappa")) cfg.kappa = fl.kappa;
  if (given("--replicates")) cfg.replicates = fl.replicates;
  if (given("--seed")) cfg.seed = fl.seed;
  if (given("--threads")) cfg.threads = fl.threads;
  else if (fl.config.empty()) cfg.threads = default_threads();
  if (given("--out")) cfg.out = fl.out;
  if (given("--tol")) cfg.tol = fl.tol;
  if (given("--method")) cfg.method = fl.method;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

clt::MomentProfile resolve_profile(const io::ExperimentConfig& cfg) {
  const mc::EntryDistribution d = mc::EntryDistribution::parse(cfg.distribution);
  clt::MomentProfile p = d.profile();
  if (cfg.V) p.V = *cfg.V;
  if (cfg.kappa) p.kappa = *cfg.kappa;
  p.validate();
  return p;
}

std::vector<hs::SmoothTestFunction> resolve_functions(const io::ExperimentConfig& cfg) {
  std::vector<hs::SmoothTestFunction> fs;
  for (const auto& s : cfg.functions) fs.push_back(hs::parse_test_function(s));
  return fs;
}

void ensure_out(const std::string& dir) { std::filesystem::create_directories(dir); }

std::string path_in(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

// ---------------------------------------------------------------------------

int cmd_deteq(const io::ExperimentConfig& cfg) {
  const std::vector<double> grid = io::parse_grid(cfg.grid);
  if (grid.empty()) throw UsageError("empty grid");
  const PopulationModel model = parse_population(cfg.population, cfg.N, cfg.n);
  const auto atoms = deteq::WeightedAtoms::from_model(model);
  ensure_out(cfg.out);

  const deteq::SpectralSupport sup = deteq::density_and_support(atoms, grid);
  std::vector<deteq::BoundaryValue> bv(grid.size());
  parallel_for(grid.size(), cfg.threads, [&](size_t i) {
    if (grid[i] != 0.0) bv[i] = deteq::boundary_value(atoms, grid[i]);
  });

  io::CsvWriter dens(path_in(cfg.out, "density.csv"));
  dens.row({"x", "density", "in_support"});
  for (size_t i = 0; i < grid.size(); ++i) {
    bool in = false;
    for (const auto& [a, b] : sup.support_intervals) in = in || (grid[i] >= a && grid[i] <= b);
    dens.row({fmt(grid[i]), fmt(sup.density[i]), in ? "1" : "0"});
  }
  io::CsvWriter supp(path_in(cfg.out, "support.csv"));
  supp.row({"interval", "lo", "hi"});
  for (size_t i = 0; i < sup.support_intervals.size(); ++i) {
    supp.row({std::to_string(i), fmt(sup.support_intervals[i].first), fmt(sup.support_intervals[i].second)});
  }
  io::CsvWriter st(path_in(cfg.out, "stieltjes.csv"));
  st.row({"re_z", "im_z", "re_t", "im_t", "re_t_tilde", "im_t_tilde", "error", "stable"});
  for (size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] == 0.0) continue;
    st.row({fmt(grid[i]), "0", fmt(bv[i].t.real()), fmt(bv[i].t.imag()), fmt(bv[i].t_tilde.real()),
            fmt(bv[i].t_tilde.imag()), fmt(bv[i].error), bv[i].stable ? "1" : "0"});
  }
  deteq::SolverOptions so;
  so.tol = cfg.tol;
  for (Complex z : cfg.z) {
    const auto s = deteq::solve_canonical(atoms, z, so);
    st.row({fmt(z.real()), fmt(z.imag()), fmt(s.t.real()), fmt(s.t.imag()), fmt(s.t_tilde.real()),
            fmt(s.t_tilde.imag()), fmt(s.residual), "1"});
  }
  for (const auto& w : sup.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "support:";
  for (const auto& [a, b] : sup.support_intervals) std::cout << " [" << a << ", " << b << "]";
  std::cout << "\natom at zero: " << sup.atom_at_zero << "\nmass: " << sup.mass << '\n';
  return kExitOk;
}

int cmd_predict(const io::ExperimentConfig& cfg) {
  const PopulationModel model = parse_population(cfg.population, cfg.N, cfg.n);
  const clt::MomentProfile profile = resolve_profile(cfg);
  const auto fs = resolve_functions(cfg);
  const auto method = cfg.method == "boundary" ? hs::CovarianceMethod::Boundary
                      : cfg.method == "hs"     ? hs::CovarianceMethod::HS
                                               : hs::CovarianceMethod::Auto;
  hs::HSOptions opts;
  opts.threads = cfg.threads;
  ensure_out(cfg.out);

  const hs::GaussianLaw law = hs::gaussian_law(model, profile, fs, method, opts);
  Diagnostics diag;
  for (const auto& w : law.warnings) diag.warn(w);
  Json means = Json::object();
  Json vars = Json::object();
  Json centers = Json::object();
  for (size_t i = 0; i < fs.size(); ++i) {
    means[fs[i].name()] = law.mean(static_cast<Index>(i));
    vars[fs[i].name()] = law.variance(static_cast<Index>(i));
    centers[fs[i].name()] = hs::ls_mean(model, fs[i], &diag);
  }
  Json cov = Json::array();
  for (Index i = 0; i < law.covariance.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < law.covariance.cols(); ++j) row.push_back(law.covariance(i, j));
    cov.push_back(row);
  }

  // Kernel tables over the configured z points.
  const auto k = clt::KernelCouplings::from_model(model);
  io::CsvWriter kern(path_in(cfg.out, "kernels.csv"));
  kern.row({"re_z1", "im_z1", "re_z2", "im_z2", "re_theta0", "im_theta0", "re_theta1", "im_theta1", "re_theta2",
            "im_theta2", "re_theta", "im_theta"});
  io::CsvWriter bias(path_in(cfg.out, "bias.csv"));
  bias.row({"re_z", "im_z", "re_B1", "im_B1", "re_B2", "im_B2", "re_B", "im_B"});
  for (Complex z1 : cfg.z) {
    const clt::BiasValue b = clt::bias(k, profile, z1);
    bias.row({fmt(z1.real()), fmt(z1.imag()), fmt(b.B1.real()), fmt(b.B1.imag()), fmt(b.B2.real()),
              fmt(b.B2.imag()), fmt(b.B.real()), fmt(b.B.imag())});
    for (Complex z2 : cfg.z) {
      for (Complex w : {z2, std::conj(z2)}) {
        const clt::CovarianceKernel ck = clt::theta_total(k, profile, z1, w, &diag);
        kern.row({fmt(z1.real()), fmt(z1.imag()), fmt(w.real()), fmt(w.imag()), fmt(ck.theta0.real()),
                  fmt(ck.theta0.imag()), fmt(ck.theta1.real()), fmt(ck.theta1.imag()), fmt(ck.theta2.real()),
                  fmt(ck.theta2.imag()), fmt(ck.theta.real()), fmt(ck.theta.imag())});
      }
    }
  }

  Json j;
  j["model"] = {{"population", cfg.population}, {"N", model.N()}, {"n", model.n()}, {"c", model.c()}};
  j["profile"] = {{"V", io::complex_json(profile.V)}, {"kappa", profile.kappa}};
  j["functions"] = cfg.functions;
  j["mean"] = means;
  j["variance"] = vars;
  j["covariance_matrix"] = cov;
  j["centering"] = centers;
  j["diagnostics"] = diag.warnings;
  io::write_json(j, path_in(cfg.out, "law.json"));
  for (const auto& w : diag.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

Json summary_json(const std::string& name, const std::vector<double>& xs, double pm, double pv,
                  std::vector<std::string>& notes) {
  const auto [mean, var] = mc::mean_variance(xs);
  Json s;
  s["statistic"] = name;
  s["count"] = xs.size();
  s["empirical"] = {{"mean", mean},
                    {"variance", var},
                    {"standard_error", std::sqrt(var / std::max<double>(1.0, static_cast<double>(xs.size())))}};
  s["predicted"] = {{"mean", pm}, {"variance", pv}};
  try {
    const mc::EmpiricalSummary e = mc::compare_to_gaussian(xs, pm, pv);
    s["ks_statistic"] = e.ks_statistic;
    s["ks_critical"] = e.ks_critical;
    s["variance_ratio"] = e.variance_ratio;
    s["mean_z"] = e.mean_z;
  } catch (const std::invalid_argument& e) {
    s["ks_statistic"] = nullptr;
    s["ks_critical"] = nullptr;
    s["variance_ratio"] = pv > 0.0 ? Json(var / pv) : Json(nullptr);
    s["mean_z"] = nullptr;
    notes.push_back(name + ": " + e.what());
  }
  return s;
}

int cmd_simulate(const io::ExperimentConfig& cfg) {
  const PopulationModel model = parse_population(cfg.population, cfg.N, cfg.n);
  const mc::EntryDistribution dist = mc::EntryDistribution::parse(cfg.distribution);
  if (cfg.V || cfg.kappa) throw UsageError("simulate takes V and kappa from the distribution");
  const clt::MomentProfile profile = dist.profile();
  mc::ExperimentSpec spec;
  spec.dist = dist;
  spec.functions = resolve_functions(cfg);
  spec.z = cfg.z;
  spec.replicates = cfg.replicates;
  spec.seed = cfg.seed;
  spec.experiment = cfg.experiment;
  spec.threads = cfg.threads;
  ensure_out(cfg.out);

  const mc::ExperimentResult res = mc::run_experiment(model, spec);
  hs::HSOptions opts;
  opts.threads = cfg.threads;
  // Monte-Carlo standard errors are far above 1e-6, so the prediction need not be tighter.
  const hs::GaussianLaw law =
      hs::gaussian_law(model, profile, spec.functions, hs::CovarianceMethod::Auto, opts, 1e-6);

  if (cfg.dump_replicates) {
    io::CsvWriter rep(path_in(cfg.out, "replicates.csv"));
    rep.row({"replicate", "statistic", "value"});
    for (const auto& r : res.replicates) {
      for (size_t i = 0; i < spec.functions.size(); ++i) {
        rep.row({std::to_string(r.index), "L:" + spec.functions[i].name(), fmt(r.L(static_cast<Index>(i)))});
      }
      for (size_t i = 0; i < spec.z.size(); ++i) {
        const Complex m = r.M(static_cast<Index>(i));
        rep.row({std::to_string(r.index), "ReM:" + z_label(spec.z[i]), fmt(m.real())});
        rep.row({std::to_string(r.index), "ImM:" + z_label(spec.z[i]), fmt(m.imag())});
      }
    }
  }

  std::vector<std::string> notes = res.log;
  for (const auto& w : law.warnings) notes.push_back(w);
  Json stats = Json::array();
  for (size_t i = 0; i < spec.functions.size(); ++i) {
    const auto ii = static_cast<Index>(i);
    stats.push_back(summary_json("L:" + spec.functions[i].name(), res.L_column(ii), law.mean(ii),
                                 law.variance(ii), notes));
  }
  const auto k = clt::KernelCouplings::from_model(model);
  for (size_t i = 0; i < spec.z.size(); ++i) {
    const Complex z = spec.z[i];
    const auto col = res.M_column(static_cast<Index>(i));
    std::vector<double> re, im;
    for (Complex m : col) {
      re.push_back(m.real());
      im.push_back(m.imag());
    }
    // E|M|^2 = Theta(z, conj z); E M^2 = Theta(z, z).
    const double abs2 = clt::theta_total(k, profile, z, std::conj(z)).theta.real();
    const double sq = clt::theta_total(k, profile, z, z).theta.real();
    const Complex b = clt::bias(k, profile, z).B;
    stats.push_back(summary_json("ReM:" + z_label(z), re, b.real(), 0.5 * (abs2 + sq), notes));
    stats.push_back(summary_json("ImM:" + z_label(z), im, b.imag(), 0.5 * (abs2 - sq), notes));
  }

  Json j;
  j["config"] = cfg.to_json();
  j["replicates"] = res.replicates.size();
  j["dropped"] = res.dropped.size();
  j["drop_rate"] = res.drop_rate();
  j["statistics"] = stats;
  j["notes"] = notes;
  io::write_json(j, path_in(cfg.out, "summary.json"));
  std::cout << j["statistics"].dump(2) << '\n';
  if (res.drop_rate() > 1e-3) {
    std::cerr << "error: replicate failure rate " << res.drop_rate() << " exceeds 0.1%\n";
    return kExitNumerical;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CheckLine {
  std::string name;
  double value;
  double limit;
};

int cmd_check(const io::ExperimentConfig& cfg) {
  std::vector<CheckLine> lines;
  // Canonical solver against the closed form.
  {
    double worst = 0.0;
    for (double c : {0.5, 1.0, 2.0}) {
      const auto atoms = deteq::WeightedAtoms::from_measure(VectorXd::Ones(1), VectorXd::Ones(1), c);
      for (int i = 0; i < 20; ++i) {
        const Complex z(-1.0 + 0.3 * i, 0.05 + 0.05 * i);
        const Complex a = deteq::solve_canonical(atoms, z).t;
        const Complex b = deteq::mp_closed_form(c, z);
        worst = std::max(worst, std::abs(a - b) / std::abs(b));
      }
    }
    lines.push_back({"white solver vs closed form", worst, 1e-10});
  }
  const PopulationModel model = parse_population(cfg.population, std::min<Index>(cfg.N, 200),
                                                 std::max<Index>(1, cfg.n * std::min<Index>(cfg.N, 200) / cfg.N));
  {
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        const Complex z(0.4 * i + 0.1, 0.05 + 0.2 * j);
        worst = std::max(worst, deteq::determinant_identity(model, z).relative_error);
      }
    }
    lines.push_back({"imaginary-part identity", worst, 1e-8});
  }
  {
    const auto k = clt::KernelCouplings::from_model(model);
    double worst0 = 0.0, worst2 = 0.0, worstd = 0.0;
    for (int i = 0; i < 6; ++i) {
      const Complex z1(0.5 * i, 0.3 + 0.1 * i);
      const Complex z2(2.5 - 0.4 * i, -0.2 - 0.05 * i);
      const clt::KernelNode n1 = clt::make_node(k, z1);
      const clt::KernelNode n2 = clt::make_node(k, z2);
      const Complex a = clt::theta0(n1, n2);
      const Complex b = clt::theta0_alternate(k, n1, n2);
      worst0 = std::max(worst0, std::abs(a - b) / std::abs(a));
      const Complex c2 = clt::theta2(k, n1, n2);
      const Complex d2 = clt::theta2_alternate(model, z1, z2);
      worst2 = std::max(worst2, std::abs(c2 - d2) / std::abs(c2));
      const Complex da = n1.dt_tilde;
      const Complex dc = deteq::t_tilde_derivative_cauchy(k.atoms, z1);
      worstd = std::max(worstd, std::abs(da - dc) / std::abs(da));
    }
    lines.push_back({"theta0 definition vs alternate form", worst0, 1e-6});
    lines.push_back({"theta2 factorized vs contour form", worst2, 1e-6});
    lines.push_back({"t~' analytic vs contour", worstd, 1e-8});
  }
  {
    mc::Rng rng = mc::make_rng(cfg.seed, 0xc4ec, 0);
    std::normal_distribution<double> nd;
    MatrixXcd a(10, 10);
    for (Index i = 0; i < 10; ++i) {
      for (Index j = 0; j < 10; ++j) a(i, j) = Complex(nd(rng), nd(rng));
    }
    a = 0.25 * (a + a.adjoint()).eval();
    a += 2.0 * MatrixXcd::Identity(10, 10);
    const auto r = hs::hs_trace_identity_check(a, hs::bump(-1.0, 5.0));
    lines.push_back({"planar trace identity", r.deviation, 1e-4});
  }
  {
    double worst = 0.0;
    for (const auto& d : mc::all_kinds()) {
      const MatrixXcd one = MatrixXcd::Ones(1, 1);
      const auto r = mc::covariance_identity_check(d, one, one, 20000, cfg.seed);
      worst = std::max(worst, std::abs(r.lhs - r.rhs) - 5.0 * r.standard_error);
    }
    lines.push_back({"quadratic-form covariance identity (excess over 5 SE)", std::max(0.0, worst), 1e-12});
  }
  bool ok = true;
  for (const auto& l : lines) {
    const bool pass = l.value < l.limit;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << l.name << ": " << l.value << " (limit " << l.limit << ")\n";
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic equivalents, CLT kernels and Monte-Carlo checks for sample covariance spectra"};
  app.require_subcommand(1);
  Flags fl;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", fl.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--population", fl.population, "identity | two_atom(a,b,w) | geometric(r) | inline:l1,l2,... | file:PATH");
    sub->add_option("--N", fl.N, "dimension N")->check(CLI::PositiveNumber);
    sub->add_option("--n", fl.n, "sample count n")->check(CLI::PositiveNumber);
    sub->add_option("--c", fl.c, "ratio N/n; sets n from N");
    sub->add_option("--z", fl.z, "complex point re,im (repeatable)");
    sub->add_option("--seed", fl.seed, "master seed");
    sub->add_option("--threads", fl.threads, "worker threads (default: logical cores)")->check(CLI::PositiveNumber);
    sub->add_option("--out", fl.out, "output directory");
    sub->add_option("--tol", fl.tol, "fixed-point tolerance");
    sub->add_flag("--print-config", fl.print_config, "print the resolved config and exit");
  };
  auto profile_flags = [&](CLI::App* sub) {
    sub->add_option("--f", fl.functions, "test function, e.g. bump(1,5) (repeatable)");
    sub->add_option("--dist", fl.dist, "entry distribution");
  };

  CLI::App* deteq_cmd = app.add_subcommand("deteq", "density, support and Stieltjes tables");
  common(deteq_cmd);
  deteq_cmd->add_option("--grid", fl.grid, "real grid a:b:count");

  CLI::App* predict_cmd = app.add_subcommand("predict", "Gaussian law of linear statistics, kernel and bias tables");
  common(predict_cmd);
  profile_flags(predict_cmd);
  predict_cmd->add_option("--V", fl.V, "E X^2 (overrides --dist)");
  predict_cmd->add_option("--kappa", fl.kappa, "fourth cumulant (overrides --dist)");
  predict_cmd->add_option("--method", fl.method, "covariance method: auto | boundary | hs");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo replicates against the predicted law");
  common(sim_cmd);
  profile_flags(sim_cmd);
  sim_cmd->add_option("--replicates", fl.replicates, "replicate count")->check(CLI::PositiveNumber);

  CLI::App* check_cmd = app.add_subcommand("check", "invariant suite");
  common(check_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const io::ExperimentConfig cfg = resolve_config(fl, *sub);
    if (fl.print_config) {
      std::cout << cfg.to_json().dump(2) << '\n';
      return kExitOk;
    }
    if (sub == deteq_cmd) return cmd_deteq(cfg);
    if (sub == predict_cmd) return cmd_predict(cfg);
    if (sub == sim_cmd) return cmd_simulate(cfg);
    return cmd_check(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
