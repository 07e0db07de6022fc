#include "covclt/mc.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "covclt/deteq.hpp"
#include "covclt/hs.hpp"
#include "covclt/parallel.hpp"

namespace covclt::mc {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double two_point_kappa(double p) { return (1.0 - p) * (1.0 - p) / p + p * p / (1.0 - p) - 3.0; }

}  // namespace

EntryDistribution EntryDistribution::parse(const std::string& name) {
  static const std::regex two_point(R"(\s*two_point\(\s*([^)\s]+)\s*\)\s*)");
  std::smatch m;
  EntryDistribution d;
  if (name == "real_gaussian") {
    d.kind = EntryKind::RealGaussian;
  } else if (name == "complex_gaussian") {
    d.kind = EntryKind::ComplexGaussian;
  } else if (name == "real_rademacher") {
    d.kind = EntryKind::RealRademacher;
  } else if (name == "complex_rademacher") {
    d.kind = EntryKind::ComplexRademacher;
  } else if (name == "real_uniform") {
    d.kind = EntryKind::RealUniform;
  } else if (std::regex_match(name, m, two_point)) {
    d.kind = EntryKind::TwoPoint;
    d.p = std::stod(m[1].str());
    if (!(d.p > 0.0 && d.p < 1.0)) throw std::invalid_argument("two_point needs 0 < p < 1");
  } else {
    throw std::invalid_argument("unknown entry distribution '" + name + "'");
  }
  return d;
}

std::string EntryDistribution::name() const {
  switch (kind) {
    case EntryKind::RealGaussian: return "real_gaussian";
    case EntryKind::ComplexGaussian: return "complex_gaussian";
    case EntryKind::RealRademacher: return "real_rademacher";
    case EntryKind::ComplexRademacher: return "complex_rademacher";
    case EntryKind::RealUniform: return "real_uniform";
    case EntryKind::TwoPoint: {
      std::ostringstream os;
      os << "two_point(" << p << ")";
      return os.str();
    }
  }
  return "unknown";
}

bool EntryDistribution::is_real() const {
  return kind != EntryKind::ComplexGaussian && kind != EntryKind::ComplexRademacher;
}

Complex EntryDistribution::V() const { return is_real() ? 1.0 : 0.0; }

double EntryDistribution::kappa() const {
  switch (kind) {
    case EntryKind::RealGaussian:
    case EntryKind::ComplexGaussian: return 0.0;
    case EntryKind::RealRademacher: return -2.0;
    case EntryKind::ComplexRademacher: return -1.0;
    case EntryKind::RealUniform: return -1.2;
    case EntryKind::TwoPoint: return two_point_kappa(p);
  }
  return 0.0;
}

std::vector<EntryDistribution> all_kinds() {
  return {{EntryKind::RealGaussian},      {EntryKind::ComplexGaussian}, {EntryKind::RealRademacher},
          {EntryKind::ComplexRademacher}, {EntryKind::RealUniform},     {EntryKind::TwoPoint, 0.3}};
}

Rng make_rng(std::uint64_t seed, std::uint64_t experiment, std::uint64_t replicate) {
  std::uint64_t s = seed;
  std::uint64_t key = splitmix64(s);
  s = key ^ experiment;
  key = splitmix64(s);
  s = key ^ replicate;
  std::seed_seq seq{splitmix64(s), splitmix64(s), splitmix64(s), splitmix64(s)};
  return Rng(seq);
}

Complex draw(const EntryDistribution& dist, Rng& rng) {
  switch (dist.kind) {
    case EntryKind::RealGaussian: {
      std::normal_distribution<double> nd;
      return nd(rng);
    }
    case EntryKind::ComplexGaussian: {
      std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
      const double re = nd(rng);
      return {re, nd(rng)};
    }
    case EntryKind::RealRademacher:
      return (rng() >> 63) != 0 ? 1.0 : -1.0;
    case EntryKind::ComplexRademacher: {
      static const Complex pts[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      return pts[rng() >> 62];
    }
    case EntryKind::RealUniform: {
      std::uniform_real_distribution<double> ud(-std::sqrt(3.0), std::sqrt(3.0));
      return ud(rng);
    }
    case EntryKind::TwoPoint: {
      std::uniform_real_distribution<double> ud;
      return ud(rng) < dist.p ? std::sqrt((1.0 - dist.p) / dist.p) : -std::sqrt(dist.p / (1.0 - dist.p));
    }
  }
  return 0.0;
}

namespace {

MatrixXd sample_real(const EntryDistribution& dist, Index N, Index n, Rng& rng) {
  MatrixXd x(N, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < N; ++i) x(i, j) = draw(dist, rng).real();
  }
  return x;
}

MatrixXcd sample_complex(const EntryDistribution& dist, Index N, Index n, Rng& rng) {
  MatrixXcd x(N, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < N; ++i) x(i, j) = draw(dist, rng);
  }
  return x;
}

}  // namespace

MatrixXcd sample_entries(const EntryDistribution& dist, Index N, Index n, std::uint64_t seed) {
  if (N < 1 || n < 1) throw std::invalid_argument("sample_entries needs N, n >= 1");
  Rng rng = make_rng(seed);
  return sample_complex(dist, N, n, rng);
}

MomentEstimate estimate_moments(const EntryDistribution& dist, Index count, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Complex s1 = 0.0, s2 = 0.0;
  double a2 = 0.0, a4 = 0.0;
  for (Index i = 0; i < count; ++i) {
    const Complex x = draw(dist, rng);
    s1 += x;
    s2 += x * x;
    const double q = std::norm(x);
    a2 += q;
    a4 += q * q;
  }
  const double m = static_cast<double>(count);
  MomentEstimate out;
  out.mean = s1 / m;
  out.second = a2 / m;
  out.V = s2 / m;
  out.kappa = a4 / m - std::norm(out.V) - 2.0;
  return out;
}

IdentityCheck covariance_identity_check(const EntryDistribution& dist, const MatrixXcd& a,
                                        const MatrixXcd& b, Index samples, std::uint64_t seed) {
  const Index N = a.rows();
  if (N > 50) throw std::invalid_argument("covariance identity check is meant for N <= 50");
  if (a.cols() != N || b.rows() != N || b.cols() != N) throw std::invalid_argument("A and B must be N x N");
  if (samples < 2) throw std::invalid_argument("need at least two samples");
  Rng rng = make_rng(seed, 0x1d, 0);
  const Complex tra = a.trace();
  const Complex trb = b.trace();
  VectorXcd x(N);
  double sum = 0.0, sum2 = 0.0;
  for (Index s = 0; s < samples; ++s) {
    for (Index i = 0; i < N; ++i) x(i) = draw(dist, rng);
    const double qa = (x.dot(a * x) - tra).real();
    const double qb = (x.dot(b * x) - trb).real();
    const double p = qa * qb;
    sum += p;
    sum2 += p * p;
  }
  const double m = static_cast<double>(samples);
  IdentityCheck out;
  out.lhs = sum / m;
  out.standard_error = std::sqrt(std::max(0.0, (sum2 / m - out.lhs * out.lhs) / (m - 1.0)));
  const double v2 = std::norm(dist.V());
  out.rhs = (a * b).trace().real() + v2 * (a * b.transpose()).trace().real() +
            dist.kappa() * (a.diagonal().cwiseProduct(b.diagonal())).sum().real();
  out.relative_error = std::abs(out.lhs - out.rhs) / std::max(std::abs(out.rhs), 1e-300);
  return out;
}

// ---------------------------------------------------------------------------

double ExperimentResult::drop_rate() const {
  const auto total = static_cast<double>(replicates.size() + dropped.size());
  return total > 0.0 ? static_cast<double>(dropped.size()) / total : 0.0;
}

std::vector<double> ExperimentResult::L_column(Index f) const {
  std::vector<double> out;
  out.reserve(replicates.size());
  for (const auto& r : replicates) out.push_back(r.L(f));
  return out;
}

std::vector<Complex> ExperimentResult::M_column(Index z) const {
  std::vector<Complex> out;
  out.reserve(replicates.size());
  for (const auto& r : replicates) out.push_back(r.M(z));
  return out;
}

ExperimentResult run_experiment(const PopulationModel& model, const ExperimentSpec& spec) {
  if (spec.replicates < 1) throw std::invalid_argument("need at least one replicate");
  const Index N = model.N();
  const Index n = model.n();
  ExperimentResult out;
  out.centers.resize(static_cast<Index>(spec.functions.size()));
  for (size_t i = 0; i < spec.functions.size(); ++i) {
    Diagnostics diag;
    out.centers(static_cast<Index>(i)) = hs::ls_mean(model, spec.functions[i], &diag);
    for (const auto& w : diag.warnings) out.log.push_back(spec.functions[i].name() + ": " + w);
  }
  out.t.resize(static_cast<Index>(spec.z.size()));
  for (size_t i = 0; i < spec.z.size(); ++i) {
    if (spec.z[i].imag() == 0.0) throw std::invalid_argument("resolvent points need Im z != 0");
    out.t(static_cast<Index>(i)) = deteq::solve_canonical(model, spec.z[i]).t;
  }

  const bool real = spec.dist.is_real() && model.is_real();
  const MatrixXcd root = model.sqrt_matrix();
  const MatrixXd root_re = root.real();
  const VectorXd root_diag = model.eigenvalues().cwiseSqrt();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));

  std::vector<ReplicateResult> slots(static_cast<size_t>(spec.replicates));
  std::vector<std::string> failure(static_cast<size_t>(spec.replicates));
  parallel_for(slots.size(), spec.threads, [&](size_t r) {
    Rng rng = make_rng(spec.seed, spec.experiment, r);
    VectorXd lam;
    bool ok = true;
    if (real) {
      MatrixXd x = sample_real(spec.dist, N, n, rng);
      const MatrixXd sig = model.is_diagonal() ? MatrixXd(scale * root_diag.asDiagonal() * x)
                                               : MatrixXd(scale * root_re * x);
      MatrixXd s = MatrixXd::Zero(N, N);
      s.selfadjointView<Eigen::Lower>().rankUpdate(sig);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
      ok = es.info() == Eigen::Success;
      if (ok) lam = es.eigenvalues();
    } else {
      MatrixXcd x = sample_complex(spec.dist, N, n, rng);
      const MatrixXcd sig = model.is_diagonal() ? MatrixXcd(scale * root_diag.cast<Complex>().asDiagonal() * x)
                                                : MatrixXcd(scale * root * x);
      MatrixXcd s = MatrixXcd::Zero(N, N);
      s.selfadjointView<Eigen::Lower>().rankUpdate(sig);
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es(s, Eigen::EigenvaluesOnly);
      ok = es.info() == Eigen::Success;
      if (ok) lam = es.eigenvalues();
    }
    ReplicateResult& res = slots[r];
    res.index = static_cast<Index>(r);
    if (!ok || !lam.allFinite()) {
      failure[r] = "replicate " + std::to_string(r) + ": eigensolver failed";
      return;
    }
    lam = lam.cwiseMax(0.0);
    res.lambda_max = lam.maxCoeff();
    res.L.resize(static_cast<Index>(spec.functions.size()));
    for (size_t i = 0; i < spec.functions.size(); ++i) {
      const auto& f = spec.functions[i];
      double s = 0.0;
      for (Index k = 0; k < N; ++k) s += f(lam(k));
      res.L(static_cast<Index>(i)) = s - out.centers(static_cast<Index>(i));
    }
    res.M.resize(static_cast<Index>(spec.z.size()));
    for (size_t i = 0; i < spec.z.size(); ++i) {
      const Complex z = spec.z[i];
      Complex tr = 0.0;
      for (Index k = 0; k < N; ++k) tr += 1.0 / (lam(k) - z);
      res.M(static_cast<Index>(i)) = tr - static_cast<double>(N) * out.t(static_cast<Index>(i));
    }
    if (spec.keep_eigenvalues) res.eigenvalues = std::move(lam);
  });

  for (size_t r = 0; r < slots.size(); ++r) {
    if (!failure[r].empty()) {
      out.dropped.push_back(static_cast<Index>(r));
      out.log.push_back(failure[r]);
    } else {
      out.replicates.push_back(std::move(slots[r]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::pair<double, double> mean_variance(const std::vector<double>& x) {
  if (x.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double var = x.size() > 1 ? ss / static_cast<double>(x.size() - 1) : 0.0;
  return {mean, var};
}

double ks_standard_normal(std::vector<double> u) {
  if (u.empty()) throw std::invalid_argument("empty sample");
  std::sort(u.begin(), u.end());
  const double m = static_cast<double>(u.size());
  double d = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-u[i] / std::sqrt(2.0));
    d = std::max({d, static_cast<double>(i + 1) / m - cdf, cdf - static_cast<double>(i) / m});
  }
  return d;
}

EmpiricalSummary compare_to_gaussian(const std::vector<double>& samples, double predicted_mean,
                                     double predicted_variance, Index min_count) {
  if (static_cast<Index>(samples.size()) < min_count) {
    throw std::invalid_argument("comparison needs at least " + std::to_string(min_count) + " replicates, got " +
                                std::to_string(samples.size()));
  }
  if (!(predicted_variance > 0.0)) throw std::invalid_argument("predicted variance must be positive");
  EmpiricalSummary s;
  s.count = static_cast<Index>(samples.size());
  std::tie(s.mean, s.variance) = mean_variance(samples);
  s.standard_error = std::sqrt(s.variance / static_cast<double>(s.count));
  s.predicted_mean = predicted_mean;
  s.predicted_variance = predicted_variance;
  s.variance_ratio = s.variance / predicted_variance;
  const double sd = std::sqrt(predicted_variance);
  std::vector<double> u(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) u[i] = (samples[i] - predicted_mean) / sd;
  s.ks_statistic = ks_standard_normal(std::move(u));
  s.ks_critical = 1.36 / std::sqrt(static_cast<double>(s.count));
  s.mean_z = s.standard_error > 0.0 ? std::abs(s.mean - predicted_mean) / s.standard_error : 0.0;
  return s;
}

}  // namespace covclt::mc
