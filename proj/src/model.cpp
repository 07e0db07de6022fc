#include "covclt/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace covclt {

std::string to_string(Complex z) {
  std::ostringstream os;
  os.precision(12);
  os << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
  return os.str();
}

namespace {

constexpr double kUnitaryTol = 1e-12;

// Eigenvalues closer than this (relative) are merged into one atom.
constexpr double kAtomMergeTol = 1e-12;

}  // namespace

PopulationModel::PopulationModel(VectorXd eigenvalues, Index n)
    : eigenvalues_(std::move(eigenvalues)), n_(n) {
  validate();
  build_atoms();
}

PopulationModel::PopulationModel(VectorXd eigenvalues, MatrixXcd eigenvectors, Index n)
    : eigenvalues_(std::move(eigenvalues)), eigenvectors_(std::move(eigenvectors)), n_(n) {
  validate();
  const MatrixXcd& u = *eigenvectors_;
  const double defect =
      (u * u.adjoint() - MatrixXcd::Identity(N(), N())).cwiseAbs().maxCoeff();
  if (defect > kUnitaryTol * std::max<double>(1.0, static_cast<double>(N()))) {
    throw std::invalid_argument("eigenvectors are not unitary (defect " +
                                std::to_string(defect) + ")");
  }
  const MatrixXcd r = matrix();
  is_real_ = r.imag().cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, spectral_norm());
  build_atoms();
}

void PopulationModel::validate() const {
  if (eigenvalues_.size() < 1) throw std::invalid_argument("N must be positive");
  if (n_ < 1) throw std::invalid_argument("n must be positive");
  for (Index i = 0; i < eigenvalues_.size(); ++i) {
    if (!std::isfinite(eigenvalues_(i)) || eigenvalues_(i) < 0.0) {
      throw std::invalid_argument("population eigenvalues must be finite and nonnegative");
    }
  }
  if (eigenvectors_ && (eigenvectors_->rows() != N() || eigenvectors_->cols() != N())) {
    throw std::invalid_argument("eigenvector matrix must be N x N");
  }
}

void PopulationModel::build_atoms() {
  const Index n_eig = N();
  std::vector<Index> order(static_cast<size_t>(n_eig));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return eigenvalues_(a) < eigenvalues_(b); });

  // atom_of[k] = index of the atom eigenvalue k belongs to.
  std::vector<Index> atom_of(static_cast<size_t>(n_eig));
  std::vector<double> sums;
  std::vector<double> counts;
  for (Index pos = 0; pos < n_eig; ++pos) {
    const Index k = order[static_cast<size_t>(pos)];
    const double lam = eigenvalues_(k);
    if (!sums.empty()) {
      const double ref = sums.back() / counts.back();
      if (std::abs(lam - ref) <= kAtomMergeTol * std::max(1.0, std::abs(ref))) {
        sums.back() += lam;
        counts.back() += 1.0;
        atom_of[static_cast<size_t>(k)] = static_cast<Index>(sums.size()) - 1;
        continue;
      }
    }
    sums.push_back(lam);
    counts.push_back(1.0);
    atom_of[static_cast<size_t>(k)] = static_cast<Index>(sums.size()) - 1;
  }

  const Index K = static_cast<Index>(sums.size());
  atoms_.value.resize(K);
  atoms_.multiplicity.resize(K);
  for (Index a = 0; a < K; ++a) {
    atoms_.value(a) = sums[static_cast<size_t>(a)] / counts[static_cast<size_t>(a)];
    atoms_.multiplicity(a) = counts[static_cast<size_t>(a)];
  }

  if (!eigenvectors_) {
    atoms_.diagonal_overlap = atoms_.multiplicity.asDiagonal();
    atoms_.transpose_overlap = atoms_.multiplicity.asDiagonal();
    atoms_.row_weight.resize(0, 0);
    return;
  }

  const MatrixXcd& u = *eigenvectors_;
  const MatrixXd abs2 = u.cwiseAbs2();
  // Aggregate columns of |U|^2 by atom.
  MatrixXd agg = MatrixXd::Zero(n_eig, K);
  for (Index k = 0; k < n_eig; ++k) agg.col(atom_of[static_cast<size_t>(k)]) += abs2.col(k);
  atoms_.row_weight = agg;
  atoms_.diagonal_overlap = agg.transpose() * agg;

  if (is_real_) {
    // Eigenspaces of a real symmetric R are invariant under conjugation, so
    // U^* conj(U) is block diagonal and unitary within each block.
    atoms_.transpose_overlap = atoms_.multiplicity.asDiagonal();
  } else {
    const MatrixXd p = (u.adjoint() * u.conjugate()).cwiseAbs2();
    MatrixXd rows = MatrixXd::Zero(K, n_eig);
    for (Index k = 0; k < n_eig; ++k) rows.row(atom_of[static_cast<size_t>(k)]) += p.row(k);
    MatrixXd both = MatrixXd::Zero(K, K);
    for (Index l = 0; l < n_eig; ++l) both.col(atom_of[static_cast<size_t>(l)]) += rows.col(l);
    atoms_.transpose_overlap = both;
  }
}

PopulationModel PopulationModel::from_matrix(const MatrixXcd& r, Index n) {
  if (r.rows() != r.cols()) throw std::invalid_argument("R must be square");
  const double asym = (r - r.adjoint()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, r.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("R must be Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(r);
  if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition of R failed");
  VectorXd lam = es.eigenvalues();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  for (Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < -1e-12 * scale) throw std::invalid_argument("R must be nonnegative definite");
    lam(i) = std::max(lam(i), 0.0);
  }
  MatrixXcd u = es.eigenvectors();
  const bool real_input = r.imag().cwiseAbs().maxCoeff() == 0.0;
  if (real_input) {
    // Keep a real eigenbasis for real R.
    Eigen::SelfAdjointEigenSolver<MatrixXd> esr(r.real());
    u = esr.eigenvectors().cast<Complex>();
    lam = esr.eigenvalues().cwiseMax(0.0);
  }
  return PopulationModel(std::move(lam), std::move(u), n);
}

PopulationModel PopulationModel::identity(Index N, Index n) {
  return PopulationModel(VectorXd::Ones(N), n);
}

PopulationModel PopulationModel::two_atom(double a, double b, double w, Index N, Index n) {
  if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("two_atom weight must lie in [0,1]");
  const auto na = static_cast<Index>(std::llround(w * static_cast<double>(N)));
  VectorXd lam(N);
  for (Index i = 0; i < N; ++i) lam(i) = i < na ? a : b;
  return PopulationModel(std::move(lam), n);
}

PopulationModel PopulationModel::geometric(double r, Index N, Index n) {
  if (!(r > 0.0)) throw std::invalid_argument("geometric ratio must be positive");
  VectorXd lam(N);
  for (Index i = 0; i < N; ++i) lam(i) = std::pow(r, static_cast<double>(i));
  return PopulationModel(std::move(lam), n);
}

MatrixXcd PopulationModel::eigenvectors() const {
  if (eigenvectors_) return *eigenvectors_;
  return MatrixXcd::Identity(N(), N());
}

double PopulationModel::spectral_norm() const { return eigenvalues_.maxCoeff(); }

double PopulationModel::support_bound() const {
  const double s = 1.0 + std::sqrt(c());
  return spectral_norm() * s * s;
}

double PopulationModel::atom_at_zero() const {
  Index rank = 0;
  for (Index i = 0; i < N(); ++i) rank += eigenvalues_(i) > 0.0 ? 1 : 0;
  const double kept = static_cast<double>(std::min(rank, n_)) / static_cast<double>(N());
  return std::max(0.0, 1.0 - kept);
}

MatrixXcd PopulationModel::matrix() const {
  if (!eigenvectors_) return eigenvalues_.cast<Complex>().asDiagonal();
  const MatrixXcd& u = *eigenvectors_;
  return u * eigenvalues_.cast<Complex>().asDiagonal() * u.adjoint();
}

MatrixXcd PopulationModel::sqrt_matrix() const {
  const VectorXcd s = eigenvalues_.cwiseSqrt().cast<Complex>();
  if (!eigenvectors_) return s.asDiagonal();
  const MatrixXcd& u = *eigenvectors_;
  return u * s.asDiagonal() * u.adjoint();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    size_t used = 0;
    const double v = std::stod(item, &used);
    if (item.find_first_not_of(" \t", used) != std::string::npos) {
      throw std::invalid_argument("malformed number '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

PopulationModel parse_population(const std::string& descriptor, Index N, Index n) {
  if (descriptor.rfind("file:", 0) == 0) return load_model_file(descriptor.substr(5));
  if (N < 1 || n < 1) throw std::invalid_argument("population needs positive N and n");
  if (descriptor == "identity") return PopulationModel::identity(N, n);
  if (descriptor.rfind("inline:", 0) == 0) {
    const auto values = parse_number_list(descriptor.substr(7));
    if (values.empty()) throw std::invalid_argument("inline population has no eigenvalues");
    // The listed values are repeated cyclically to fill N.
    VectorXd lam(N);
    for (Index i = 0; i < N; ++i) lam(i) = values[static_cast<size_t>(i) % values.size()];
    return PopulationModel(std::move(lam), n);
  }
  static const std::regex call(R"(^\s*(\w+)\s*\(([^)]*)\)\s*$)");
  std::smatch m;
  if (std::regex_match(descriptor, m, call)) {
    const std::string name = m[1];
    const auto args = parse_number_list(m[2]);
    if (name == "two_atom" && args.size() == 3) {
      return PopulationModel::two_atom(args[0], args[1], args[2], N, n);
    }
    if (name == "geometric" && args.size() == 1) return PopulationModel::geometric(args[0], N, n);
    if (name == "identity" && args.empty()) return PopulationModel::identity(N, n);
  }
  throw std::invalid_argument("unknown population descriptor '" + descriptor + "'");
}

PopulationModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("model file '" + path + "': " + e.what());
  }
  if (!j.contains("eigenvalues") || !j.contains("n")) {
    throw std::invalid_argument("model file needs keys 'eigenvalues' and 'n'");
  }
  const auto values = j.at("eigenvalues").get<std::vector<double>>();
  const auto n = j.at("n").get<Index>();
  const auto N = j.value("N", static_cast<Index>(values.size()));
  if (N != static_cast<Index>(values.size())) {
    throw std::invalid_argument("model file: N does not match the eigenvalue count");
  }
  VectorXd lam = Eigen::Map<const VectorXd>(values.data(), N);
  if (!j.contains("eigenvectors") || j.at("eigenvectors").is_null()) {
    return PopulationModel(std::move(lam), n);
  }
  const auto& ev = j.at("eigenvectors");
  if (!ev.is_array() || static_cast<Index>(ev.size()) != N * N) {
    throw std::invalid_argument("model file: eigenvectors must hold N*N [re, im] pairs");
  }
  MatrixXcd u(N, N);
  for (Index r = 0; r < N; ++r) {
    for (Index c = 0; c < N; ++c) {
      const auto& pair = ev.at(static_cast<size_t>(r * N + c));
      u(r, c) = Complex(pair.at(0).get<double>(), pair.at(1).get<double>());
    }
  }
  return PopulationModel(std::move(lam), std::move(u), n);
}

void save_model_file(const PopulationModel& model, const std::string& path) {
  nlohmann::json j;
  j["N"] = model.N();
  j["n"] = model.n();
  std::vector<double> lam(model.eigenvalues().data(),
                          model.eigenvalues().data() + model.N());
  j["eigenvalues"] = lam;
  if (model.has_eigenvectors()) {
    const MatrixXcd u = model.eigenvectors();
    auto arr = nlohmann::json::array();
    for (Index r = 0; r < model.N(); ++r) {
      for (Index c = 0; c < model.N(); ++c) arr.push_back({u(r, c).real(), u(r, c).imag()});
    }
    j["eigenvectors"] = arr;
  }
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write model file '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace covclt
