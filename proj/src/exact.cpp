#include "ffmagic/exact.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace ffmagic::exact {

namespace {

int parity(std::uint32_t v) { return std::popcount(v) & 1; }

void check_capacity(int n_qubits) {
  if (n_qubits < 1) throw InputError("dense state: need at least one qubit");
  if (n_qubits > kMaxQubits)
    throw CapacityError("dense state: qubit count exceeds the enumeration limit");
}

}  // namespace

PauliOp PauliOp::operator*(const PauliOp& rhs) const {
  PauliOp out;
  out.x_mask = x_mask ^ rhs.x_mask;
  out.z_mask = z_mask ^ rhs.z_mask;
  out.phase = phase * rhs.phase;
  // Commuting Z^z past X^{x'} picks up (-1)^{|z & x'|}.
  if (parity(z_mask & rhs.x_mask)) out.phase = -out.phase;
  return out;
}

PauliOp majorana_op(int mu) {
  if (mu < 0) throw InputError("majorana_op: negative index");
  const int site = mu / 2;
  PauliOp p;
  p.x_mask = 1u << site;
  if (mu % 2 == 0) {
    p.z_mask = (1u << site) - 1;
  } else {
    p.z_mask = (1u << (site + 1)) - 1;
    p.phase = std::complex<double>(0.0, 1.0);
  }
  return p;
}

PauliOp majorana_string_op(std::uint32_t mask) {
  PauliOp acc;
  for (int mu = 0; mask >> mu; ++mu)
    if ((mask >> mu) & 1u) acc = acc * majorana_op(mu);
  return acc;
}

DenseState DenseState::pure(Vector psi) {
  const auto dim = psi.size();
  if (dim < 2 || (dim & (dim - 1)) != 0) throw InputError("DenseState: dimension must be 2^N");
  int n = 0;
  while ((Eigen::Index{1} << n) < dim) ++n;
  check_capacity(n);
  const double norm = psi.norm();
  if (std::abs(norm - 1.0) > 1e-12) throw InputError("DenseState: pure state must be normalized");
  DenseState st;
  st.n_ = n;
  st.pure_ = true;
  st.psi_ = std::move(psi);
  st.psi_ /= norm;
  return st;
}

DenseState DenseState::computational(int n_qubits, const std::vector<int>& bits) {
  check_capacity(n_qubits);
  if (!bits.empty() && static_cast<int>(bits.size()) != n_qubits)
    throw InputError("DenseState: bits must be empty or of length n_qubits");
  int index = 0;
  for (int j = 0; j < static_cast<int>(bits.size()); ++j) {
    if (bits[static_cast<std::size_t>(j)] != 0 && bits[static_cast<std::size_t>(j)] != 1)
      throw InputError("DenseState: bits must be 0 or 1");
    index |= bits[static_cast<std::size_t>(j)] << j;
  }
  Vector psi = Vector::Zero(Eigen::Index{1} << n_qubits);
  psi(index) = 1.0;
  return pure(std::move(psi));
}

DenseState DenseState::mixed(CMatrix rho) {
  const auto dim = rho.rows();
  if (rho.cols() != dim || dim < 2 || (dim & (dim - 1)) != 0)
    throw InputError("DenseState: density matrix must be square 2^N");
  int n = 0;
  while ((Eigen::Index{1} << n) < dim) ++n;
  check_capacity(n);
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
    throw InputError("DenseState: density matrix must be Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > 1e-10 || std::abs(rho.trace().imag()) > 1e-10)
    throw InputError("DenseState: density matrix must have unit trace");
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(rho);
  if (eig.eigenvalues().minCoeff() < -1e-10)
    throw InputError("DenseState: density matrix must be positive semidefinite");
  DenseState st;
  st.n_ = n;
  st.pure_ = false;
  st.rho_ = std::move(rho);
  return st;
}

const Vector& DenseState::psi() const {
  if (!pure_) throw InputError("DenseState: not a pure state");
  return psi_;
}

Vector& DenseState::mutable_psi() {
  if (!pure_) throw InputError("DenseState: not a pure state");
  return psi_;
}

const CMatrix& DenseState::rho() const {
  if (pure_) throw InputError("DenseState: not a mixed state");
  return rho_;
}

std::complex<double> DenseState::pauli_expectation(const PauliOp& p) const {
  const int d = dim();
  std::complex<double> acc = 0.0;
  if (pure_) {
    for (int b = 0; b < d; ++b) {
      std::complex<double> term = std::conj(psi_(b ^ static_cast<int>(p.x_mask))) * psi_(b);
      if (parity(static_cast<std::uint32_t>(b) & p.z_mask)) term = -term;
      acc += term;
    }
  } else {
    for (int b = 0; b < d; ++b) {
      std::complex<double> term = rho_(b, b ^ static_cast<int>(p.x_mask));
      if (parity(static_cast<std::uint32_t>(b) & p.z_mask)) term = -term;
      acc += term;
    }
  }
  return p.phase * acc;
}

double DenseState::purity() const {
  if (pure_) return 1.0;
  return rho_.squaredNorm();  // Tr(rho^2) for Hermitian rho
}

std::complex<double> majorana_expectation(const DenseState& state, std::uint32_t mask) {
  if (mask >> (2 * state.n_qubits())) throw InputError("majorana_expectation: mask out of range");
  return state.pauli_expectation(majorana_string_op(mask));
}

std::vector<double> pauli_expectations(const DenseState& state) {
  const int n = state.n_qubits();
  const std::uint32_t d = 1u << n;
  const std::complex<double> im(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(d) * d);
  for (std::uint32_t x = 0; x < d; ++x) {
    for (std::uint32_t z = 0; z < d; ++z) {
      PauliOp p{x, z, 1.0};
      // i^{|x & z|} turns X^x Z^z into the Hermitian Pauli string.
      switch (std::popcount(x & z) & 3) {
        case 0: break;
        case 1: p.phase = im; break;
        case 2: p.phase = -1.0; break;
        case 3: p.phase = -im; break;
      }
      out[(static_cast<std::size_t>(x) << n) | z] = state.pauli_expectation(p).real();
    }
  }
  return out;
}

std::vector<double> pauli_sq_spectrum(const DenseState& state) {
  const int n = state.n_qubits();
  const std::uint32_t d = 1u << n;
  std::vector<double> out(static_cast<std::size_t>(d) * d);
  for (std::uint32_t x = 0; x < d; ++x)
    for (std::uint32_t z = 0; z < d; ++z) {
      const std::complex<double> t = state.pauli_expectation(PauliOp{x, z, 1.0});
      out[(static_cast<std::size_t>(x) << n) | z] = std::norm(t);
    }
  return out;
}

std::vector<double> majorana_sq_spectrum(const DenseState& state) {
  const int n2 = 2 * state.n_qubits();
  std::vector<double> out(std::size_t{1} << n2);
  for (std::uint32_t mask = 0; mask < out.size(); ++mask)
    out[mask] = std::norm(state.pauli_expectation(majorana_string_op(mask)));
  return out;
}

double sre_from_sq_spectrum(const std::vector<double>& sq, double alpha) {
  if (!(alpha > 0.0)) throw InputError("sre: alpha must be positive");
  double total = 0.0;
  for (double t : sq) total += t;
  if (!(total > 0.0)) throw InputError("sre: empty spectrum");
  if (std::abs(alpha - 1.0) < 1e-12) {
    double acc = 0.0;
    for (double t : sq)
      if (t > 0.0) acc += (t / total) * std::log(t);
    return -acc;
  }
  double powsum = 0.0;
  for (double t : sq)
    if (t > 0.0) powsum += std::pow(t, alpha);
  return (std::log(powsum) - std::log(total)) / (1.0 - alpha);
}

double exact_sre(const DenseState& state, double alpha) {
  return sre_from_sq_spectrum(pauli_sq_spectrum(state), alpha);
}

double exact_sre_majorana(const DenseState& state, double alpha) {
  return sre_from_sq_spectrum(majorana_sq_spectrum(state), alpha);
}

double subsystem_entropy(const DenseState& state, const Region& region, int renyi_index) {
  const int n = state.n_qubits();
  region.validate(n);
  if (renyi_index != 1 && renyi_index != 2)
    throw InputError("subsystem_entropy: renyi_index must be 1 or 2");
  if (!state.is_pure()) throw InputError("subsystem_entropy: pure states only");
  const int na = region.size();
  if (na == 0 || na == n) return 0.0;

  std::vector<int> rest;
  for (int i = 0; i < n; ++i)
    if (!region.contains(i)) rest.push_back(i);

  CMatrix m = CMatrix::Zero(Eigen::Index{1} << na, Eigen::Index{1} << (n - na));
  for (int b = 0; b < state.dim(); ++b) {
    int a_idx = 0;
    for (int k = 0; k < na; ++k) a_idx |= ((b >> region.sites[static_cast<std::size_t>(k)]) & 1) << k;
    int r_idx = 0;
    for (std::size_t k = 0; k < rest.size(); ++k) r_idx |= ((b >> rest[k]) & 1) << k;
    m(a_idx, r_idx) = state.psi()(b);
  }
  Eigen::JacobiSVD<CMatrix> svd(m);
  double s1 = 0.0;
  double tr2 = 0.0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    const double lam = svd.singularValues()(i) * svd.singularValues()(i);
    if (lam > 1e-300) s1 -= lam * std::log(lam);
    tr2 += lam * lam;
  }
  return renyi_index == 1 ? s1 : -std::log(tr2);
}

Matrix covariance(const DenseState& state) {
  const int m = 2 * state.n_qubits();
  Matrix gamma = Matrix::Zero(m, m);
  for (int mu = 0; mu < m; ++mu)
    for (int nu = mu + 1; nu < m; ++nu) {
      const std::complex<double> g =
          state.pauli_expectation(majorana_op(mu) * majorana_op(nu));
      // <gamma_mu gamma_nu> is purely imaginary off the diagonal.
      gamma(mu, nu) = g.imag();
      gamma(nu, mu) = -g.imag();
    }
  return gamma;
}

void apply_one_qubit_gate(DenseState& state, int qubit, const Eigen::Matrix2cd& u) {
  if (qubit < 0 || qubit >= state.n_qubits())
    throw InputError("apply_one_qubit_gate: qubit out of range");
  Vector& psi = state.mutable_psi();
  const int step = 1 << qubit;
  for (int b = 0; b < state.dim(); ++b) {
    if (b & step) continue;
    const std::complex<double> a0 = psi(b);
    const std::complex<double> a1 = psi(b | step);
    psi(b) = u(0, 0) * a0 + u(0, 1) * a1;
    psi(b | step) = u(1, 0) * a0 + u(1, 1) * a1;
  }
}

void apply_cnot(DenseState& state, int control, int target) {
  if (control < 0 || control >= state.n_qubits() || target < 0 ||
      target >= state.n_qubits() || control == target)
    throw InputError("apply_cnot: bad qubits");
  Vector& psi = state.mutable_psi();
  const int c = 1 << control;
  const int t = 1 << target;
  for (int b = 0; b < state.dim(); ++b)
    if ((b & c) && !(b & t)) std::swap(psi(b), psi(b | t));
}

void apply_gate(DenseState& state, const GateParams& g) {
  const int n = state.n_qubits();
  if (n > kMaxReplayQubits)
    throw CapacityError("apply_gate: replay limited to 8 qubits");
  const int d = state.dim();

  static constexpr std::array<std::array<int, 2>, 6> pairs{
      {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
  CMatrix h = CMatrix::Zero(d, d);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const int ga = (2 * g.bond + pairs[k][0]) % (2 * n);
    const int gb = (2 * g.bond + pairs[k][1]) % (2 * n);
    const PauliOp p = majorana_op(ga) * majorana_op(gb);
    const std::complex<double> coeff =
        2.0 * g.kappa[k] * std::complex<double>(0.0, 1.0) * p.phase;
    for (int b = 0; b < d; ++b) {
      std::complex<double> term = coeff;
      if (parity(static_cast<std::uint32_t>(b) & p.z_mask)) term = -term;
      h(b ^ static_cast<int>(p.x_mask), b) += term;
    }
  }
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
    throw NumericalError("apply_gate: generator is not Hermitian");

  Eigen::SelfAdjointEigenSolver<CMatrix> eig(h);
  if (eig.info() != Eigen::Success) throw NumericalError("apply_gate: eigensolver failed");
  const std::complex<double> im(0.0, 1.0);
  Vector rotated = eig.eigenvectors().adjoint() * state.psi();
  for (int i = 0; i < d; ++i) rotated(i) *= std::exp(-im * eig.eigenvalues()(i));
  state.mutable_psi() = eig.eigenvectors() * rotated;
}

namespace {

double z_expectation(const DenseState& state, int site) {
  PauliOp z;
  z.z_mask = 1u << site;
  return state.pauli_expectation(z).real();
}

MeasurementRecord finish_dense(DenseState& state, int site, ProtocolKind kind, double p_plus,
                               double beta, Rng& outcomes, std::optional<int> forced) {
  const OutcomeDraw d = draw_outcome(p_plus, outcomes, forced);
  MeasurementRecord rec;
  rec.site = site;
  rec.kind = kind;
  rec.outcome = d.outcome;
  rec.born_probability = d.probability;
  rec.forced = d.forced;
  rec.flipped = d.flipped;

  Vector& psi = state.mutable_psi();
  const int bit = 1 << site;
  if (kind == ProtocolKind::projective) {
    const int keep = d.outcome > 0 ? 0 : bit;
    for (int b = 0; b < state.dim(); ++b)
      if ((b & bit) != keep) psi(b) = 0.0;
  } else {
    for (int b = 0; b < state.dim(); ++b)
      psi(b) *= std::exp(d.outcome * beta * ((b & bit) ? -1.0 : 1.0));
  }
  const double norm = psi.norm();
  if (norm < 1e-150) throw InstabilityError("dense measurement: state annihilated");
  psi /= norm;
  return rec;
}

struct DenseExecutor {
  DenseState* state;

  void gate(int bond, const GateParams& g) { apply_gate(*state, g); }

  MeasurementRecord measure(int site, const Protocol& pr, Rng& outcomes,
                            std::optional<int> forced) {
    if (pr.kind == ProtocolKind::weak)
      return measure_weak(*state, site, pr.beta, outcomes, forced);
    return measure_projective(*state, site, outcomes, forced);
  }
};

}  // namespace

MeasurementRecord measure_projective(DenseState& state, int site, Rng& outcomes,
                                     std::optional<int> forced) {
  const double z = z_expectation(state, site);
  const double p_plus = std::clamp(0.5 * (1.0 + z), 0.0, 1.0);
  return finish_dense(state, site, ProtocolKind::projective, p_plus, 0.0, outcomes, forced);
}

MeasurementRecord measure_weak(DenseState& state, int site, double beta, Rng& outcomes,
                               std::optional<int> forced) {
  if (!(beta >= 0.0)) throw InputError("measure_weak: beta must be non-negative");
  const double z = z_expectation(state, site);
  const double ch = std::cosh(2.0 * beta);
  const double sh = std::sinh(2.0 * beta);
  const double p_plus = std::clamp((ch + z * sh) / (2.0 * ch), 0.0, 1.0);
  return finish_dense(state, site, ProtocolKind::weak, p_plus, beta, outcomes, forced);
}

std::vector<MeasurementRecord> run_circuit_dense(const CircuitSpec& spec, DenseState& state,
                                                 const DenseObserver& observer) {
  if (state.n_qubits() != spec.n_sites)
    throw InputError("run_circuit_dense: state size does not match the circuit spec");
  if (spec.n_sites > kMaxReplayQubits)
    throw CapacityError("run_circuit_dense: replay limited to 8 qubits");
  DenseExecutor ex{&state};
  std::function<void(int)> hook;
  if (observer) hook = [&](int t) { observer(t, state); };
  return run_circuit_on(spec, ex, hook);
}

CMatrix haar_unitary(int dim, Rng& rng) {
  if (dim < 1) throw InputError("haar_unitary: dimension must be positive");
  CMatrix g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      g(i, j) = std::complex<double>(rng.normal(), rng.normal());
  Eigen::HouseholderQR<CMatrix> qr(g);
  CMatrix q = qr.householderQ();
  const CMatrix r = qr.matrixQR();
  for (int i = 0; i < dim; ++i) {
    const std::complex<double> rd = r(i, i);
    q.col(i) *= rd / std::abs(rd);
  }
  return q;
}

DenseState haar_fixed_purity_state(int n_qubits, double log_purity_bits, Rng& rng) {
  check_capacity(n_qubits);
  if (log_purity_bits < -1e-12 || log_purity_bits > n_qubits + 1e-12)
    throw InputError("haar_fixed_purity_state: log purity must be in [0, N]");
  const double d = std::exp2(n_qubits);
  const double t = std::exp2(-log_purity_bits);
  const double disc = std::max((d - 1.0) * (d * t - 1.0), 0.0);
  const double p = (1.0 + std::sqrt(disc)) / d;
  const double q = (1.0 - p) / (d - 1.0);

  // Spectrum (p, q, ..., q): rho = q I + (p - q) |u_0><u_0|.
  const int dim = 1 << n_qubits;
  const CMatrix u = haar_unitary(dim, rng);
  CMatrix rho = q * CMatrix::Identity(dim, dim);
  rho += (p - q) * (u.col(0) * u.col(0).adjoint());
  rho = 0.5 * (rho + rho.adjoint());
  return DenseState::mixed(std::move(rho));
}

void PauliSpectrumModel::validate() const {
  if (n_qubits < 1) throw InputError("PauliSpectrumModel: need at least one qubit");
  if (b < 1.0 || b1 < 0.0 || b1 > b) throw InputError("PauliSpectrumModel: need 0 <= b1 <= b, b >= 1");
  if (log_purity_bits < -1e-12 || log_purity_bits > n_qubits + 1e-12)
    throw InputError("PauliSpectrumModel: log purity must be in [0, N]");
  if (b >= std::exp2(2.0 * n_qubits)) throw InputError("PauliSpectrumModel: b too large");
}

double PauliSpectrumModel::sigma() const {
  return (std::exp2(n_qubits - log_purity_bits) - b) / (std::exp2(2.0 * n_qubits) - b);
}

double haar_sre_analytic(const PauliSpectrumModel& model, double alpha) {
  model.validate();
  if (!(alpha > 0.0)) throw InputError("haar_sre_analytic: alpha must be positive");
  const double sigma = model.sigma();
  if (!(sigma > 0.0)) throw InputError("haar_sre_analytic: sigma must be positive");

  const double n = model.n_qubits;
  const double s = model.log_purity_bits;
  const double ln2 = std::numbers::ln2;
  const double euler = 0.57721566490153286060651209008240243;

  if (std::abs(alpha - 1.0) < 1e-12)
    return (model.b * std::exp2(-(n - s)) - 1.0) * (std::log(sigma) + 2.0 - euler - ln2);

  // c_alpha (2^{N-S} - b)^alpha / (4^N - b)^{alpha-1}, evaluated in logs.
  const double ln_c = alpha * ln2 + std::lgamma(alpha + 0.5) - 0.5 * std::log(std::numbers::pi);
  const double ln_term = ln_c + alpha * std::log(std::exp2(n - s) - model.b) -
                         (alpha - 1.0) * std::log(std::exp2(2.0 * n) - model.b);
  const double bracket = std::exp(ln_term) + model.b;
  return (std::log(bracket) - (n - s) * ln2) / (1.0 - alpha);
}

double haar_sre_crossover_s_over_n(double alpha) {
  if (!(alpha > 0.0)) throw InputError("haar_sre_crossover_s_over_n: alpha must be positive");
  return std::clamp((2.0 - alpha) / alpha, 0.0, 1.0);
}

double haar_sre_asymptotic(const PauliSpectrumModel& model, double alpha) {
  model.validate();
  if (!(alpha > 0.0)) throw InputError("haar_sre_asymptotic: alpha must be positive");
  const double n = model.n_qubits;
  const double s = model.log_purity_bits;
  const double ln2 = std::numbers::ln2;
  if (alpha <= 1.0) return (n + s) * ln2;
  const double crossover = haar_sre_crossover_s_over_n(alpha);
  if (n > 0 && s / n < crossover) return (n + s) * ln2;
  return (n - s) / (alpha - 1.0) * ln2;
}

}  // namespace ffmagic::exact
