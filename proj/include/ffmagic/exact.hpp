#pragma once

// Brute-force dense-statevector reference for small qubit counts: exact
// circuit evolution, exact Pauli/Majorana spectra and SRE, Haar-random
// fixed-purity states and their closed-form SRE model.

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "ffmagic/circuit.hpp"
#include "ffmagic/gaussian_state.hpp"
#include "ffmagic/linalg.hpp"
#include "ffmagic/rng.hpp"

namespace ffmagic::exact {

inline constexpr int kMaxQubits = 10;
inline constexpr int kMaxReplayQubits = 8;

using Vector = Eigen::VectorXcd;

/// phase * X^x Z^z. Acts as P|b> = phase * (-1)^{popcount(b & z)} |b xor x>.
struct PauliOp {
  std::uint32_t x_mask = 0;
  std::uint32_t z_mask = 0;
  std::complex<double> phase = 1.0;

  /// Operator product: (*this) applied after rhs.
  PauliOp operator*(const PauliOp& rhs) const;
};

/// Jordan-Wigner Majorana: even index 2i -> (prod_{j<i} Z_j) X_i,
/// odd index 2i+1 -> (prod_{j<i} Z_j) Y_i.
PauliOp majorana_op(int mu);

/// gamma_x = product of gamma_mu over the set bits of mask, ascending.
PauliOp majorana_string_op(std::uint32_t mask);

class DenseState {
 public:
  static DenseState pure(Vector psi);
  static DenseState computational(int n_qubits, const std::vector<int>& bits = {});
  static DenseState mixed(CMatrix rho);

  int n_qubits() const { return n_; }
  int dim() const { return 1 << n_; }
  bool is_pure() const { return pure_; }
  const Vector& psi() const;
  const CMatrix& rho() const;

  std::complex<double> pauli_expectation(const PauliOp& p) const;
  double purity() const;

  Vector& mutable_psi();

 private:
  int n_ = 0;
  bool pure_ = true;
  Vector psi_;
  CMatrix rho_;
};

std::complex<double> majorana_expectation(const DenseState& state, std::uint32_t mask);

/// Expectation of every Hermitian Pauli string i^{|x & z|} X^x Z^z, indexed
/// by (x << N) | z. All values are real.
std::vector<double> pauli_expectations(const DenseState& state);

/// |Tr(rho P)|^2 for all 4^N Pauli strings, same indexing.
std::vector<double> pauli_sq_spectrum(const DenseState& state);

/// |Tr(rho gamma_x)|^2 for all 2^{2N} Majorana strings, indexed by mask.
std::vector<double> majorana_sq_spectrum(const DenseState& state);

/// M_alpha from a squared spectrum: (1/(1-alpha)) ln(sum t^alpha / sum t),
/// with the alpha=1 limit -sum (t/sum) ln t. Nats.
double sre_from_sq_spectrum(const std::vector<double>& sq, double alpha);

double exact_sre(const DenseState& state, double alpha);
double exact_sre_majorana(const DenseState& state, double alpha);

/// Entropy (nats) of the reduced state on a site region; pure states only.
double subsystem_entropy(const DenseState& state, const Region& region, int renyi_index);

/// Gamma_{mu nu} = -i <gamma_mu gamma_nu> for mu != nu, zero diagonal.
Matrix covariance(const DenseState& state);

void apply_one_qubit_gate(DenseState& state, int qubit, const Eigen::Matrix2cd& u);
void apply_cnot(DenseState& state, int control, int target);

/// Brickwork gate exp(-i H) with H = sum_{m<n} 2 kappa_{mn} i gamma_a gamma_b
/// built through the Jordan-Wigner map; the same couplings the Gaussian
/// engine turns into a column rotation.
void apply_gate(DenseState& state, const GateParams& g);

MeasurementRecord measure_projective(DenseState& state, int site, Rng& outcomes,
                                     std::optional<int> forced = {});
MeasurementRecord measure_weak(DenseState& state, int site, double beta, Rng& outcomes,
                               std::optional<int> forced = {});

using DenseObserver = std::function<void(int step, const DenseState&)>;

/// Validation twin of run_circuit: identical RNG consumption, dense states.
std::vector<MeasurementRecord> run_circuit_dense(const CircuitSpec& spec, DenseState& state,
                                                 const DenseObserver& observer = {});

CMatrix haar_unitary(int dim, Rng& rng);

/// Mixed state with Tr rho^2 = 2^{-log_purity_bits}: spectrum
/// (p, q, ..., q) solving the purity constraint, conjugated by a Haar
/// unitary.
DenseState haar_fixed_purity_state(int n_qubits, double log_purity_bits, Rng& rng);

/// Gaussian-spectrum model of a Haar state's Pauli amplitudes. log_purity
/// (S) is base-2: Tr rho^2 = 2^{-S}. b predetermined strings (identity
/// included) of which b1 have expectation +1; b1 does not enter the even
/// moments, so the SRE formulas depend on b only.
struct PauliSpectrumModel {
  int n_qubits = 0;
  double log_purity_bits = 0.0;
  double b = 1.0;
  double b1 = 1.0;

  void validate() const;
  double sigma() const;
};

/// Closed-form M_alpha of the model, in nats.
double haar_sre_analytic(const PauliSpectrumModel& model, double alpha);

/// Leading-order M_alpha (nats): (N+S) ln2 below the crossover,
/// (N-S)/(alpha-1) ln2 above.
double haar_sre_asymptotic(const PauliSpectrumModel& model, double alpha);

/// S/N where the 1 < alpha < 2 scaling switches branches: (2-alpha)/alpha,
/// clamped to [0,1] (alpha <= 1 never switches, alpha >= 2 always uses the
/// purity-limited branch).
double haar_sre_crossover_s_over_n(double alpha);

}  // namespace ffmagic::exact
