#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ffmagic/linalg.hpp"

namespace ffmagic {

/// A set of sites (modes), kept sorted and unique.
struct Region {
  std::vector<int> sites;

  Region() = default;
  explicit Region(std::vector<int> s);

  /// `count` consecutive sites starting at `first`, wrapping mod n_modes.
  static Region interval(int first, int count, int n_modes);
  static Region complement(const Region& r, int n_modes);

  int size() const { return static_cast<int>(sites.size()); }
  bool contains(int site) const;
  /// Majorana indices {2s, 2s+1} of every site, sorted.
  std::vector<int> majoranas() const;
  void validate(int n_modes) const;
};

/// Pure fermionic Gaussian state of N modes, held as the N x 2N annihilator
/// coefficient matrix: row kappa lists the Majorana components of a mode
/// operator d_kappa with d_kappa |psi> = 0. Invariants: alpha alpha^dag = I/2
/// and alpha alpha^T = 0 (the rows span an isotropic subspace).
class GaussianState {
 public:
  GaussianState() = default;

  /// Computational product state |b_0 b_1 ... >; empty bits means all zeros.
  static GaussianState product_state(int n_modes, const std::vector<int>& bits = {});
  /// Adopts an annihilator matrix; rows must already be orthonormal.
  static GaussianState from_alpha(CMatrix alpha);
  static GaussianState tensor_product(const GaussianState& a, const GaussianState& b);

  int n_modes() const { return n_; }
  const CMatrix& alpha() const { return alpha_; }

  /// Majorana covariance, cached until the next mutation.
  const Matrix& covariance() const;
  bool covariance_cached() const { return gamma_.has_value(); }

  /// <Z_site> without materializing the full covariance.
  double expectation_z(int site) const;

  /// von Neumann (renyi_index 1) or second Renyi (2) entropy of a region,
  /// in nats.
  double entanglement_entropy(const Region& region, int renyi_index) const;

  /// alpha[:, cols] <- alpha[:, cols] * o. Orthogonal o keeps both invariants,
  /// no re-orthonormalization needed.
  void apply_orthogonal_columns(const std::array<int, 4>& cols, const Eigen::Matrix4d& o);

  /// Right-multiplies the (2*site, 2*site+1) column pair by b. Used by
  /// measurement updates; the caller must re-orthonormalize afterwards.
  void apply_matrix_columns(int site, const Eigen::Matrix2cd& b);

  /// Projects the state onto the Z_site = outcome eigenspace: the row with
  /// the largest overlap against the pinned mode f = (g_{2j} + i s g_{2j+1})/2
  /// becomes f, the overlap is eliminated from the other rows, and their
  /// leftover components on the measured column pair are dropped (those are
  /// the parts a weak measurement suppresses as exp(-2 beta)). The caller
  /// must re-orthonormalize afterwards. Throws DegeneracyError when no row
  /// overlaps the pinned mode, i.e. the branch has Born probability zero.
  void project_mode(int site, int outcome);

  /// Restores alpha alpha^dag = I/2. Throws DegeneracyError on rank loss.
  void reorthonormalize();

  /// Max deviation from the orthonormality invariant.
  double orthonormality_defect() const;

  const std::string& rng_tag() const { return rng_tag_; }
  void set_rng_tag(std::string tag) { rng_tag_ = std::move(tag); }

  nlohmann::json to_json() const;
  static GaussianState from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static GaussianState load(const std::string& path);

 private:
  int n_ = 0;
  CMatrix alpha_;
  mutable std::optional<Matrix> gamma_;
  std::string rng_tag_;
};

}  // namespace ffmagic
