#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ffmagic/gaussian_state.hpp"
#include "ffmagic/linalg.hpp"
#include "ffmagic/rng.hpp"

namespace ffmagic {

/// Majorana string g_x = g_0^{x_0} g_1^{x_1} ... g_{2N-1}^{x_{2N-1}}, one byte
/// per bit in Majorana index order. Strings of odd weight carry probability
/// zero under any quadratic state.
struct MajoranaString {
  std::vector<std::uint8_t> bits;

  int size() const { return static_cast<int>(bits.size()); }
  int weight() const;
  bool bit(int mu) const { return bits[static_cast<std::size_t>(mu)] != 0; }
  /// Indices with the bit set, ascending.
  std::vector<int> support() const;

  /// Hex dump for the sample log: bit mu sits in byte mu/8 at position mu%8,
  /// bytes emitted first to last, two lowercase digits each.
  std::string to_hex() const;
  static MajoranaString from_hex(const std::string& hex, int n_bits);
};

/// pi(x) = det(Gamma|_x) / det(I + Gamma), the Born weight of the string under
/// the state with covariance Gamma. Odd-weight strings give exactly 0. A
/// slightly negative minor determinant (roundoff on a theoretical zero) is
/// clamped to 0; one beyond -1e-10 is an InstabilityError.
double string_probability(const SkewMatrix& gamma, const MajoranaString& x);

/// ln pi(x); -infinity where the probability clamps to zero. Log scale keeps
/// ratios of large determinants exact far beyond double range.
double string_log_probability(const SkewMatrix& gamma, const MajoranaString& x);

/// Autoregressive sampler state over one covariance matrix. Bits are drawn in
/// Majorana index order; the conditional for the next bit is an entry of the
/// inverse of the working matrix
///   B = (Gamma + I on the not-yet-reached diagonal)[committed ones + rest],
/// maintained by rank-one updates (O(n^2) per bit, O(n^3) per sample). The
/// inverse is refactorized from scratch every 64 commits and whenever an
/// update pivot collapses. Not shareable across threads; many workspaces over
/// the same Gamma may run concurrently.
class SamplerWorkspace {
 public:
  /// Full-system sampler over all dim(gamma) bits.
  explicit SamplerWorkspace(const SkewMatrix& gamma);
  /// Restricted sampler: the principal minor on `majoranas` (ascending,
  /// in-range, unique) replaces gamma; bits map to that index list.
  SamplerWorkspace(const SkewMatrix& gamma, const std::vector<int>& majoranas);

  int n_bits() const { return n_bits_; }
  int cursor() const { return cursor_; }
  bool done() const { return cursor_ >= n_bits_; }
  double log_prob() const { return log_prob_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  /// P(x_cursor = 1 | committed prefix), the incremental marginal ratio.
  double conditional_one();
  /// Fixes the cursor bit and advances. Accumulates ln of the chosen branch;
  /// a branch whose conditional stays at zero after refactorization throws
  /// InstabilityError.
  void commit(int bit);
  /// Back to the empty prefix for the next sample over the same matrix.
  void reset();

  /// Chain-rule total against one fresh determinant of the finished string;
  /// drift beyond the sampler_drift tolerance throws InstabilityError.
  void verify_drift() const;

 private:
  void refactor();
  void drop_diag_one(int pos);
  void delete_active(int pos);
  Matrix working_matrix() const;

  Matrix gamma_;
  int n_bits_ = 0;
  double log_norm_ = 0.0;  // ln det(I + Gamma)
  int cursor_ = 0;
  int fixed_ones_ = 0;  // committed 1-bits; also the cursor's active position
  std::vector<int> active_;
  Matrix inv_;
  bool singular_ = false;
  int commits_since_refactor_ = 0;
  double log_prob_ = 0.0;
  std::vector<std::uint8_t> bits_;
};

struct StringSample {
  MajoranaString string;
  double log_prob = 0.0;
};

/// One exact draw from pi. Consumes one uniform per bit.
StringSample sample_string(const SkewMatrix& gamma, Rng& rng);

/// Exact draw restricted to strings supported on the given disjoint regions;
/// equivalent to the full sampler on the principal minor of Gamma. Bits of
/// the returned string live at their global Majorana positions.
StringSample sample_string_restricted(const SkewMatrix& gamma, const std::vector<Region>& support,
                                      Rng& rng);

struct SampleBatch {
  std::vector<MajoranaString> strings;
  std::vector<double> log_probs;
  std::vector<Region> support;  // empty means the full system
  int n_samples = 0;
};

/// n independent draws through one reused workspace.
SampleBatch sample_batch(const SkewMatrix& gamma, int n_samples, Rng& rng,
                         const std::vector<Region>& support = {});

/// One JSON object per line: {"bits": hex, "log_prob": float}.
void write_samples_jsonl(std::ostream& out, const SampleBatch& batch);
/// Reads lines written by write_samples_jsonl; n_bits resolves the hex width.
SampleBatch read_samples_jsonl(std::istream& in, int n_bits);

}  // namespace ffmagic
