#include "ffmagic/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

namespace ffmagic {

namespace {

constexpr int kRefactorEvery = 64;
constexpr double kInf = std::numeric_limits<double>::infinity();

void remove_row_col(Matrix& m, int pos) {
  const int n = static_cast<int>(m.rows());
  Matrix out(n - 1, n - 1);
  out.topLeftCorner(pos, pos) = m.topLeftCorner(pos, pos);
  out.topRightCorner(pos, n - 1 - pos) = m.topRightCorner(pos, n - 1 - pos);
  out.bottomLeftCorner(n - 1 - pos, pos) = m.bottomLeftCorner(n - 1 - pos, pos);
  out.bottomRightCorner(n - 1 - pos, n - 1 - pos) = m.bottomRightCorner(n - 1 - pos, n - 1 - pos);
  m = std::move(out);
}

double log_norm_of(const Matrix& gamma) {
  const int n = static_cast<int>(gamma.rows());
  const SignedLogDet ld = signed_logdet(Matrix::Identity(n, n) + gamma);
  if (ld.sign <= 0) throw InputError("sampler: det(I + Gamma) is not positive");
  return ld.log_magnitude;
}

/// ln det(Gamma|_x) with the clamp policy: tiny negatives are roundoff on a
/// theoretical zero and give -inf; large negatives are numerical failure.
double log_minor_det(const SkewMatrix& gamma, const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  const SignedLogDet ld = signed_logdet(principal_minor(gamma, idx).mat());
  if (ld.sign > 0) return ld.log_magnitude;
  if (ld.sign < 0 && -std::exp(ld.log_magnitude) < -num_tol().det_negative)
    throw InstabilityError("string_probability: negative string determinant beyond tolerance");
  return -kInf;
}

}  // namespace

int MajoranaString::weight() const {
  return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<int> MajoranaString::support() const {
  std::vector<int> idx;
  for (int mu = 0; mu < size(); ++mu)
    if (bits[static_cast<std::size_t>(mu)]) idx.push_back(mu);
  return idx;
}

std::string MajoranaString::to_hex() const {
  static const char digits[] = "0123456789abcdef";
  const int n_bytes = (size() + 7) / 8;
  std::string out(static_cast<std::size_t>(2 * n_bytes), '0');
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n_bytes), 0);
  for (int mu = 0; mu < size(); ++mu)
    if (bits[static_cast<std::size_t>(mu)])
      bytes[static_cast<std::size_t>(mu / 8)] |= static_cast<std::uint8_t>(1u << (mu % 8));
  for (int b = 0; b < n_bytes; ++b) {
    out[static_cast<std::size_t>(2 * b)] = digits[bytes[static_cast<std::size_t>(b)] >> 4];
    out[static_cast<std::size_t>(2 * b + 1)] = digits[bytes[static_cast<std::size_t>(b)] & 15];
  }
  return out;
}

MajoranaString MajoranaString::from_hex(const std::string& hex, int n_bits) {
  if (n_bits < 0) throw InputError("MajoranaString: negative bit count");
  const int n_bytes = (n_bits + 7) / 8;
  if (static_cast<int>(hex.size()) != 2 * n_bytes)
    throw InputError("MajoranaString: hex length does not match the bit count");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw InputError("MajoranaString: invalid hex digit");
  };
  MajoranaString s;
  s.bits.assign(static_cast<std::size_t>(n_bits), 0);
  for (int b = 0; b < n_bytes; ++b) {
    const int byte = nibble(hex[static_cast<std::size_t>(2 * b)]) * 16 +
                     nibble(hex[static_cast<std::size_t>(2 * b + 1)]);
    for (int k = 0; k < 8; ++k) {
      const int mu = 8 * b + k;
      const bool set = (byte >> k) & 1;
      if (mu >= n_bits) {
        if (set) throw InputError("MajoranaString: hex sets bits beyond the string");
        continue;
      }
      s.bits[static_cast<std::size_t>(mu)] = set ? 1 : 0;
    }
  }
  return s;
}

double string_probability(const SkewMatrix& gamma, const MajoranaString& x) {
  const double lp = string_log_probability(gamma, x);
  return lp == -kInf ? 0.0 : std::exp(lp);
}

double string_log_probability(const SkewMatrix& gamma, const MajoranaString& x) {
  if (x.size() != gamma.dim())
    throw InputError("string_probability: string length does not match the covariance");
  if (x.weight() % 2 != 0) return -kInf;
  const double num = log_minor_det(gamma, x.support());
  return num - log_norm_of(gamma.mat());
}

SamplerWorkspace::SamplerWorkspace(const SkewMatrix& gamma)
    : gamma_(gamma.mat()), n_bits_(gamma.dim()) {
  log_norm_ = log_norm_of(gamma_);
  reset();
}

SamplerWorkspace::SamplerWorkspace(const SkewMatrix& gamma, const std::vector<int>& majoranas)
    : gamma_(principal_minor(gamma, majoranas).mat()),
      n_bits_(static_cast<int>(majoranas.size())) {
  log_norm_ = log_norm_of(gamma_);
  reset();
}

void SamplerWorkspace::reset() {
  cursor_ = 0;
  fixed_ones_ = 0;
  log_prob_ = 0.0;
  bits_.assign(static_cast<std::size_t>(n_bits_), 0);
  active_.resize(static_cast<std::size_t>(n_bits_));
  std::iota(active_.begin(), active_.end(), 0);
  refactor();
}

Matrix SamplerWorkspace::working_matrix() const {
  const int a = static_cast<int>(active_.size());
  Matrix b(a, a);
  for (int p = 0; p < a; ++p)
    for (int q = 0; q < a; ++q) b(p, q) = gamma_(active_[static_cast<std::size_t>(p)],
                                                 active_[static_cast<std::size_t>(q)]);
  for (int p = 0; p < a; ++p)
    if (active_[static_cast<std::size_t>(p)] > cursor_) b(p, p) += 1.0;
  return b;
}

void SamplerWorkspace::refactor() {
  commits_since_refactor_ = 0;
  const int a = static_cast<int>(active_.size());
  if (a == 0) {
    inv_.resize(0, 0);
    singular_ = false;
    return;
  }
  const Eigen::PartialPivLU<Matrix> lu(working_matrix());
  const Eigen::VectorXd diag = lu.matrixLU().diagonal().cwiseAbs();
  const double top = diag.maxCoeff();
  singular_ = (top == 0.0) || (diag.minCoeff() / top < num_tol().pivot_rel);
  if (!singular_) inv_ = lu.inverse();
}

double SamplerWorkspace::conditional_one() {
  if (done()) throw InputError("sampler: no bits left to draw");
  if (singular_) return 0.0;
  double r = inv_(fixed_ones_, fixed_ones_);
  if (r < -num_tol().probability_slack) {
    // A negative odds ratio usually means the incremental inverse went
    // stale; trust only a fresh factorization.
    refactor();
    if (singular_) return 0.0;
    r = inv_(fixed_ones_, fixed_ones_);
  }
  // |r| ~ 1/eps is the other face of a singular working matrix: the odds
  // ratio sits on the pole and the branch weight is zero at working
  // precision, the same outcome the LU rank test reports on cleaner cases.
  if (std::abs(1.0 / (1.0 + r)) <= num_tol().probability_slack) {
    singular_ = true;
    return 0.0;
  }
  if (r < -num_tol().probability_slack) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "sampler: conditional ratio %.3e < 0 at bit %d of %d", r, cursor_, n_bits_);
    throw InstabilityError(msg);
  }
  r = std::max(r, 0.0);
  return 1.0 / (1.0 + r);
}

void SamplerWorkspace::drop_diag_one(int pos) {
  if (singular_) {
    refactor();
    return;
  }
  // Small pivots amplify the inverse's roundoff by 1/|d|; rebuild instead.
  const double d = 1.0 - inv_(pos, pos);
  if (std::abs(d) < num_tol().sampler_pivot) {
    refactor();
    return;
  }
  const Eigen::VectorXd col = inv_.col(pos);
  const Eigen::RowVectorXd row = inv_.row(pos);
  inv_ += col * row / d;
}

void SamplerWorkspace::delete_active(int pos) {
  const double pivot = inv_(pos, pos);
  const Eigen::VectorXd col = inv_.col(pos);
  const Eigen::RowVectorXd row = inv_.row(pos);
  inv_ -= col * row / pivot;
  remove_row_col(inv_, pos);
  active_.erase(active_.begin() + pos);
}

void SamplerWorkspace::commit(int bit) {
  if (bit != 0 && bit != 1) throw InputError("sampler: bit must be 0 or 1");
  double p1 = conditional_one();
  double p = bit ? p1 : 1.0 - p1;
  if (p < num_tol().sampler_branch) {
    // A vanishing branch is usually a stale inverse; trust only a fresh one.
    refactor();
    p1 = conditional_one();
    p = bit ? p1 : 1.0 - p1;
    if (p <= 0.0) throw InstabilityError("sampler: committed branch has zero probability");
  }
  log_prob_ += std::log(p);
  bits_[static_cast<std::size_t>(cursor_)] = static_cast<std::uint8_t>(bit);

  if (bit == 1) {
    ++fixed_ones_;
    ++cursor_;
    if (!done()) drop_diag_one(fixed_ones_);
  } else {
    const int pos = fixed_ones_;
    if (singular_ || std::abs(inv_(pos, pos)) < num_tol().sampler_pivot) {
      active_.erase(active_.begin() + pos);
      ++cursor_;
      refactor();
    } else {
      delete_active(pos);
      ++cursor_;
      if (!done()) drop_diag_one(pos);
    }
  }
  if (++commits_since_refactor_ >= kRefactorEvery && !done()) refactor();
}

void SamplerWorkspace::verify_drift() const {
  if (!done()) throw InputError("sampler: drift check before the string is complete");
  int weight = 0;
  std::vector<int> idx;
  for (int mu = 0; mu < n_bits_; ++mu)
    if (bits_[static_cast<std::size_t>(mu)]) {
      ++weight;
      idx.push_back(mu);
    }
  if (weight % 2 != 0) throw InstabilityError("sampler: produced an odd-weight string");
  const double fresh = log_minor_det(SkewMatrix(gamma_), idx) - log_norm_;
  if (!(std::abs(fresh - log_prob_) <= num_tol().sampler_drift)) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "sampler: chain-rule log-prob %.12g drifted from determinant %.12g",
                  log_prob_, fresh);
    throw InstabilityError(msg);
  }
}

namespace {

StringSample run_sampler(SamplerWorkspace& ws, Rng& rng) {
  while (!ws.done()) {
    const double p1 = ws.conditional_one();
    ws.commit(rng.uniform01() < p1 ? 1 : 0);
  }
  ws.verify_drift();
  StringSample s;
  s.string.bits = ws.bits();
  s.log_prob = ws.log_prob();
  return s;
}

std::vector<int> support_majoranas(const SkewMatrix& gamma, const std::vector<Region>& support) {
  const int n_modes = gamma.dim() / 2;
  std::vector<int> idx;
  for (const Region& r : support) {
    r.validate(n_modes);
    const std::vector<int> m = r.majoranas();
    idx.insert(idx.end(), m.begin(), m.end());
  }
  std::sort(idx.begin(), idx.end());
  if (std::adjacent_find(idx.begin(), idx.end()) != idx.end())
    throw InputError("sampler: support regions overlap");
  return idx;
}

}  // namespace

StringSample sample_string(const SkewMatrix& gamma, Rng& rng) {
  SamplerWorkspace ws(gamma);
  return run_sampler(ws, rng);
}

StringSample sample_string_restricted(const SkewMatrix& gamma, const std::vector<Region>& support,
                                      Rng& rng) {
  const std::vector<int> idx = support_majoranas(gamma, support);
  SamplerWorkspace ws(gamma, idx);
  StringSample local = run_sampler(ws, rng);
  StringSample out;
  out.log_prob = local.log_prob;
  out.string.bits.assign(static_cast<std::size_t>(gamma.dim()), 0);
  for (std::size_t k = 0; k < idx.size(); ++k)
    out.string.bits[static_cast<std::size_t>(idx[k])] = local.string.bits[k];
  return out;
}

SampleBatch sample_batch(const SkewMatrix& gamma, int n_samples, Rng& rng,
                         const std::vector<Region>& support) {
  if (n_samples < 0) throw InputError("sample_batch: negative sample count");
  SampleBatch batch;
  batch.support = support;
  batch.n_samples = n_samples;
  batch.strings.reserve(static_cast<std::size_t>(n_samples));
  batch.log_probs.reserve(static_cast<std::size_t>(n_samples));

  const bool restricted = !support.empty();
  const std::vector<int> idx = restricted ? support_majoranas(gamma, support) : std::vector<int>{};
  SamplerWorkspace ws = restricted ? SamplerWorkspace(gamma, idx) : SamplerWorkspace(gamma);
  for (int i = 0; i < n_samples; ++i) {
    if (i > 0) ws.reset();
    StringSample local = run_sampler(ws, rng);
    if (restricted) {
      MajoranaString global;
      global.bits.assign(static_cast<std::size_t>(gamma.dim()), 0);
      for (std::size_t k = 0; k < idx.size(); ++k)
        global.bits[static_cast<std::size_t>(idx[k])] = local.string.bits[k];
      local.string = std::move(global);
    }
    batch.strings.push_back(std::move(local.string));
    batch.log_probs.push_back(local.log_prob);
  }
  return batch;
}

void write_samples_jsonl(std::ostream& out, const SampleBatch& batch) {
  for (std::size_t i = 0; i < batch.strings.size(); ++i) {
    nlohmann::json j;
    j["bits"] = batch.strings[i].to_hex();
    j["log_prob"] = batch.log_probs[i];
    out << j.dump() << '\n';
  }
}

SampleBatch read_samples_jsonl(std::istream& in, int n_bits) {
  SampleBatch batch;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    batch.strings.push_back(MajoranaString::from_hex(j.at("bits").get<std::string>(), n_bits));
    batch.log_probs.push_back(j.at("log_prob").get<double>());
  }
  batch.n_samples = static_cast<int>(batch.strings.size());
  return batch;
}

}  // namespace ffmagic
