#include "ffmagic/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ffmagic/errors.hpp"
#include "ffmagic/sampler.hpp"

namespace ffmagic {

namespace {

std::string support_label(const std::vector<Region>& support) {
  if (support.empty()) return "full";
  std::ostringstream out;
  for (std::size_t r = 0; r < support.size(); ++r) {
    if (r) out << '+';
    out << '{';
    for (std::size_t i = 0; i < support[r].sites.size(); ++i) {
      if (i) out << ',';
      out << support[r].sites[i];
    }
    out << '}';
  }
  return out.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Delete-block jackknife standard error of theta(values); block_value maps a
/// leave-block-out sum/count pair to the estimate.
template <class Theta>
double jackknife_err(const std::vector<double>& values, Theta&& theta) {
  const int n = static_cast<int>(values.size());
  const int n_blocks = std::min(20, n);
  double total = 0.0;
  for (double x : values) total += x;

  std::vector<double> estimates;
  estimates.reserve(static_cast<std::size_t>(n_blocks));
  int start = 0;
  for (int b = 0; b < n_blocks; ++b) {
    const int stop = static_cast<int>(static_cast<long long>(n) * (b + 1) / n_blocks);
    double block = 0.0;
    for (int i = start; i < stop; ++i) block += values[static_cast<std::size_t>(i)];
    const int kept = n - (stop - start);
    if (kept > 0) estimates.push_back(theta((total - block) / kept));
    start = stop;
  }
  if (estimates.size() < 2) return 0.0;
  const double m = mean_of(estimates);
  double ss = 0.0;
  for (double e : estimates) ss += (e - m) * (e - m);
  const double nb = static_cast<double>(estimates.size());
  return std::sqrt((nb - 1.0) / nb * ss);
}

/// Reduces ln T samples to the Renyi estimate. For alpha != 1 the power
/// weights are shifted by their max before exponentiation, so the reduction
/// never overflows regardless of the tail.
void reduce_sre(const std::vector<double>& log_t, double alpha, EstimateResult& out) {
  const int n = static_cast<int>(log_t.size());
  const double dn = static_cast<double>(n);
  for (double lt : log_t)
    if (!std::isfinite(lt))
      throw InstabilityError("estimate_sre: sampled string has non-finite log weight");

  if (alpha == 1.0) {
    const double m = mean_of(log_t);
    out.value = -m;
    double ss = 0.0;
    for (double lt : log_t) ss += (lt - m) * (lt - m);
    out.std_error = n > 1 ? std::sqrt(ss / (dn - 1.0) / dn) : 0.0;
    out.std_error_jackknife = jackknife_err(log_t, [](double mean_lt) { return -mean_lt; });
    return;
  }

  const double power = alpha - 1.0;
  std::vector<double> w(log_t.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_t.size(); ++i) shift = std::max(shift, power * log_t[i]);
  for (std::size_t i = 0; i < log_t.size(); ++i) w[i] = std::exp(power * log_t[i] - shift);

  const double mw = mean_of(w);
  out.value = (shift + std::log(mw)) / (1.0 - alpha);
  double ss = 0.0;
  for (double x : w) ss += (x - mw) * (x - mw);
  const double se_mean = n > 1 ? std::sqrt(ss / (dn - 1.0) / dn) : 0.0;
  out.std_error = se_mean / (mw * std::abs(1.0 - alpha));
  out.std_error_jackknife = jackknife_err(w, [&](double mean_w) {
    return (shift + std::log(mean_w)) / (1.0 - alpha);
  });
}

void validate_regions(const GaussianState& state, const std::vector<Region>& support) {
  for (const Region& r : support) r.validate(state.n_modes());
}

}  // namespace

EstimateResult estimate_sre(const GaussianState& state, double alpha, int n_samples, Rng& rng,
                            const std::vector<Region>& support) {
  if (!(alpha > 0.0)) throw InputError("estimate_sre: alpha must be positive");
  if (n_samples < 1) throw InputError("estimate_sre: need at least one sample");
  validate_regions(state, support);

  const SkewMatrix gamma(state.covariance());
  const SampleBatch batch = sample_batch(gamma, n_samples, rng, support);

  // ln T = ln pi + ln(sum of T over the support family). The full pure-state
  // family sums to 2^N exactly; a covariance minor is a mixed state, so its
  // normalization det(I + Gamma_supp) is evaluated.
  double log_norm;
  if (support.empty()) {
    log_norm = state.n_modes() * std::numbers::ln2;
  } else {
    std::vector<int> idx;
    for (const Region& r : support) {
      const std::vector<int> m = r.majoranas();
      idx.insert(idx.end(), m.begin(), m.end());
    }
    std::sort(idx.begin(), idx.end());
    const Matrix minor = principal_minor(gamma, idx).mat();
    const SignedLogDet ld =
        signed_logdet(Matrix::Identity(minor.rows(), minor.cols()) + minor);
    if (ld.sign <= 0) throw InstabilityError("estimate_sre: support normalization not positive");
    log_norm = ld.log_magnitude;
  }

  std::vector<double> log_t(batch.log_probs.size());
  for (std::size_t i = 0; i < log_t.size(); ++i) log_t[i] = batch.log_probs[i] + log_norm;

  EstimateResult out;
  out.n_samples = n_samples;
  out.alpha = alpha;
  out.support = support_label(support);
  out.seed = rng.seed();
  reduce_sre(log_t, alpha, out);
  return out;
}

namespace {

SmiResult combine_smi(EstimateResult a, EstimateResult b, EstimateResult joint, double alpha) {
  SmiResult out;
  out.alpha = alpha;
  out.sign = alpha <= 1.0 ? +1 : -1;
  out.i_alpha = out.sign * (a.value + b.value - joint.value);
  out.std_error = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error +
                            joint.std_error * joint.std_error);
  out.part_a = std::move(a);
  out.part_b = std::move(b);
  out.joint = std::move(joint);
  return out;
}

void check_smi_alpha(double alpha) {
  if (!(alpha > 0.0)) throw InputError("estimate_smi: alpha must be positive");
  if (alpha > 1.0 && alpha < 2.0)
    throw InputError("estimate_smi: no sign convention for alpha in (1,2)");
}

}  // namespace

SmiResult estimate_smi(const GaussianState& state, const Region& region_a, double alpha,
                       int n_samples, Rng& rng) {
  check_smi_alpha(alpha);
  region_a.validate(state.n_modes());
  if (region_a.size() == 0 || region_a.size() == state.n_modes())
    throw InputError("estimate_smi: region must be a nonempty proper subset");

  const Region comp = Region::complement(region_a, state.n_modes());
  Rng ra = rng.child(1);
  Rng rb = rng.child(2);
  Rng rj = rng.child(3);
  EstimateResult a = estimate_sre(state, alpha, n_samples, ra, {region_a});
  EstimateResult b = estimate_sre(state, alpha, n_samples, rb, {comp});
  EstimateResult joint = estimate_sre(state, alpha, n_samples, rj, {});
  return combine_smi(std::move(a), std::move(b), std::move(joint), alpha);
}

SmiResult estimate_fermionic_smi_disjoint(const GaussianState& state, const Region& region_a,
                                          const Region& region_b, double alpha, int n_samples,
                                          Rng& rng) {
  check_smi_alpha(alpha);
  region_a.validate(state.n_modes());
  region_b.validate(state.n_modes());
  if (region_a.size() == 0 || region_b.size() == 0)
    throw InputError("estimate_smi: regions must be nonempty");
  for (int s : region_a.sites)
    if (region_b.contains(s)) throw InputError("estimate_smi: regions overlap");

  Rng ra = rng.child(1);
  Rng rb = rng.child(2);
  Rng rj = rng.child(3);
  EstimateResult a = estimate_sre(state, alpha, n_samples, ra, {region_a});
  EstimateResult b = estimate_sre(state, alpha, n_samples, rb, {region_b});
  EstimateResult joint = estimate_sre(state, alpha, n_samples, rj, {region_a, region_b});
  return combine_smi(std::move(a), std::move(b), std::move(joint), alpha);
}

double cross_ratio(int x1, int x2, int x3, int x4, int n_sites) {
  if (n_sites < 4) throw InputError("cross_ratio: need at least four sites");
  const int xs[4] = {x1, x2, x3, x4};
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      if ((xs[i] - xs[j]) % n_sites == 0) throw InputError("cross_ratio: coincident points");
  auto chord = [n_sites](int a, int b) {
    const int d = std::abs(a - b) % n_sites;
    return std::sin(std::numbers::pi * d / n_sites);
  };
  return (chord(x1, x2) * chord(x3, x4)) / (chord(x1, x3) * chord(x2, x4));
}

nlohmann::json EstimateResult::to_json() const {
  return nlohmann::json{{"value", value},
                        {"std_error", std_error},
                        {"std_error_jackknife", std_error_jackknife},
                        {"n_samples", n_samples},
                        {"alpha", alpha},
                        {"support", support},
                        {"seed", seed}};
}

std::string EstimateResult::csv_header() {
  return "value,std_error,std_error_jackknife,n_samples,alpha,support,seed";
}

std::string EstimateResult::csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << value << ',' << std_error << ',' << std_error_jackknife << ',' << n_samples << ','
      << alpha << ',' << support << ',' << seed;
  return out.str();
}

nlohmann::json SmiResult::to_json() const {
  return nlohmann::json{{"i_alpha", i_alpha}, {"std_error", std_error},
                        {"alpha", alpha},     {"sign", sign},
                        {"part_a", part_a.to_json()},
                        {"part_b", part_b.to_json()},
                        {"joint", joint.to_json()}};
}

std::string SmiResult::csv_header() {
  return "i_alpha,std_error,alpha,sign,m_a,m_b,m_joint,n_samples,seed";
}

std::string SmiResult::csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << i_alpha << ',' << std_error << ',' << alpha << ',' << sign << ',' << part_a.value << ','
      << part_b.value << ',' << joint.value << ',' << part_a.n_samples << ',' << part_a.seed;
  return out.str();
}

}  // namespace ffmagic
