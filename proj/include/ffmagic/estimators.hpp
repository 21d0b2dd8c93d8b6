#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "ffmagic/gaussian_state.hpp"
#include "ffmagic/rng.hpp"

namespace ffmagic {

/// Sampled estimate of a stabilizer Renyi entropy, in nats.
struct EstimateResult {
  double value = 0.0;
  double std_error = 0.0;           // delta-method propagation of the mean
  double std_error_jackknife = 0.0; // delete-block cross-check of std_error
  int n_samples = 0;
  double alpha = 0.0;
  std::string support;  // "full" or the sampled regions, e.g. "{0,1}+{4,5}"
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Signed stabilizer mutual information with its three ingredients.
struct SmiResult {
  double i_alpha = 0.0;
  double std_error = 0.0;  // components combined in quadrature
  EstimateResult part_a;
  EstimateResult part_b;   // complement of A, or region B in the disjoint form
  EstimateResult joint;
  double alpha = 0.0;
  int sign = +1;  // +1 applies for alpha <= 1, -1 for alpha >= 2

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Monte Carlo stabilizer Renyi entropy over the strings drawn from the
/// state's string distribution. Empty support means the full system; regions
/// restrict both the sampler and the normalization to the covariance minor.
/// alpha = 1 uses the log-average estimator; other alpha > 0 average the
/// power weights with a delta-method standard error.
EstimateResult estimate_sre(const GaussianState& state, double alpha, int n_samples, Rng& rng,
                            const std::vector<Region>& support = {});

/// I_alpha for the bipartition (A, complement of A): the combination
/// M(A) + M(A^c) - M(full), with sign + for alpha <= 1 and - for alpha >= 2.
/// alpha inside (1,2) has no defined sign convention and is rejected.
SmiResult estimate_smi(const GaussianState& state, const Region& region_a, double alpha,
                       int n_samples, Rng& rng);

/// Same combination for two disjoint regions, with the joint term sampled on
/// strings supported inside A union B only.
SmiResult estimate_fermionic_smi_disjoint(const GaussianState& state, const Region& region_a,
                                          const Region& region_b, double alpha, int n_samples,
                                          Rng& rng);

/// Conformal cross ratio of four distinct ring sites: (x12 x34)/(x13 x24)
/// with chord lengths x_ij = sin(pi |x_i - x_j| / L).
double cross_ratio(int x1, int x2, int x3, int x4, int n_sites);

}  // namespace ffmagic
