#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>
#include "ffmagic/circuit.hpp"
#include "ffmagic/errors.hpp"
#include "ffmagic/estimators.hpp"
#include "ffmagic/exact.hpp"
#include "ffmagic/sampler.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace ffmagic;

namespace {

// Gaussian state and dense oracle state driven by the same gate stream.
std::pair<GaussianState, exact::DenseState> paired_scrambled(int n, std::uint64_t seed,
                                                             int gates) {
  GaussianState gs = GaussianState::product_state(n);
  exact::DenseState ds = exact::DenseState::computational(n);
  Rng rng(seed);
  for (int k = 0; k < gates; ++k) {
    const GateParams g = sample_gate(static_cast<int>(rng.uniform(0.0, double(n))), rng);
    apply_unitary(gs, g);
    exact::apply_gate(ds, g);
  }
  return {std::move(gs), std::move(ds)};
}

GaussianState scrambled_state(int n, std::uint64_t seed, int gates = 10) {
  Rng rng(seed);
  GaussianState st = GaussianState::product_state(n);
  for (int k = 0; k < gates; ++k)
    apply_unitary(st, sample_gate(static_cast<int>(rng.uniform(0.0, double(n))), rng));
  return st;
}

// Brute-force squared expectation of every Majorana string supported on
// `gamma` (pass a principal minor for a subsystem). Feeding the list to the
// dense-oracle reduction gives the exact value the sampled estimate chases.
std::vector<double> enumerate_sq(const Eigen::MatrixXd& gamma) {
  const int dim = static_cast<int>(gamma.rows());
  REQUIRE(dim <= 16);
  const SkewMatrix skew(gamma);
  Eigen::MatrixXd shifted = gamma;
  shifted.diagonal().array() += 1.0;
  const double log_norm = signed_logdet(shifted).log_magnitude;
  std::vector<double> sq;
  sq.reserve(std::size_t(1) << dim);
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << dim); ++mask) {
    MajoranaString x;
    x.bits.assign(static_cast<std::size_t>(dim), 0);
    for (int mu = 0; mu < dim; ++mu) x.bits[static_cast<std::size_t>(mu)] = (mask >> mu) & 1u;
    sq.push_back(string_probability(skew, x) * std::exp(log_norm));
  }
  return sq;
}

double enumerated_sre(const Eigen::MatrixXd& gamma, double alpha) {
  return exact::sre_from_sq_spectrum(enumerate_sq(gamma), alpha);
}

Eigen::MatrixXd region_minor(const GaussianState& state, const Region& region) {
  const std::vector<int> idx = region.majoranas();
  return principal_minor(SkewMatrix(state.covariance()), idx).mat();
}

// Rotation by pi/2 in a single Majorana plane: maps Majoranas to signed
// Majoranas, so it is a Clifford operation and cannot create magic.
GateParams quarter_turn_gate(int bond, int pair_index) {
  GateParams g;
  g.bond = bond;
  g.kappa = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  g.kappa[static_cast<std::size_t>(pair_index)] = std::numbers::pi / 8.0;
  return g;
}

}  // namespace

TEST_CASE("sampled magic matches the dense oracle on a scrambled state") {
  auto [gs, ds] = paired_scrambled(4, 611, 10);
  REQUIRE((gs.covariance() - exact::covariance(ds)).cwiseAbs().maxCoeff() < 1e-9);
  const std::vector<double> sq = exact::majorana_sq_spectrum(ds);

  for (const double alpha : {0.5, 1.0, 2.0}) {
    CAPTURE(alpha);
    const double target = exact::sre_from_sq_spectrum(sq, alpha);
    // Same spectrum through the enumeration path: pins the T(x) normalization.
    CHECK(enumerated_sre(gs.covariance(), alpha) == doctest::Approx(target).epsilon(1e-9));

    Rng rng(900 + static_cast<std::uint64_t>(10 * alpha));
    const EstimateResult est = estimate_sre(gs, alpha, 40000, rng);
    REQUIRE(est.std_error > 0.0);
    CHECK(std::abs(est.value - target) < 3.5 * est.std_error);
    CHECK(est.n_samples == 40000);
    CHECK(est.alpha == alpha);
    CHECK(est.support == "full");
    const double ratio = est.std_error_jackknife / est.std_error;
    CHECK(ratio > 1.0 / 3.0);
    CHECK(ratio < 3.0);
  }
}

TEST_CASE("stabilizer states report zero magic with zero spread") {
  GaussianState st = GaussianState::product_state(4, {0, 1, 1, 0});
  apply_unitary(st, quarter_turn_gate(0, 1));
  apply_unitary(st, quarter_turn_gate(2, 4));
  apply_unitary(st, quarter_turn_gate(1, 2));
  CHECK(std::abs(enumerated_sre(st.covariance(), 2.0)) < 1e-10);

  for (const double alpha : {1.0, 2.0}) {
    CAPTURE(alpha);
    Rng rng(640 + static_cast<std::uint64_t>(alpha));
    const EstimateResult est = estimate_sre(st, alpha, 5000, rng);
    // Every sampled string has squared expectation exactly one, so the
    // estimate is identically zero, not just zero on average.
    CHECK(std::abs(est.value) < 1e-12);
    CHECK(est.std_error < 1e-12);
  }
}

TEST_CASE("magic is additive over independent blocks") {
  Rng mk(4117);
  const GaussianState a = GaussianState::from_alpha(fftest::random_gaussian_alpha(3, mk));
  const GaussianState b = GaussianState::from_alpha(fftest::random_gaussian_alpha(3, mk));
  const GaussianState joint = GaussianState::tensor_product(a, b);

  const double exact_a = enumerated_sre(a.covariance(), 2.0);
  const double exact_b = enumerated_sre(b.covariance(), 2.0);
  const double exact_joint = enumerated_sre(joint.covariance(), 2.0);
  CHECK(exact_joint == doctest::Approx(exact_a + exact_b).epsilon(1e-9));

  Rng r1(71), r2(72), r3(73);
  const EstimateResult ea = estimate_sre(a, 2.0, 20000, r1);
  const EstimateResult eb = estimate_sre(b, 2.0, 20000, r2);
  const EstimateResult ej = estimate_sre(joint, 2.0, 20000, r3);
  const double spread = std::sqrt(ea.std_error * ea.std_error + eb.std_error * eb.std_error +
                                  ej.std_error * ej.std_error);
  CHECK(std::abs(ej.value - ea.value - eb.value) < 3.5 * spread);
}

TEST_CASE("quarter-turn gates leave the magic unchanged") {
  GaussianState st = scrambled_state(4, 5150);
  const double before = enumerated_sre(st.covariance(), 2.0);
  apply_unitary(st, quarter_turn_gate(1, 2));
  const double after = enumerated_sre(st.covariance(), 2.0);
  CHECK(after == doctest::Approx(before).epsilon(1e-9));

  Rng rng(314);
  const EstimateResult est = estimate_sre(st, 2.0, 20000, rng);
  CHECK(std::abs(est.value - before) < 3.5 * est.std_error);
}

TEST_CASE("smi vanishes on product states and matches enumeration") {
  SUBCASE("uncorrelated bipartition") {
    const GaussianState st = GaussianState::product_state(6, {0, 1, 0, 1, 0, 0});
    Rng rng(99);
    const SmiResult r = estimate_smi(st, Region::interval(0, 3, 6), 1.0, 2000, rng);
    CHECK(std::abs(r.i_alpha) < 1e-12);
    CHECK(r.std_error < 1e-12);
  }

  SUBCASE("scrambled state, alpha 1 and 2") {
    const GaussianState st = scrambled_state(6, 2024, 12);
    const Region region_a = Region::interval(0, 3, 6);
    const Region region_b = Region::complement(region_a, 6);

    for (const double alpha : {1.0, 2.0}) {
      CAPTURE(alpha);
      const double m_a = enumerated_sre(region_minor(st, region_a), alpha);
      const double m_b = enumerated_sre(region_minor(st, region_b), alpha);
      const double m_joint = enumerated_sre(st.covariance(), alpha);
      const double sign = alpha >= 2.0 ? -1.0 : 1.0;
      const double target = sign * (m_a + m_b - m_joint);

      Rng rng(7000 + static_cast<std::uint64_t>(alpha));
      const SmiResult r = estimate_smi(st, region_a, alpha, 40000, rng);
      REQUIRE(r.std_error > 0.0);
      CHECK(r.sign == (alpha >= 2.0 ? -1 : 1));
      CHECK(std::abs(r.i_alpha - target) < 3.5 * r.std_error);
      CHECK(std::abs(r.part_a.value - m_a) < 3.5 * r.part_a.std_error);
      CHECK(std::abs(r.part_b.value - m_b) < 3.5 * r.part_b.std_error);
      CHECK(std::abs(r.joint.value - m_joint) < 3.5 * r.joint.std_error);
    }
  }

  SUBCASE("rejects the sign-free window and degenerate regions") {
    const GaussianState st = scrambled_state(4, 8);
    Rng rng(1);
    CHECK_THROWS_AS((void)estimate_smi(st, Region::interval(0, 2, 4), 1.5, 100, rng),
                    InputError);
    CHECK_THROWS_AS((void)estimate_smi(st, Region(std::vector<int>{}), 1.0, 100, rng),
                    InputError);
    CHECK_THROWS_AS((void)estimate_smi(st, Region::interval(0, 4, 4), 1.0, 100, rng),
                    InputError);
  }
}

TEST_CASE("disjoint-region smi covers the bipartition case and decays with distance") {
  SUBCASE("complementary regions reduce to the bipartition estimate") {
    const GaussianState st = scrambled_state(6, 371, 12);
    const Region region_a = Region::interval(0, 3, 6);
    const Region region_b = Region::interval(3, 3, 6);
    Rng r1(5005), r2(5005);
    const SmiResult via_smi = estimate_smi(st, region_a, 2.0, 4000, r1);
    const SmiResult via_disjoint =
        estimate_fermionic_smi_disjoint(st, region_a, region_b, 2.0, 4000, r2);
    // Same seed, same substreams; only the joint normalization differs
    // (closed-form pure-state value vs the restricted determinant).
    CHECK(std::abs(via_smi.part_a.value - via_disjoint.part_a.value) < 1e-12);
    CHECK(std::abs(via_smi.part_b.value - via_disjoint.part_b.value) < 1e-12);
    CHECK(std::abs(via_smi.i_alpha - via_disjoint.i_alpha) < 1e-8);
  }

  SUBCASE("enumerated reference and distance decay") {
    // One brickwork step on the vacuum: the causal cones of sites {0,1} and
    // {4,5} touch disjoint site sets, so their mutual information is exactly
    // zero while adjacent regions are generically correlated.
    CircuitSpec spec;
    spec.n_sites = 8;
    spec.depth = 1;
    spec.protocol = Protocol::unitary();
    spec.seed = 424242;
    GaussianState st = GaussianState::product_state(8);
    run_circuit(spec, st);

    const Region region_a = Region::interval(0, 2, 8);
    const Region near_b = Region::interval(2, 2, 8);
    const Region far_b = Region::interval(4, 2, 8);

    const auto enumerated_i2 = [&](const Region& rb) {
      std::vector<int> joint_sites = region_a.sites;
      joint_sites.insert(joint_sites.end(), rb.sites.begin(), rb.sites.end());
      std::sort(joint_sites.begin(), joint_sites.end());
      const Region joint(joint_sites);
      const double m_a = enumerated_sre(region_minor(st, region_a), 2.0);
      const double m_b = enumerated_sre(region_minor(st, rb), 2.0);
      const double m_joint = enumerated_sre(region_minor(st, joint), 2.0);
      return -(m_a + m_b - m_joint);
    };

    const double i_near = enumerated_i2(near_b);
    const double i_far = enumerated_i2(far_b);
    CHECK(i_near > 1e-3);
    CHECK(std::abs(i_far) < 1e-9);

    Rng rng(606);
    const SmiResult r = estimate_fermionic_smi_disjoint(st, region_a, near_b, 2.0, 40000, rng);
    REQUIRE(r.std_error > 0.0);
    CHECK(std::abs(r.i_alpha - i_near) < 3.5 * r.std_error);
  }

  SUBCASE("rejects overlapping or empty regions") {
    const GaussianState st = scrambled_state(6, 9);
    Rng rng(2);
    CHECK_THROWS_AS((void)estimate_fermionic_smi_disjoint(st, Region::interval(0, 3, 6),
                                                          Region::interval(2, 2, 6), 2.0, 100,
                                                          rng),
                    InputError);
    CHECK_THROWS_AS((void)estimate_fermionic_smi_disjoint(st, Region(std::vector<int>{}),
                                                          Region::interval(2, 2, 6), 2.0, 100,
                                                          rng),
                    InputError);
  }
}

TEST_CASE("cross ratio follows the chord geometry") {
  CHECK(cross_ratio(0, 2, 4, 6, 8) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(cross_ratio(0, 4, 8, 12, 16) == doctest::Approx(0.5).epsilon(1e-14));

  // Translation invariance, including shifts that wrap around the ring.
  const double base = cross_ratio(0, 1, 8, 12, 16);
  for (const int shift : {3, 9, 15}) {
    CHECK(cross_ratio(0 + shift, 1 + shift, 8 + shift, 12 + shift, 16) ==
          doctest::Approx(base).epsilon(1e-12));
  }

  // Shrinks as the first pair of points merges.
  CHECK(cross_ratio(0, 1, 8, 12, 16) < cross_ratio(0, 2, 8, 12, 16));
  CHECK(cross_ratio(0, 1, 32, 48, 64) < 0.05);

  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<int> xs;
    while (xs.size() < 4) {
      const int x = static_cast<int>(rng.uniform(0.0, 24.0));
      if (std::find(xs.begin(), xs.end(), x) == xs.end()) xs.push_back(x);
    }
    std::sort(xs.begin(), xs.end());
    const double eta = cross_ratio(xs[0], xs[1], xs[2], xs[3], 24);
    CHECK(eta > 0.0);
    CHECK(eta < 1.0);
  }

  CHECK_THROWS_AS((void)cross_ratio(0, 0, 4, 6, 8), InputError);
  CHECK_THROWS_AS((void)cross_ratio(0, 8, 4, 6, 8), InputError);  // coincident mod L
  CHECK_THROWS_AS((void)cross_ratio(0, 1, 2, 3, 3), InputError);
}

TEST_CASE("error bars shrink as the square root of the sample count") {
  const GaussianState st = scrambled_state(4, 31415);
  std::vector<double> log_n, log_se;
  for (const int n : {1000, 8000, 64000}) {
    Rng rng(1234);
    const EstimateResult est = estimate_sre(st, 2.0, n, rng);
    log_n.push_back(std::log(double(n)));
    log_se.push_back(std::log(est.std_error));
  }
  CHECK(log_se[0] > log_se[1]);
  CHECK(log_se[1] > log_se[2]);
  const double xbar = (log_n[0] + log_n[1] + log_n[2]) / 3.0;
  const double ybar = (log_se[0] + log_se[1] + log_se[2]) / 3.0;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 3; ++i) {
    num += (log_n[i] - xbar) * (log_se[i] - ybar);
    den += (log_n[i] - xbar) * (log_n[i] - xbar);
  }
  CHECK(std::abs(num / den + 0.5) < 0.06);
}

TEST_CASE("result records serialize cleanly") {
  const GaussianState st = scrambled_state(4, 2718);
  Rng rng(55);
  const EstimateResult est = estimate_sre(st, 2.0, 500, rng);

  const nlohmann::json j = est.to_json();
  for (const char* key :
       {"value", "std_error", "std_error_jackknife", "n_samples", "alpha", "support", "seed"})
    CHECK(j.contains(key));
  CHECK(j["n_samples"] == 500);
  CHECK(j["support"] == "full");

  const auto commas = [](const std::string& s) {
    return std::count(s.begin(), s.end(), ',');
  };
  CHECK(commas(EstimateResult::csv_header()) == commas(est.csv_row()));

  Rng rng2(56);
  const SmiResult smi = estimate_smi(st, Region::interval(0, 2, 4), 2.0, 500, rng2);
  const nlohmann::json js = smi.to_json();
  for (const char* key : {"i_alpha", "std_error", "part_a", "part_b", "joint", "alpha", "sign"})
    CHECK(js.contains(key));
  CHECK(commas(SmiResult::csv_header()) == commas(smi.csv_row()));
}

TEST_CASE("estimator input validation") {
  const GaussianState st = scrambled_state(3, 77);
  Rng rng(3);
  CHECK_THROWS_AS((void)estimate_sre(st, 0.0, 100, rng), InputError);
  CHECK_THROWS_AS((void)estimate_sre(st, -1.0, 100, rng), InputError);
  CHECK_THROWS_AS((void)estimate_sre(st, 2.0, 0, rng), InputError);
  CHECK_THROWS_AS((void)estimate_sre(st, 2.0, 100, rng, {Region::interval(0, 4, 4)}),
                  InputError);
}
