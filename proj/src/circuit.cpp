#include "ffmagic/circuit.hpp"

#include <cmath>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>

namespace ffmagic {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Local Majorana pair order matching GateParams::kappa.
constexpr std::array<std::array<int, 2>, 6> kPairs{
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
}  // namespace

const char* to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::unitary: return "unitary";
    case ProtocolKind::projective: return "projective";
    case ProtocolKind::weak: return "weak";
  }
  return "?";
}

ProtocolKind protocol_kind_from_string(const std::string& s) {
  if (s == "unitary") return ProtocolKind::unitary;
  if (s == "projective") return ProtocolKind::projective;
  if (s == "weak") return ProtocolKind::weak;
  throw InputError("unknown protocol kind: " + s);
}

void Protocol::validate() const {
  switch (kind) {
    case ProtocolKind::unitary:
      break;
    case ProtocolKind::projective:
      if (!(p >= 0.0 && p <= 1.0)) throw InputError("Protocol: p must be in [0,1]");
      break;
    case ProtocolKind::weak:
      if (!(beta >= 0.0)) throw InputError("Protocol: beta must be non-negative");
      break;
  }
}

void CircuitSpec::validate() const {
  if (n_sites < 2 || n_sites % 2 != 0)
    throw InputError("CircuitSpec: n_sites must be even and at least 2");
  if (depth < 0) throw InputError("CircuitSpec: depth must be non-negative");
  protocol.validate();
  for (int v : forced_outcomes)
    if (v != 1 && v != -1) throw InputError("CircuitSpec: forced outcomes must be +-1");
}

GateParams sample_gate(int bond, Rng& gates) {
  GateParams g;
  g.bond = bond;
  for (double& k : g.kappa) k = gates.uniform(0.0, kPi);
  return g;
}

Eigen::Matrix4d gate_rotation(const GateParams& g) {
  Matrix h = Matrix::Zero(4, 4);
  for (std::size_t k = 0; k < kPairs.size(); ++k) {
    const int m = kPairs[k][0];
    const int n = kPairs[k][1];
    h(m, n) = 4.0 * g.kappa[k];
    h(n, m) = -4.0 * g.kappa[k];
  }
  return exp_skew(SkewMatrix(Matrix(-h)));
}

std::array<int, 4> bond_columns(int bond, int n_sites) {
  if (bond < 0 || bond >= n_sites) throw InputError("bond_columns: bond out of range");
  const int m = 2 * n_sites;
  return {2 * bond, 2 * bond + 1, (2 * bond + 2) % m, (2 * bond + 3) % m};
}

void apply_unitary(GaussianState& state, const GateParams& g) {
  state.apply_orthogonal_columns(bond_columns(g.bond, state.n_modes()), gate_rotation(g));
}

OutcomeDraw draw_outcome(double p_plus, Rng& outcomes, std::optional<int> forced) {
  OutcomeDraw d;
  const double u = outcomes.uniform01();
  d.outcome = u < p_plus ? +1 : -1;
  if (forced) {
    if (*forced != 1 && *forced != -1)
      throw InputError("measurement: forced outcome must be +-1");
    d.outcome = *forced;
    d.forced = true;
  }
  d.probability = d.outcome > 0 ? p_plus : 1.0 - p_plus;
  if (d.probability < 1e-12) {
    if (d.forced) throw InstabilityError("measurement: forced outcome has vanishing probability");
    d.outcome = -d.outcome;
    d.probability = 1.0 - d.probability;
    d.flipped = true;
  }
  return d;
}

namespace {

MeasurementRecord make_record(int site, ProtocolKind kind, const OutcomeDraw& d) {
  MeasurementRecord rec;
  rec.site = site;
  rec.kind = kind;
  rec.outcome = d.outcome;
  rec.born_probability = d.probability;
  rec.forced = d.forced;
  rec.flipped = d.flipped;
  return rec;
}

Eigen::Matrix2cd weak_kraus(double beta, int s) {
  Eigen::Matrix2cd b;
  const double ch = std::cosh(2.0 * beta);
  const double sh = std::sinh(2.0 * beta);
  b(0, 0) = ch;
  b(0, 1) = std::complex<double>(0.0, s * sh);
  b(1, 0) = std::complex<double>(0.0, -s * sh);
  b(1, 1) = ch;
  return b;
}

}  // namespace

MeasurementRecord measure_projective(GaussianState& state, int site, Rng& outcomes,
                                     std::optional<int> forced) {
  const double z = state.expectation_z(site);
  const double p_plus = std::clamp(0.5 * (1.0 + z), 0.0, 1.0);
  const OutcomeDraw d = draw_outcome(p_plus, outcomes, forced);
  state.project_mode(site, d.outcome);
  state.reorthonormalize();
  return make_record(site, ProtocolKind::projective, d);
}

MeasurementRecord measure_weak(GaussianState& state, int site, double beta, Rng& outcomes,
                               std::optional<int> forced) {
  if (!(beta >= 0.0)) throw InputError("measure_weak: beta must be non-negative");
  const double z = state.expectation_z(site);
  const double ch = std::cosh(2.0 * beta);
  const double sh = std::sinh(2.0 * beta);
  const double p_plus = std::clamp((ch + z * sh) / (2.0 * ch), 0.0, 1.0);
  const OutcomeDraw d = draw_outcome(p_plus, outcomes, forced);
  state.apply_matrix_columns(site, weak_kraus(beta, d.outcome));
  state.reorthonormalize();
  return make_record(site, ProtocolKind::weak, d);
}

namespace {

struct GaussianExecutor {
  GaussianState* state;

  void gate(int bond, const GateParams& g) { apply_unitary(*state, g); }

  MeasurementRecord measure(int site, const Protocol& pr, Rng& outcomes,
                            std::optional<int> forced) {
    if (pr.kind == ProtocolKind::weak)
      return measure_weak(*state, site, pr.beta, outcomes, forced);
    return measure_projective(*state, site, outcomes, forced);
  }
};

}  // namespace

std::vector<MeasurementRecord> run_circuit(const CircuitSpec& spec, GaussianState& state,
                                           const StepObserver& observer) {
  if (state.n_modes() != spec.n_sites)
    throw InputError("run_circuit: state size does not match the circuit spec");
  GaussianExecutor ex{&state};
  std::function<void(int)> hook;
  if (observer) hook = [&](int t) { observer(t, state); };
  return run_circuit_on(spec, ex, hook);
}

void write_records_jsonl(std::ostream& out, std::span<const MeasurementRecord> records) {
  for (const MeasurementRecord& r : records) {
    nlohmann::json j{{"t", r.time_step},          {"site", r.site},
                     {"kind", to_string(r.kind)}, {"outcome", r.outcome},
                     {"p", r.born_probability},   {"forced", r.forced},
                     {"flipped", r.flipped}};
    out << j.dump() << '\n';
  }
}

std::vector<MeasurementRecord> read_records_jsonl(std::istream& in) {
  std::vector<MeasurementRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    MeasurementRecord r;
    r.time_step = j.at("t").get<int>();
    r.site = j.at("site").get<int>();
    r.kind = protocol_kind_from_string(j.at("kind").get<std::string>());
    r.outcome = j.at("outcome").get<int>();
    r.born_probability = j.at("p").get<double>();
    r.forced = j.value("forced", false);
    r.flipped = j.value("flipped", false);
    out.push_back(r);
  }
  return out;
}

}  // namespace ffmagic
