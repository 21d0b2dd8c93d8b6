#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ffmagic/gaussian_state.hpp"
#include "ffmagic/rng.hpp"

namespace ffmagic {

enum class ProtocolKind { unitary, projective, weak };

const char* to_string(ProtocolKind k);
ProtocolKind protocol_kind_from_string(const std::string& s);

struct Protocol {
  ProtocolKind kind = ProtocolKind::unitary;
  double p = 0.0;     // projective measurement rate per site per step
  double beta = 0.0;  // weak measurement strength

  static Protocol unitary() { return {}; }
  static Protocol projective(double p) { return {ProtocolKind::projective, p, 0.0}; }
  static Protocol weak(double beta) { return {ProtocolKind::weak, 0.0, beta}; }
  void validate() const;
};

/// Brickwork circuit: per step, gates on odd bonds (1,2),(3,4),...,(L-1,0),
/// then even bonds (0,1),(2,3),..., then the measurement layer left to right.
/// Periodic chain, L even.
struct CircuitSpec {
  int n_sites = 0;
  int depth = 0;
  Protocol protocol;
  std::uint64_t seed = 0;
  /// Replay mode: outcomes (+-1) consumed in measurement order instead of
  /// Born sampling. The outcome stream is still advanced, so replayed and
  /// sampled runs stay aligned draw-for-draw.
  std::vector<int> forced_outcomes;

  void validate() const;
};

/// One two-site gate: couplings for the Majorana pairs
/// (0,1),(0,2),(0,3),(1,2),(1,3),(2,3) among the four local Majoranas of the
/// bond, each drawn i.i.d. uniform on [0, pi).
struct GateParams {
  int bond = 0;
  std::array<double, 6> kappa{};
};

struct MeasurementRecord {
  int time_step = 0;
  int site = 0;
  ProtocolKind kind = ProtocolKind::projective;
  int outcome = 0;                // +-1
  double born_probability = 0.0;  // of the realized outcome
  bool forced = false;            // outcome came from the forced stream
  bool flipped = false;           // near-zero branch was avoided
};

void write_records_jsonl(std::ostream& out, std::span<const MeasurementRecord> records);
std::vector<MeasurementRecord> read_records_jsonl(std::istream& in);

GateParams sample_gate(int bond, Rng& gates);

/// Outcome coin shared by every measurement backend. Exactly one uniform is
/// consumed per call, also under forced outcomes, so replays stay aligned.
/// A branch with probability below 1e-12 is never taken: sampled runs flip to
/// the opposite outcome (flagged), forced runs fail.
struct OutcomeDraw {
  int outcome = 0;
  double probability = 0.0;
  bool forced = false;
  bool flipped = false;
};
OutcomeDraw draw_outcome(double p_plus, Rng& outcomes, std::optional<int> forced);

/// Column rotation exp(-h) with h_{mn} = 4 kappa_{mn}; right-multiplied onto
/// the four Majorana columns of the bond.
Eigen::Matrix4d gate_rotation(const GateParams& g);

/// Majorana column indices {2b, 2b+1, 2b+2, 2b+3} of a bond, wrapping mod 2L.
std::array<int, 4> bond_columns(int bond, int n_sites);

void apply_unitary(GaussianState& state, const GateParams& g);

MeasurementRecord measure_projective(GaussianState& state, int site, Rng& outcomes,
                                     std::optional<int> forced = {});
MeasurementRecord measure_weak(GaussianState& state, int site, double beta, Rng& outcomes,
                               std::optional<int> forced = {});

/// Per-trajectory substreams. Gate parameters, the measurement schedule and
/// measurement outcomes never share a stream, so protocols that skip draws in
/// one category cannot shift another.
struct TrajectoryRng {
  Rng gates;
  Rng schedule;
  Rng outcomes;

  static TrajectoryRng from_seed(std::uint64_t seed) {
    const Rng root(seed);
    return {root.child(1), root.child(2), root.child(3)};
  }
};

/// Shared control flow for any circuit backend; keeps RNG consumption
/// identical between the Gaussian engine and the dense oracle replay.
/// Executor needs:
///   void gate(int bond, const GateParams&)
///   MeasurementRecord measure(int site, const Protocol&, Rng& outcomes,
///                             std::optional<int> forced)
template <class Executor>
std::vector<MeasurementRecord> run_circuit_on(const CircuitSpec& spec, Executor& ex,
                                              const std::function<void(int)>& observer = {}) {
  spec.validate();
  TrajectoryRng tr = TrajectoryRng::from_seed(spec.seed);
  std::deque<int> forced(spec.forced_outcomes.begin(), spec.forced_outcomes.end());
  auto next_forced = [&]() -> std::optional<int> {
    if (spec.forced_outcomes.empty()) return std::nullopt;
    if (forced.empty())
      throw InputError("run_circuit: forced outcome stream exhausted");
    const int v = forced.front();
    forced.pop_front();
    return v;
  };

  std::vector<MeasurementRecord> records;
  const int L = spec.n_sites;
  for (int t = 0; t < spec.depth; ++t) {
    for (int b = 1; b < L; b += 2) ex.gate(b, sample_gate(b, tr.gates));
    for (int b = 0; b < L; b += 2) ex.gate(b, sample_gate(b, tr.gates));
    switch (spec.protocol.kind) {
      case ProtocolKind::unitary:
        break;
      case ProtocolKind::projective:
        // One schedule draw per site regardless of the coin, so the stream
        // position never depends on earlier outcomes.
        for (int j = 0; j < L; ++j) {
          const bool hit = tr.schedule.uniform01() < spec.protocol.p;
          if (!hit) continue;
          MeasurementRecord rec = ex.measure(j, spec.protocol, tr.outcomes, next_forced());
          rec.time_step = t;
          records.push_back(rec);
        }
        break;
      case ProtocolKind::weak:
        for (int j = 0; j < L; ++j) {
          MeasurementRecord rec = ex.measure(j, spec.protocol, tr.outcomes, next_forced());
          rec.time_step = t;
          records.push_back(rec);
        }
        break;
    }
    if (observer) observer(t);
  }
  return records;
}

using StepObserver = std::function<void(int step, const GaussianState&)>;

/// Evolves the state in place and returns the measurement record.
std::vector<MeasurementRecord> run_circuit(const CircuitSpec& spec, GaussianState& state,
                                           const StepObserver& observer = {});

}  // namespace ffmagic
