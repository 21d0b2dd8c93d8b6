#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ffmagic/errors.hpp"
#include "ffmagic/estimators.hpp"
#include "ffmagic/exact.hpp"
#include "ffmagic/harness.hpp"

namespace fs = std::filesystem;

namespace ffmagic {

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ExperimentKind, std::string>> names = {
      {ExperimentKind::steady_sre, "steady_sre"},
      {ExperimentKind::steady_bsmi_vs_l, "steady_bsmi_vs_l"},
      {ExperimentKind::bsmi_vs_subsystem, "bsmi_vs_subsystem"},
      {ExperimentKind::disjoint_smi_cross_ratio, "disjoint_smi_cross_ratio"},
      {ExperimentKind::dynamics_sre, "dynamics_sre"},
      {ExperimentKind::dynamics_bsmi, "dynamics_bsmi"},
      {ExperimentKind::haar_appendix, "haar_appendix"},
  };
  return names;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kind_names())
    if (k == kind) return name;
  throw InputError("unknown experiment kind");
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kind_names())
    if (n == name) return k;
  throw ConfigError("unknown experiment kind: " + name);
}

namespace {

void require_known_keys(const nlohmann::json& j, const std::set<std::string>& known,
                        const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config key: " + where + key);
}

bool is_steady_kind(ExperimentKind k) {
  return k == ExperimentKind::steady_sre || k == ExperimentKind::steady_bsmi_vs_l ||
         k == ExperimentKind::bsmi_vs_subsystem ||
         k == ExperimentKind::disjoint_smi_cross_ratio;
}

bool is_dynamics_kind(ExperimentKind k) {
  return k == ExperimentKind::dynamics_sre || k == ExperimentKind::dynamics_bsmi;
}

bool is_smi_kind(ExperimentKind k) {
  return k == ExperimentKind::steady_bsmi_vs_l || k == ExperimentKind::bsmi_vs_subsystem ||
         k == ExperimentKind::disjoint_smi_cross_ratio || k == ExperimentKind::dynamics_bsmi;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  require_known_keys(j, {"version", "kind", "sweep", "n_trajectories", "n_samples",
                         "equilibration_factor", "depth_factor", "measure_stride",
                         "random_initial_bits", "checkpoint_states", "out_dir", "master_seed",
                         "threads", "fit_window"},
                     "");
  ExperimentConfig c;
  c.version = j.at("version").get<int>();
  if (j.contains("kind")) c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("sweep")) {
    const nlohmann::json& s = j.at("sweep");
    require_known_keys(s, {"l", "p", "beta", "alpha", "s_over_n"}, "sweep.");
    if (s.contains("l")) c.sweep.l_values = s.at("l").get<std::vector<int>>();
    if (s.contains("p")) c.sweep.p_values = s.at("p").get<std::vector<double>>();
    if (s.contains("beta")) c.sweep.beta_values = s.at("beta").get<std::vector<double>>();
    if (s.contains("alpha")) c.sweep.alpha_values = s.at("alpha").get<std::vector<double>>();
    if (s.contains("s_over_n"))
      c.sweep.s_over_n_values = s.at("s_over_n").get<std::vector<double>>();
  }
  if (j.contains("n_trajectories")) c.n_trajectories = j.at("n_trajectories").get<int>();
  if (j.contains("n_samples")) c.n_samples = j.at("n_samples").get<int>();
  if (j.contains("equilibration_factor"))
    c.equilibration_factor = j.at("equilibration_factor").get<int>();
  if (j.contains("depth_factor")) c.depth_factor = j.at("depth_factor").get<int>();
  if (j.contains("measure_stride")) c.measure_stride = j.at("measure_stride").get<int>();
  if (j.contains("random_initial_bits"))
    c.random_initial_bits = j.at("random_initial_bits").get<bool>();
  if (j.contains("checkpoint_states"))
    c.checkpoint_states = j.at("checkpoint_states").get<bool>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  if (j.contains("fit_window")) {
    const nlohmann::json& w = j.at("fit_window");
    require_known_keys(w, {"t_over_l_min", "t_over_l_max", "eta_max"}, "fit_window.");
    if (w.contains("t_over_l_min")) c.fit_window.t_over_l_min = w.at("t_over_l_min").get<double>();
    if (w.contains("t_over_l_max")) c.fit_window.t_over_l_max = w.at("t_over_l_max").get<double>();
    if (w.contains("eta_max")) c.fit_window.eta_max = w.at("eta_max").get<double>();
  }
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  return nlohmann::json{
      {"version", version},
      {"kind", ffmagic::to_string(kind)},
      {"sweep",
       {{"l", sweep.l_values},
        {"p", sweep.p_values},
        {"beta", sweep.beta_values},
        {"alpha", sweep.alpha_values},
        {"s_over_n", sweep.s_over_n_values}}},
      {"n_trajectories", n_trajectories},
      {"n_samples", n_samples},
      {"equilibration_factor", equilibration_factor},
      {"depth_factor", depth_factor},
      {"measure_stride", measure_stride},
      {"random_initial_bits", random_initial_bits},
      {"checkpoint_states", checkpoint_states},
      {"out_dir", out_dir},
      {"master_seed", master_seed},
      {"threads", threads},
      {"fit_window",
       {{"t_over_l_min", fit_window.t_over_l_min},
        {"t_over_l_max", fit_window.t_over_l_max},
        {"eta_max", fit_window.eta_max}}}};
}

void ExperimentConfig::validate() const {
  if (version != 1) throw ConfigError("unsupported config version");
  if (sweep.l_values.empty()) throw ConfigError("sweep needs at least one system size");
  for (const int l : sweep.l_values)
    if (l < 2) throw ConfigError("system sizes must be at least 2");
  if (sweep.alpha_values.empty()) throw ConfigError("sweep needs at least one alpha");
  for (const double a : sweep.alpha_values)
    if (!(a > 0.0)) throw ConfigError("alpha values must be positive");
  for (const double p : sweep.p_values)
    if (p < 0.0 || p > 1.0) throw ConfigError("measurement rates must be in [0, 1]");
  for (const double b : sweep.beta_values)
    if (!(b > 0.0)) throw ConfigError("weak measurement strengths must be positive");
  if (n_trajectories < 1) throw ConfigError("n_trajectories must be positive");
  if (n_samples < 1) throw ConfigError("n_samples must be positive");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (measure_stride < 0) throw ConfigError("measure_stride must be non-negative");
  if (depth_factor < 1) throw ConfigError("depth_factor must be positive");

  if (kind == ExperimentKind::haar_appendix) {
    for (const int n : sweep.l_values)
      if (n > 8) throw ConfigError("haar experiment is capped at 8 qubits");
    if (sweep.s_over_n_values.empty())
      throw ConfigError("haar sweep needs s_over_n values");
    // The analytic Pauli spectrum degenerates at S = N (sigma = 0 for b = 1).
    for (const double s : sweep.s_over_n_values)
      if (s < 0.0 || s >= 1.0) throw ConfigError("s_over_n values must be in [0, 1)");
    return;
  }

  if (is_steady_kind(kind)) {
    if (sweep.p_values.empty() && sweep.beta_values.empty())
      throw ConfigError("steady-state sweep needs a measurement grid (p or beta)");
    if (equilibration_factor < 4)
      throw ConfigError("equilibration depth must be at least 4 L");
  }
  if (is_smi_kind(kind)) {
    for (const double a : sweep.alpha_values)
      if (a > 1.0 && a < 2.0)
        throw ConfigError("mutual information has no sign convention for alpha in (1, 2)");
  }
  if (kind == ExperimentKind::steady_bsmi_vs_l || kind == ExperimentKind::dynamics_bsmi) {
    for (const int l : sweep.l_values)
      if (l % 2 != 0) throw ConfigError("half-system cut needs even system sizes");
  }
  if (kind == ExperimentKind::disjoint_smi_cross_ratio) {
    for (const int l : sweep.l_values)
      if (l < 8) throw ConfigError("disjoint-region scan needs at least 8 sites");
  }
}

std::uint64_t config_digest(const ExperimentConfig& config) {
  nlohmann::json j = config.to_json();
  j.erase("out_dir");
  j.erase("threads");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<int> record_steps(int depth, int stride) {
  if (depth < 1) throw InputError("record_steps: depth must be positive");
  std::vector<int> steps;
  if (stride > 0) {
    for (int t = 0; t < depth; t += stride) steps.push_back(t);
  } else {
    int t = 0;
    while (t < depth) {
      steps.push_back(t);
      t = std::max(t + 1, static_cast<int>(std::llround(t * std::numbers::sqrt2)));
    }
  }
  if (steps.back() != depth - 1) steps.push_back(depth - 1);
  return steps;
}

void DataTable::write_csv(std::ostream& out) const {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < columns.size(); ++i)
    out << columns[i] << (i + 1 < columns.size() ? ',' : '\n');
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? ',' : '\n');
  }
}

namespace {

struct ProtoPoint {
  Protocol protocol;
  double p = 0.0;
  double beta = 0.0;
  int code = 0;  // 0 unitary, 1 projective, 2 weak
};

std::vector<ProtoPoint> protocol_points(const ExperimentConfig& config) {
  std::vector<ProtoPoint> points;
  for (const double p : config.sweep.p_values)
    points.push_back({Protocol::projective(p), p, 0.0, 1});
  for (const double b : config.sweep.beta_values)
    points.push_back({Protocol::weak(b), 0.0, b, 2});
  if (points.empty()) points.push_back({Protocol::unitary(), 0.0, 0.0, 0});
  return points;
}

std::string proto_label(const ProtoPoint& pp) {
  std::ostringstream os;
  if (pp.code == 1)
    os << "p=" << pp.p;
  else if (pp.code == 2)
    os << "beta=" << pp.beta;
  else
    os << "unitary";
  return os.str();
}

Rng job_root(const ExperimentConfig& config, int point, int traj) {
  return Rng(config.master_seed)
      .child(static_cast<std::uint64_t>(point) + 1)
      .child(static_cast<std::uint64_t>(traj) + 1);
}

fs::path partial_path(const ExperimentConfig& config) {
  return fs::path(config.out_dir) / (to_string(config.kind) + ".partial.jsonl");
}

fs::path checkpoints_dir(const ExperimentConfig& config) {
  return fs::path(config.out_dir) / "checkpoints";
}

fs::path snapshot_path(const ExperimentConfig& config, int job) {
  return checkpoints_dir(config) / ("job_" + std::to_string(job) + ".state.json");
}

struct JobStore {
  // 0 pending, 1 done, 2 discarded
  std::vector<std::vector<std::uint8_t>> state;
  std::vector<std::vector<std::vector<double>>> values;
  int n_discarded = 0;
};

// Runs point x trajectory jobs through a shared queue. compute(point, traj)
// returns the job's slot values; a NumericalError discards the trajectory.
// Finished jobs append to the partial file so --resume can skip them; more
// than 5% discarded aborts the whole run.
JobStore run_jobs(const ExperimentConfig& config, bool resume,
                  const std::vector<int>& slots_per_point,
                  const std::function<std::vector<double>(int, int)>& compute) {
  const int n_points = static_cast<int>(slots_per_point.size());
  const int n_traj = config.n_trajectories;
  const int total = n_points * n_traj;

  JobStore store;
  store.state.assign(n_points, std::vector<std::uint8_t>(n_traj, 0));
  store.values.resize(n_points);
  for (int p = 0; p < n_points; ++p)
    store.values[p].assign(n_traj, std::vector<double>());

  fs::create_directories(config.out_dir);
  const fs::path ppath = partial_path(config);
  const std::string digest = std::to_string(config_digest(config));

  bool have_header = false;
  if (resume && fs::exists(ppath)) {
    std::ifstream in(ppath);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const nlohmann::json j = nlohmann::json::parse(line);
      if (first) {
        first = false;
        if (j.value("digest", std::string()) != digest)
          throw ConfigError("resume: configuration changed since the checkpoint was written");
        have_header = true;
        continue;
      }
      const int job = j.at("job").get<int>();
      if (job < 0 || job >= total) throw ConfigError("resume: checkpoint job index out of range");
      const int p = job / n_traj;
      const int t = job % n_traj;
      if (j.value("discarded", false)) {
        store.state[p][t] = 2;
        ++store.n_discarded;
      } else {
        std::vector<double> vals = j.at("values").get<std::vector<double>>();
        if (static_cast<int>(vals.size()) != slots_per_point[p])
          throw ConfigError("resume: checkpoint row shape does not match the configuration");
        store.values[p][t] = std::move(vals);
        store.state[p][t] = 1;
      }
    }
  }

  std::ofstream out;
  if (have_header) {
    out.open(ppath, std::ios::app);
  } else {
    out.open(ppath, std::ios::trunc);
    out << nlohmann::json{{"schema", 1}, {"digest", digest}}.dump() << "\n";
    out.flush();
  }
  if (!out) throw ConfigError("cannot write checkpoint file: " + ppath.string());

  std::vector<int> pending;
  for (int job = 0; job < total; ++job)
    if (store.state[job / n_traj][job % n_traj] == 0) pending.push_back(job);

  const int abort_threshold = total / 20;
  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> abort{false};
  std::mutex io;

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= pending.size() || abort.load()) break;
      const int job = pending[i];
      const int p = job / n_traj;
      const int t = job % n_traj;
      std::vector<double> vals;
      bool discarded = false;
      std::string why;
      try {
        vals = compute(p, t);
      } catch (const NumericalError& e) {
        discarded = true;
        why = e.what();
      }
      const std::lock_guard<std::mutex> lock(io);
      if (discarded) {
        out << nlohmann::json{{"job", job}, {"discarded", true}, {"error", why}}.dump() << "\n";
        store.state[p][t] = 2;
        if (++store.n_discarded > abort_threshold) abort.store(true);
      } else {
        out << nlohmann::json{{"job", job}, {"values", vals}}.dump() << "\n";
        store.values[p][t] = std::move(vals);
        store.state[p][t] = 1;
      }
      out.flush();
    }
  };

  const int n_workers = std::min<int>(config.threads, std::max<std::size_t>(pending.size(), 1));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  if (store.n_discarded > abort_threshold) {
    std::ostringstream os;
    os << "aborting: " << store.n_discarded << " of " << total
       << " trajectories were discarded (limit 5%)";
    throw InstabilityError(os.str());
  }
  return store;
}

struct SlotStats {
  double mean = 0.0;
  double err = 0.0;
  int n = 0;
};

SlotStats slot_stats(const JobStore& store, int point, int slot) {
  SlotStats s;
  double sum = 0.0;
  for (std::size_t t = 0; t < store.state[point].size(); ++t) {
    if (store.state[point][t] != 1) continue;
    sum += store.values[point][t][slot];
    ++s.n;
  }
  if (s.n == 0) throw InstabilityError("no surviving trajectories for a sweep point");
  s.mean = sum / s.n;
  if (s.n > 1) {
    double ss = 0.0;
    for (std::size_t t = 0; t < store.state[point].size(); ++t) {
      if (store.state[point][t] != 1) continue;
      const double d = store.values[point][t][slot] - s.mean;
      ss += d * d;
    }
    s.err = std::sqrt(ss / (s.n - 1) / s.n);
  }
  return s;
}

int point_discards(const JobStore& store, int point) {
  int n = 0;
  for (const std::uint8_t st : store.state[point]) n += st == 2;
  return n;
}

GaussianState equilibrated_state(const ExperimentConfig& config, bool resume, int l,
                                 const ProtoPoint& proto, int point, int traj) {
  const int job = point * config.n_trajectories + traj;
  const fs::path snap = snapshot_path(config, job);
  if (config.checkpoint_states && resume && fs::exists(snap))
    return GaussianState::load(snap.string());

  const Rng root = job_root(config, point, traj);
  std::vector<int> bits;
  if (config.random_initial_bits) {
    Rng br = root.child(0);
    bits.resize(static_cast<std::size_t>(l));
    for (int j = 0; j < l; ++j) bits[static_cast<std::size_t>(j)] = br.uniform01() < 0.5;
  }
  GaussianState state = GaussianState::product_state(l, bits);
  CircuitSpec spec;
  spec.n_sites = l;
  spec.depth = config.equilibration_factor * l;
  spec.protocol = proto.protocol;
  spec.seed = root.child(1).seed();
  run_circuit(spec, state);

  if (config.checkpoint_states) {
    fs::create_directories(checkpoints_dir(config));
    state.save(snap.string());
  }
  return state;
}

std::string fit_key(const std::string& quantity, const std::vector<std::string>& tags) {
  std::string key = quantity + "[";
  for (std::size_t i = 0; i < tags.size(); ++i)
    key += tags[i] + (i + 1 < tags.size() ? "," : "");
  return key + "]";
}

std::string num_tag(const std::string& name, double v) {
  std::ostringstream os;
  os << name << "=" << v;
  return os.str();
}

// A fit that cannot be formed (too few points, non-positive data) is
// reported in the notes instead of failing the run.
void try_fit(RunResult& result, const std::string& key, const std::vector<double>& x,
             const std::vector<double>& y, FitModel model) {
  try {
    result.fits[key] = fit(x, y, model);
  } catch (const InputError& e) {
    result.notes["skipped_fits"][key] = e.what();
  }
}

struct FourPoint {
  int width = 0;
  int gap = 0;
  double eta = 0.0;
};

std::vector<FourPoint> disjoint_geometries(int l) {
  std::vector<int> widths;
  for (const int w : {l / 16, l / 8, l / 4}) {
    if (w < 1) continue;
    if (std::find(widths.begin(), widths.end(), w) == widths.end()) widths.push_back(w);
  }
  std::vector<FourPoint> geoms;
  for (const int w : widths) {
    int gap = 1;
    while (2 * gap <= l - 2 * w) {
      FourPoint g;
      g.width = w;
      g.gap = gap;
      g.eta = cross_ratio(0, w, w + gap, 2 * w + gap, l);
      geoms.push_back(g);
      gap = std::max(gap + 1, static_cast<int>(std::llround(gap * 1.5)));
    }
  }
  return geoms;
}

}  // namespace

RunResult run_steady_state_sweep(const ExperimentConfig& config, bool resume) {
  const std::vector<ProtoPoint> protos = protocol_points(config);
  const std::vector<int>& ls = config.sweep.l_values;
  const std::vector<double>& alphas = config.sweep.alpha_values;
  const int n_alpha = static_cast<int>(alphas.size());
  const int n_proto = static_cast<int>(protos.size());
  const ExperimentKind kind = config.kind;

  // Slot layouts: steady_sre -> M per alpha then S2(half);
  // steady_bsmi_vs_l -> BSMI per alpha;
  // bsmi_vs_subsystem -> BSMI per cut size (1..L/2), alpha-major inner.
  const auto point_l = [&](int point) { return ls[static_cast<std::size_t>(point / n_proto)]; };
  const auto point_proto = [&](int point) -> const ProtoPoint& {
    return protos[static_cast<std::size_t>(point % n_proto)];
  };
  std::vector<int> slots;
  for (const int l : ls) {
    for (int pi = 0; pi < n_proto; ++pi) {
      switch (kind) {
        case ExperimentKind::steady_sre: slots.push_back(n_alpha + 1); break;
        case ExperimentKind::steady_bsmi_vs_l: slots.push_back(n_alpha); break;
        case ExperimentKind::bsmi_vs_subsystem: slots.push_back((l / 2) * n_alpha); break;
        default: throw InputError("run_steady_state_sweep: wrong experiment kind");
      }
    }
  }

  const auto compute = [&](int point, int traj) {
    const int l = point_l(point);
    const ProtoPoint& proto = point_proto(point);
    const GaussianState state = equilibrated_state(config, resume, l, proto, point, traj);
    const Rng root = job_root(config, point, traj);
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(slots[static_cast<std::size_t>(point)]));
    int k = 0;
    const auto next_rng = [&] { return root.child(2 + static_cast<std::uint64_t>(k++)); };
    switch (kind) {
      case ExperimentKind::steady_sre: {
        for (const double alpha : alphas) {
          Rng rng = next_rng();
          vals.push_back(estimate_sre(state, alpha, config.n_samples, rng).value);
        }
        vals.push_back(state.entanglement_entropy(Region::interval(0, l / 2, l), 2));
        break;
      }
      case ExperimentKind::steady_bsmi_vs_l: {
        const Region half = Region::interval(0, l / 2, l);
        for (const double alpha : alphas) {
          Rng rng = next_rng();
          vals.push_back(estimate_smi(state, half, alpha, config.n_samples, rng).i_alpha);
        }
        break;
      }
      case ExperimentKind::bsmi_vs_subsystem: {
        for (int la = 1; la <= l / 2; ++la) {
          const Region cut = Region::interval(0, la, l);
          for (const double alpha : alphas) {
            Rng rng = next_rng();
            vals.push_back(estimate_smi(state, cut, alpha, config.n_samples, rng).i_alpha);
          }
        }
        break;
      }
      default: break;
    }
    return vals;
  };

  const JobStore store = run_jobs(config, resume, slots, compute);

  RunResult result;
  result.n_jobs = static_cast<int>(slots.size()) * config.n_trajectories;
  result.n_discarded = store.n_discarded;

  if (kind == ExperimentKind::steady_sre)
    result.table.columns = {"l", "protocol", "p",      "beta",   "alpha",  "m_mean",
                            "m_err", "s2_mean",  "s2_err", "n_traj", "n_discarded"};
  else if (kind == ExperimentKind::steady_bsmi_vs_l)
    result.table.columns = {"l",        "protocol", "p",      "beta",
                            "alpha",    "bsmi_mean", "bsmi_err", "n_traj",
                            "n_discarded"};
  else
    result.table.columns = {"l",         "protocol", "p",      "beta",   "alpha", "l_a",
                            "chord", "bsmi_mean", "bsmi_err", "n_traj", "n_discarded"};

  // value series per (proto, alpha) across L, for the scaling fits
  std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> series;

  for (std::size_t point = 0; point < slots.size(); ++point) {
    const int l = point_l(static_cast<int>(point));
    const ProtoPoint& proto = point_proto(static_cast<int>(point));
    const int discards = point_discards(store, static_cast<int>(point));
    if (kind == ExperimentKind::steady_sre) {
      const SlotStats s2 = slot_stats(store, static_cast<int>(point), n_alpha);
      for (int ai = 0; ai < n_alpha; ++ai) {
        const SlotStats m = slot_stats(store, static_cast<int>(point), ai);
        result.table.rows.push_back({double(l), double(proto.code), proto.p, proto.beta,
                                     alphas[static_cast<std::size_t>(ai)], m.mean, m.err,
                                     s2.mean, s2.err, double(m.n), double(discards)});
        auto& [xs, ys] = series[{static_cast<int>(point) % n_proto, ai}];
        xs.push_back(double(l));
        ys.push_back(m.mean);
      }
    } else if (kind == ExperimentKind::steady_bsmi_vs_l) {
      for (int ai = 0; ai < n_alpha; ++ai) {
        const SlotStats m = slot_stats(store, static_cast<int>(point), ai);
        result.table.rows.push_back({double(l), double(proto.code), proto.p, proto.beta,
                                     alphas[static_cast<std::size_t>(ai)], m.mean, m.err,
                                     double(m.n), double(discards)});
        auto& [xs, ys] = series[{static_cast<int>(point) % n_proto, ai}];
        xs.push_back(double(l));
        ys.push_back(m.mean);
      }
    } else {
      for (int la = 1; la <= l / 2; ++la) {
        for (int ai = 0; ai < n_alpha; ++ai) {
          const SlotStats m = slot_stats(store, static_cast<int>(point), (la - 1) * n_alpha + ai);
          const double chord = std::sin(std::numbers::pi * la / l);
          result.table.rows.push_back({double(l), double(proto.code), proto.p, proto.beta,
                                       alphas[static_cast<std::size_t>(ai)], double(la), chord,
                                       m.mean, m.err, double(m.n), double(discards)});
        }
      }
      // per-point chord fit
      for (int ai = 0; ai < n_alpha; ++ai) {
        std::vector<double> xs, ys;
        for (int la = 1; la <= l / 2; ++la) {
          const SlotStats m = slot_stats(store, static_cast<int>(point), (la - 1) * n_alpha + ai);
          xs.push_back(std::sin(std::numbers::pi * la / l));
          ys.push_back(m.mean);
        }
        try_fit(result,
                fit_key("bsmi_log_chord",
                        {num_tag("l", l), num_tag("alpha", alphas[static_cast<std::size_t>(ai)]),
                         proto_label(proto)}),
                xs, ys, FitModel::log_fit);
      }
    }
  }

  for (const auto& [key, xy] : series) {
    const auto& [pi, ai] = key;
    const std::vector<std::string> tags = {
        num_tag("alpha", alphas[static_cast<std::size_t>(ai)]),
        proto_label(protos[static_cast<std::size_t>(pi)])};
    if (kind == ExperimentKind::steady_sre)
      try_fit(result, fit_key("sre_linear_in_l", tags), xy.first, xy.second,
              FitModel::linear_fit);
    else if (kind == ExperimentKind::steady_bsmi_vs_l)
      try_fit(result, fit_key("bsmi_log_l", tags), xy.first, xy.second, FitModel::log_fit);
  }
  return result;
}

RunResult run_dynamics(const ExperimentConfig& config, bool resume) {
  const std::vector<ProtoPoint> protos = protocol_points(config);
  const std::vector<int>& ls = config.sweep.l_values;
  const std::vector<double>& alphas = config.sweep.alpha_values;
  const int n_alpha = static_cast<int>(alphas.size());
  const int n_proto = static_cast<int>(protos.size());
  const bool bsmi = config.kind == ExperimentKind::dynamics_bsmi;
  const int per_rec = n_alpha + 1;  // values per alpha, then S2(half)

  const auto point_l = [&](int point) { return ls[static_cast<std::size_t>(point / n_proto)]; };
  const auto point_proto = [&](int point) -> const ProtoPoint& {
    return protos[static_cast<std::size_t>(point % n_proto)];
  };
  std::vector<std::vector<int>> recs_per_l;
  recs_per_l.reserve(ls.size());
  for (const int l : ls) {
    const int depth = config.depth_factor * l;
    std::vector<int> recs = record_steps(depth, config.measure_stride);
    if (config.measure_stride == 0) {
      // The geometric schedule leaves a single point in the late plateau
      // window; the M(infinity) average needs several.
      const int first = static_cast<int>(std::ceil(0.8 * depth));
      const int n_extra = 8;
      for (int k = 0; k < n_extra; ++k)
        recs.push_back(first + (depth - 1 - first) * k / (n_extra - 1));
      std::sort(recs.begin(), recs.end());
      recs.erase(std::unique(recs.begin(), recs.end()), recs.end());
    }
    recs_per_l.push_back(std::move(recs));
  }

  std::vector<int> slots;
  for (std::size_t li = 0; li < ls.size(); ++li)
    for (int pi = 0; pi < n_proto; ++pi)
      slots.push_back(static_cast<int>(recs_per_l[li].size()) * per_rec);

  const auto compute = [&](int point, int traj) {
    const int l = point_l(point);
    const ProtoPoint& proto = point_proto(point);
    const std::vector<int>& recs = recs_per_l[static_cast<std::size_t>(point / n_proto)];
    const Rng root = job_root(config, point, traj);

    std::vector<int> bits;
    if (config.random_initial_bits) {
      Rng br = root.child(0);
      bits.resize(static_cast<std::size_t>(l));
      for (int j = 0; j < l; ++j) bits[static_cast<std::size_t>(j)] = br.uniform01() < 0.5;
    }
    GaussianState state = GaussianState::product_state(l, bits);
    CircuitSpec spec;
    spec.n_sites = l;
    spec.depth = config.depth_factor * l;
    spec.protocol = proto.protocol;
    spec.seed = root.child(1).seed();

    std::vector<double> vals(recs.size() * static_cast<std::size_t>(per_rec), 0.0);
    const Region half = Region::interval(0, l / 2, l);
    std::size_t r = 0;
    run_circuit(spec, state, [&](int step, const GaussianState& st) {
      if (r >= recs.size() || recs[r] != step) return;
      for (int ai = 0; ai < n_alpha; ++ai) {
        Rng rng = root.child(2 + static_cast<std::uint64_t>(r) * n_alpha +
                             static_cast<std::uint64_t>(ai));
        const double alpha = alphas[static_cast<std::size_t>(ai)];
        vals[r * per_rec + static_cast<std::size_t>(ai)] =
            bsmi ? estimate_smi(st, half, alpha, config.n_samples, rng).i_alpha
                 : estimate_sre(st, alpha, config.n_samples, rng).value;
      }
      vals[r * per_rec + static_cast<std::size_t>(n_alpha)] = st.entanglement_entropy(half, 2);
      ++r;
    });
    return vals;
  };

  const JobStore store = run_jobs(config, resume, slots, compute);

  RunResult result;
  result.n_jobs = static_cast<int>(slots.size()) * config.n_trajectories;
  result.n_discarded = store.n_discarded;
  result.table.columns = {"l",    "protocol",  "p",         "beta",   "alpha",
                          "t",    "t_over_l",  "value_mean", "value_err", "s2_mean",
                          "s2_err", "delta_over_l", "n_traj",  "n_discarded"};

  // pooled collapse series per (proto, alpha) for the exponential-decay fit
  std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> pooled;

  for (std::size_t point = 0; point < slots.size(); ++point) {
    const int l = point_l(static_cast<int>(point));
    const ProtoPoint& proto = point_proto(static_cast<int>(point));
    const std::vector<int>& recs = recs_per_l[point / static_cast<std::size_t>(n_proto)];
    const int depth = config.depth_factor * l;
    const int discards = point_discards(store, static_cast<int>(point));

    for (int ai = 0; ai < n_alpha; ++ai) {
      // late-time plateau of the ensemble mean: the saturation value
      double plateau = 0.0;
      int n_plateau = 0;
      for (std::size_t r = 0; r < recs.size(); ++r) {
        if (recs[r] + 1 <= 0.8 * depth) continue;
        plateau += slot_stats(store, static_cast<int>(point),
                              static_cast<int>(r) * per_rec + ai)
                       .mean;
        ++n_plateau;
      }
      plateau /= std::max(n_plateau, 1);

      std::vector<double> fit_t, fit_delta;
      for (std::size_t r = 0; r < recs.size(); ++r) {
        const SlotStats m =
            slot_stats(store, static_cast<int>(point), static_cast<int>(r) * per_rec + ai);
        const SlotStats s2 =
            slot_stats(store, static_cast<int>(point), static_cast<int>(r) * per_rec + n_alpha);
        const double t = recs[r] + 1;
        const double t_over_l = t / l;
        const double delta_over_l = (plateau - m.mean) / l;
        result.table.rows.push_back({double(l), double(proto.code), proto.p, proto.beta,
                                     alphas[static_cast<std::size_t>(ai)], t, t_over_l, m.mean,
                                     m.err, s2.mean, s2.err, delta_over_l, double(m.n),
                                     double(discards)});
        const bool in_window = t_over_l >= config.fit_window.t_over_l_min &&
                               t_over_l <= config.fit_window.t_over_l_max;
        if (in_window && plateau - m.mean > 0.0) {
          fit_t.push_back(t);
          fit_delta.push_back(plateau - m.mean);
          auto& [xs, ys] = pooled[{static_cast<int>(point) % n_proto, ai}];
          xs.push_back(t_over_l);
          ys.push_back(delta_over_l);
        }
      }

      const std::vector<std::string> tags = {
          num_tag("l", l), num_tag("alpha", alphas[static_cast<std::size_t>(ai)]),
          proto_label(proto)};
      if (bsmi) {
        std::vector<double> xs, ys;
        for (std::size_t r = 0; r < recs.size(); ++r) {
          const SlotStats m =
              slot_stats(store, static_cast<int>(point), static_cast<int>(r) * per_rec + ai);
          const double t = recs[r] + 1;
          const double t_over_l = t / l;
          if (t_over_l >= config.fit_window.t_over_l_min &&
              t_over_l <= config.fit_window.t_over_l_max && m.mean > 0.0) {
            xs.push_back(t);
            ys.push_back(m.mean);
          }
        }
        try_fit(result, fit_key("bsmi_power_t", tags), xs, ys, FitModel::power_fit);
      } else {
        try_fit(result, fit_key("delta_m_power_t", tags), fit_t, fit_delta,
                FitModel::power_fit);
      }
    }
  }

  if (!bsmi) {
    for (const auto& [key, xy] : pooled) {
      const auto& [pi, ai] = key;
      try_fit(result,
              fit_key("delta_m_exp",
                      {num_tag("alpha", alphas[static_cast<std::size_t>(ai)]),
                       proto_label(protos[static_cast<std::size_t>(pi)])}),
              xy.first, xy.second, FitModel::exp_fit);
    }
  }
  return result;
}

RunResult run_disjoint_smi(const ExperimentConfig& config, bool resume) {
  const std::vector<ProtoPoint> protos = protocol_points(config);
  const std::vector<int>& ls = config.sweep.l_values;
  const std::vector<double>& alphas = config.sweep.alpha_values;
  const int n_alpha = static_cast<int>(alphas.size());
  const int n_proto = static_cast<int>(protos.size());

  const auto point_l = [&](int point) { return ls[static_cast<std::size_t>(point / n_proto)]; };
  const auto point_proto = [&](int point) -> const ProtoPoint& {
    return protos[static_cast<std::size_t>(point % n_proto)];
  };
  std::vector<std::vector<FourPoint>> geoms_per_l;
  geoms_per_l.reserve(ls.size());
  for (const int l : ls) geoms_per_l.push_back(disjoint_geometries(l));

  std::vector<int> slots;
  for (std::size_t li = 0; li < ls.size(); ++li)
    for (int pi = 0; pi < n_proto; ++pi)
      slots.push_back(static_cast<int>(geoms_per_l[li].size()) * n_alpha);

  const auto compute = [&](int point, int traj) {
    const int l = point_l(point);
    const ProtoPoint& proto = point_proto(point);
    const std::vector<FourPoint>& geoms = geoms_per_l[static_cast<std::size_t>(point / n_proto)];
    const GaussianState state = equilibrated_state(config, resume, l, proto, point, traj);
    const Rng root = job_root(config, point, traj);
    std::vector<double> vals;
    vals.reserve(geoms.size() * static_cast<std::size_t>(n_alpha));
    int k = 0;
    for (const FourPoint& g : geoms) {
      const Region region_a = Region::interval(0, g.width, l);
      const Region region_b = Region::interval(g.width + g.gap, g.width, l);
      for (const double alpha : alphas) {
        Rng rng = root.child(2 + static_cast<std::uint64_t>(k++));
        vals.push_back(
            estimate_fermionic_smi_disjoint(state, region_a, region_b, alpha,
                                            config.n_samples, rng)
                .i_alpha);
      }
    }
    return vals;
  };

  const JobStore store = run_jobs(config, resume, slots, compute);

  RunResult result;
  result.n_jobs = static_cast<int>(slots.size()) * config.n_trajectories;
  result.n_discarded = store.n_discarded;
  result.table.columns = {"l",     "protocol", "p",     "beta",  "alpha", "width",
                          "gap", "eta",      "i_mean", "i_err", "n_traj", "n_discarded"};

  std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> pooled;
  for (std::size_t point = 0; point < slots.size(); ++point) {
    const int l = point_l(static_cast<int>(point));
    const ProtoPoint& proto = point_proto(static_cast<int>(point));
    const std::vector<FourPoint>& geoms = geoms_per_l[point / static_cast<std::size_t>(n_proto)];
    const int discards = point_discards(store, static_cast<int>(point));
    for (std::size_t gi = 0; gi < geoms.size(); ++gi) {
      for (int ai = 0; ai < n_alpha; ++ai) {
        const SlotStats m =
            slot_stats(store, static_cast<int>(point), static_cast<int>(gi) * n_alpha + ai);
        result.table.rows.push_back({double(l), double(proto.code), proto.p, proto.beta,
                                     alphas[static_cast<std::size_t>(ai)],
                                     double(geoms[gi].width), double(geoms[gi].gap),
                                     geoms[gi].eta, m.mean, m.err, double(m.n),
                                     double(discards)});
        if (geoms[gi].eta <= config.fit_window.eta_max && m.mean > 0.0) {
          auto& [xs, ys] = pooled[{static_cast<int>(point) % n_proto, ai}];
          xs.push_back(geoms[gi].eta);
          ys.push_back(m.mean);
        }
      }
    }
  }
  for (const auto& [key, xy] : pooled) {
    const auto& [pi, ai] = key;
    try_fit(result,
            fit_key("smi_power_eta", {num_tag("alpha", alphas[static_cast<std::size_t>(ai)]),
                                      proto_label(protos[static_cast<std::size_t>(pi)])}),
            xy.first, xy.second, FitModel::power_fit);
  }
  return result;
}

RunResult run_haar_appendix(const ExperimentConfig& config, bool resume) {
  const std::vector<int>& ns = config.sweep.l_values;
  const std::vector<double>& s_grid = config.sweep.s_over_n_values;
  const std::vector<double>& alphas = config.sweep.alpha_values;
  const int n_alpha = static_cast<int>(alphas.size());
  const int n_s = static_cast<int>(s_grid.size());

  const std::vector<int> slots(ns.size() * static_cast<std::size_t>(n_s), n_alpha);
  const auto compute = [&](int point, int traj) {
    const int n = ns[static_cast<std::size_t>(point / n_s)];
    const double s_bits = s_grid[static_cast<std::size_t>(point % n_s)] * n;
    Rng rng = job_root(config, point, traj).child(1);
    const exact::DenseState state = exact::haar_fixed_purity_state(n, s_bits, rng);
    const std::vector<double> spectrum = exact::pauli_sq_spectrum(state);
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(n_alpha));
    for (const double alpha : alphas)
      vals.push_back(exact::sre_from_sq_spectrum(spectrum, alpha));
    return vals;
  };

  const JobStore store = run_jobs(config, resume, slots, compute);

  RunResult result;
  result.n_jobs = static_cast<int>(slots.size()) * config.n_trajectories;
  result.n_discarded = store.n_discarded;
  result.table.columns = {"n_qubits", "s_bits",  "s_over_n", "alpha",     "analytic",
                          "asymptotic", "mc_mean", "mc_err",   "n_ensemble"};

  for (std::size_t point = 0; point < slots.size(); ++point) {
    const int n = ns[point / static_cast<std::size_t>(n_s)];
    const double s_over_n = s_grid[point % static_cast<std::size_t>(n_s)];
    const double s_bits = s_over_n * n;
    exact::PauliSpectrumModel model;
    model.n_qubits = n;
    model.log_purity_bits = s_bits;
    for (int ai = 0; ai < n_alpha; ++ai) {
      const double alpha = alphas[static_cast<std::size_t>(ai)];
      const SlotStats m = slot_stats(store, static_cast<int>(point), ai);
      result.table.rows.push_back({double(n), s_bits, s_over_n, alpha,
                                   exact::haar_sre_analytic(model, alpha),
                                   exact::haar_sre_asymptotic(model, alpha), m.mean, m.err,
                                   double(m.n)});
    }
  }
  for (const double alpha : alphas)
    result.notes["crossover_s_over_n"][num_tag("alpha", alpha)] =
        exact::haar_sre_crossover_s_over_n(alpha);
  return result;
}

RunResult run_experiment(const ExperimentConfig& config, bool resume) {
  config.validate();
  switch (config.kind) {
    case ExperimentKind::steady_sre:
    case ExperimentKind::steady_bsmi_vs_l:
    case ExperimentKind::bsmi_vs_subsystem:
      return run_steady_state_sweep(config, resume);
    case ExperimentKind::dynamics_sre:
    case ExperimentKind::dynamics_bsmi:
      return run_dynamics(config, resume);
    case ExperimentKind::disjoint_smi_cross_ratio:
      return run_disjoint_smi(config, resume);
    case ExperimentKind::haar_appendix:
      return run_haar_appendix(config, resume);
  }
  throw InputError("unknown experiment kind");
}

namespace {

struct PlotSpec {
  int x = 1;
  int y = 2;
  int err = 0;       // 0: no error column
  int overlay = 0;   // 0: no second line (haar analytic)
  bool logx = false;
  bool logy = false;
};

PlotSpec plot_spec(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::steady_sre: return {1, 6, 7, 0, false, false};
    case ExperimentKind::steady_bsmi_vs_l: return {1, 6, 7, 0, true, false};
    case ExperimentKind::bsmi_vs_subsystem: return {7, 8, 9, 0, true, false};
    case ExperimentKind::dynamics_sre: return {7, 12, 0, 0, false, true};
    case ExperimentKind::dynamics_bsmi: return {7, 8, 9, 0, true, false};
    case ExperimentKind::disjoint_smi_cross_ratio: return {8, 9, 10, 0, true, true};
    case ExperimentKind::haar_appendix: return {3, 7, 8, 5, false, false};
  }
  return {};
}

}  // namespace

void write_outputs(const ExperimentConfig& config, const RunResult& result) {
  fs::create_directories(config.out_dir);
  const std::string base = to_string(config.kind);
  const fs::path dir(config.out_dir);

  {
    std::ofstream csv(dir / (base + ".csv"), std::ios::trunc);
    if (!csv) throw ConfigError("cannot write output file: " + (dir / (base + ".csv")).string());
    result.table.write_csv(csv);
  }

  {
    nlohmann::json fits = nlohmann::json::object();
    for (const auto& [key, f] : result.fits) fits[key] = f.to_json();
    const nlohmann::json sidecar = {
        {"schema_version", 1},
        {"kind", to_string(config.kind)},
        {"config", config.to_json()},
        {"config_digest", std::to_string(config_digest(config))},
        {"columns", result.table.columns},
        {"n_rows", result.table.rows.size()},
        {"n_jobs", result.n_jobs},
        {"n_discarded", result.n_discarded},
        {"fits", fits},
        {"notes", result.notes},
    };
    std::ofstream js(dir / (base + ".json"), std::ios::trunc);
    js << sidecar.dump(2) << "\n";
  }

  {
    const PlotSpec ps = plot_spec(config.kind);
    std::ofstream gp(dir / (base + ".gp"), std::ios::trunc);
    gp << "set datafile separator \",\"\n"
       << "set key autotitle columnhead\n"
       << "set term pngcairo size 900,620\n"
       << "set output \"" << base << ".png\"\n";
    if (ps.logx) gp << "set logscale x\n";
    if (ps.logy) gp << "set logscale y\n";
    gp << "plot \"" << base << ".csv\" using " << ps.x << ":" << ps.y;
    if (ps.err > 0) gp << ":" << ps.err << " with yerrorbars";
    else gp << " with points";
    gp << " title \"measured\"";
    if (ps.overlay > 0)
      gp << ", \"\" using " << ps.x << ":" << ps.overlay << " with lines title \"analytic\"";
    gp << "\n";
  }

  std::error_code ec;
  fs::remove(partial_path(config), ec);
  fs::remove_all(checkpoints_dir(config), ec);
}

}  // namespace ffmagic
