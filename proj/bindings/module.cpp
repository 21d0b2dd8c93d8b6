#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ffmagic/circuit.hpp"
#include "ffmagic/errors.hpp"
#include "ffmagic/estimators.hpp"
#include "ffmagic/exact.hpp"
#include "ffmagic/gaussian_state.hpp"
#include "ffmagic/harness.hpp"
#include "ffmagic/linalg.hpp"
#include "ffmagic/rng.hpp"
#include "ffmagic/sampler.hpp"

namespace py = pybind11;
using namespace ffmagic;

namespace {

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

SkewMatrix state_covariance(const GaussianState& state) { return SkewMatrix(state.covariance()); }

}  // namespace

PYBIND11_MODULE(_ffmagic, m) {
  m.doc() = "Monitored free-fermion circuits: Gaussian evolution, Majorana-string "
            "sampling, stabilizer Renyi entropy estimation.";
#ifdef FFMAGIC_VERSION
  m.attr("__version__") = FFMAGIC_VERSION;
#else
  m.attr("__version__") = "dev";
#endif

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  py::class_<Rng>(m, "Rng", "Deterministic splittable stream; children derive from the seed.")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("child", &Rng::child, py::arg("label"))
      .def("uniform01", &Rng::uniform01)
      .def("uniform", &Rng::uniform, py::arg("lo"), py::arg("hi"))
      .def("normal", &Rng::normal)
      .def("bernoulli", &Rng::bernoulli, py::arg("p"))
      .def_property_readonly("seed", &Rng::seed)
      .def("__repr__",
           [](const Rng& r) { return "Rng(seed=" + std::to_string(r.seed()) + ")"; });

  py::class_<Region>(m, "Region", "Set of mode indices on the periodic chain.")
      .def(py::init<std::vector<int>>(), py::arg("sites"))
      .def_static("interval", &Region::interval, py::arg("first"), py::arg("count"),
                  py::arg("n_modes"))
      .def_static("complement", &Region::complement, py::arg("region"), py::arg("n_modes"))
      .def_readonly("sites", &Region::sites)
      .def("size", &Region::size)
      .def("contains", &Region::contains, py::arg("site"))
      .def("majoranas", &Region::majoranas)
      .def("__len__", &Region::size)
      .def("__repr__", [](const Region& r) {
        std::ostringstream os;
        os << "Region([";
        for (std::size_t i = 0; i < r.sites.size(); ++i)
          os << (i ? "," : "") << r.sites[i];
        os << "])";
        return os.str();
      });

  py::class_<GaussianState>(m, "GaussianState",
                            "Pure fermionic Gaussian state tracked by its annihilator rows.")
      .def_static("product_state", &GaussianState::product_state, py::arg("n_modes"),
                  py::arg("bits") = std::vector<int>{})
      .def_static("from_alpha", &GaussianState::from_alpha, py::arg("alpha"))
      .def_static("tensor_product", &GaussianState::tensor_product, py::arg("a"), py::arg("b"))
      .def_property_readonly("n_modes", &GaussianState::n_modes)
      .def("alpha", [](const GaussianState& s) { return CMatrix(s.alpha()); })
      .def("covariance", [](const GaussianState& s) { return Matrix(s.covariance()); })
      .def("expectation_z", &GaussianState::expectation_z, py::arg("site"))
      .def("entanglement_entropy", &GaussianState::entanglement_entropy, py::arg("region"),
           py::arg("renyi_index"))
      .def("project_mode", &GaussianState::project_mode, py::arg("site"), py::arg("outcome"))
      .def("reorthonormalize", &GaussianState::reorthonormalize)
      .def("orthonormality_defect", &GaussianState::orthonormality_defect)
      .def("save", &GaussianState::save, py::arg("path"))
      .def_static("load", &GaussianState::load, py::arg("path"))
      .def("__repr__", [](const GaussianState& s) {
        return "GaussianState(n_modes=" + std::to_string(s.n_modes()) + ")";
      });

  py::enum_<ProtocolKind>(m, "ProtocolKind")
      .value("unitary", ProtocolKind::unitary)
      .value("projective", ProtocolKind::projective)
      .value("weak", ProtocolKind::weak);

  py::class_<Protocol>(m, "Protocol")
      .def_static("unitary", &Protocol::unitary)
      .def_static("projective", &Protocol::projective, py::arg("p"))
      .def_static("weak", &Protocol::weak, py::arg("beta"))
      .def_readwrite("kind", &Protocol::kind)
      .def_readwrite("p", &Protocol::p)
      .def_readwrite("beta", &Protocol::beta);

  py::class_<CircuitSpec>(m, "CircuitSpec",
                          "Brickwork circuit on the periodic chain: odd bonds, even bonds, "
                          "then one measurement layer per step.")
      .def(py::init<>())
      .def_readwrite("n_sites", &CircuitSpec::n_sites)
      .def_readwrite("depth", &CircuitSpec::depth)
      .def_readwrite("protocol", &CircuitSpec::protocol)
      .def_readwrite("seed", &CircuitSpec::seed)
      .def_readwrite("forced_outcomes", &CircuitSpec::forced_outcomes);

  py::class_<GateParams>(m, "GateParams")
      .def(py::init<>())
      .def_readwrite("bond", &GateParams::bond)
      .def_readwrite("kappa", &GateParams::kappa);

  py::class_<MeasurementRecord>(m, "MeasurementRecord")
      .def_readonly("time_step", &MeasurementRecord::time_step)
      .def_readonly("site", &MeasurementRecord::site)
      .def_readonly("kind", &MeasurementRecord::kind)
      .def_readonly("outcome", &MeasurementRecord::outcome)
      .def_readonly("born_probability", &MeasurementRecord::born_probability)
      .def_readonly("forced", &MeasurementRecord::forced)
      .def_readonly("flipped", &MeasurementRecord::flipped);

  m.def("sample_gate", &sample_gate, py::arg("bond"), py::arg("gates"));
  m.def("run_circuit", &run_circuit, py::arg("spec"), py::arg("state"),
        py::arg("observer") = StepObserver{},
        "Evolves the state in place; returns the measurement records.");

  py::class_<MajoranaString>(m, "MajoranaString")
      .def(py::init([](std::vector<std::uint8_t> bits) {
             return MajoranaString{std::move(bits)};
           }),
           py::arg("bits"))
      .def_static("from_hex", &MajoranaString::from_hex, py::arg("hex"), py::arg("n_bits"))
      .def_readonly("bits", &MajoranaString::bits)
      .def("weight", &MajoranaString::weight)
      .def("support", &MajoranaString::support)
      .def("to_hex", &MajoranaString::to_hex)
      .def("__len__", &MajoranaString::size);

  py::class_<SampleBatch>(m, "SampleBatch")
      .def_readonly("strings", &SampleBatch::strings)
      .def_readonly("log_probs", &SampleBatch::log_probs)
      .def_readonly("support", &SampleBatch::support)
      .def_readonly("n_samples", &SampleBatch::n_samples);

  m.def(
      "string_probability",
      [](const GaussianState& state, const MajoranaString& x) {
        return string_probability(state_covariance(state), x);
      },
      py::arg("state"), py::arg("string"),
      "Born weight det(Gamma|_x) / det(I + Gamma) of a Majorana string.");
  m.def(
      "sample_strings",
      [](const GaussianState& state, int n_samples, Rng& rng, const std::vector<Region>& support) {
        return sample_batch(state_covariance(state), n_samples, rng, support);
      },
      py::arg("state"), py::arg("n_samples"), py::arg("rng"),
      py::arg("support") = std::vector<Region>{},
      "Exact draws from the string distribution, optionally restricted to regions.");

  py::class_<EstimateResult>(m, "EstimateResult")
      .def_readonly("value", &EstimateResult::value)
      .def_readonly("std_error", &EstimateResult::std_error)
      .def_readonly("std_error_jackknife", &EstimateResult::std_error_jackknife)
      .def_readonly("n_samples", &EstimateResult::n_samples)
      .def_readonly("alpha", &EstimateResult::alpha)
      .def_readonly("support", &EstimateResult::support)
      .def_readonly("seed", &EstimateResult::seed)
      .def("as_dict", [](const EstimateResult& r) { return json_to_py(r.to_json()); })
      .def("__repr__", [](const EstimateResult& r) {
        std::ostringstream os;
        os << "EstimateResult(value=" << r.value << ", std_error=" << r.std_error << ")";
        return os.str();
      });

  py::class_<SmiResult>(m, "SmiResult")
      .def_readonly("i_alpha", &SmiResult::i_alpha)
      .def_readonly("std_error", &SmiResult::std_error)
      .def_readonly("part_a", &SmiResult::part_a)
      .def_readonly("part_b", &SmiResult::part_b)
      .def_readonly("joint", &SmiResult::joint)
      .def_readonly("alpha", &SmiResult::alpha)
      .def_readonly("sign", &SmiResult::sign)
      .def("as_dict", [](const SmiResult& r) { return json_to_py(r.to_json()); })
      .def("__repr__", [](const SmiResult& r) {
        std::ostringstream os;
        os << "SmiResult(i_alpha=" << r.i_alpha << ", std_error=" << r.std_error << ")";
        return os.str();
      });

  m.def("estimate_sre", &estimate_sre, py::arg("state"), py::arg("alpha"), py::arg("n_samples"),
        py::arg("rng"), py::arg("support") = std::vector<Region>{},
        "Monte Carlo stabilizer Renyi entropy from Majorana-string samples.");
  m.def("estimate_smi", &estimate_smi, py::arg("state"), py::arg("region_a"), py::arg("alpha"),
        py::arg("n_samples"), py::arg("rng"),
        "Signed stabilizer mutual information for the bipartition (A, complement).");
  m.def("estimate_fermionic_smi_disjoint", &estimate_fermionic_smi_disjoint, py::arg("state"),
        py::arg("region_a"), py::arg("region_b"), py::arg("alpha"), py::arg("n_samples"),
        py::arg("rng"),
        "Mutual information of two disjoint regions; the joint term samples strings "
        "supported inside their union.");
  m.def("cross_ratio", &cross_ratio, py::arg("x1"), py::arg("x2"), py::arg("x3"), py::arg("x4"),
        py::arg("n_sites"), "Conformal cross ratio with chord distances on the ring.");

  // Dense-statevector reference for small systems.
  py::module_ ex = m.def_submodule("exact", "Brute-force reference for small qubit counts.");

  py::class_<exact::DenseState>(ex, "DenseState")
      .def_static("computational", &exact::DenseState::computational, py::arg("n_qubits"),
                  py::arg("bits") = std::vector<int>{})
      .def_static("pure", &exact::DenseState::pure, py::arg("psi"))
      .def_static("mixed", &exact::DenseState::mixed, py::arg("rho"))
      .def_property_readonly("n_qubits", &exact::DenseState::n_qubits)
      .def_property_readonly("is_pure", &exact::DenseState::is_pure)
      .def("psi", [](const exact::DenseState& s) { return exact::Vector(s.psi()); })
      .def("rho", [](const exact::DenseState& s) { return CMatrix(s.rho()); })
      .def("purity", &exact::DenseState::purity);

  ex.def("run_circuit_dense", &exact::run_circuit_dense, py::arg("spec"), py::arg("state"),
         py::arg("observer") = exact::DenseObserver{});
  ex.def("exact_sre", &exact::exact_sre, py::arg("state"), py::arg("alpha"));
  ex.def("exact_sre_majorana", &exact::exact_sre_majorana, py::arg("state"), py::arg("alpha"));
  ex.def("pauli_sq_spectrum", &exact::pauli_sq_spectrum, py::arg("state"));
  ex.def("majorana_sq_spectrum", &exact::majorana_sq_spectrum, py::arg("state"));
  ex.def("sre_from_sq_spectrum", &exact::sre_from_sq_spectrum, py::arg("sq"), py::arg("alpha"));
  ex.def("subsystem_entropy", &exact::subsystem_entropy, py::arg("state"), py::arg("region"),
         py::arg("renyi_index"));
  ex.def("covariance", &exact::covariance, py::arg("state"));
  ex.def("haar_fixed_purity_state", &exact::haar_fixed_purity_state, py::arg("n_qubits"),
         py::arg("log_purity_bits"), py::arg("rng"));

  py::class_<exact::PauliSpectrumModel>(ex, "PauliSpectrumModel")
      .def(py::init([](int n_qubits, double log_purity_bits, double b, double b1) {
             exact::PauliSpectrumModel model;
             model.n_qubits = n_qubits;
             model.log_purity_bits = log_purity_bits;
             model.b = b;
             model.b1 = b1;
             return model;
           }),
           py::arg("n_qubits"), py::arg("log_purity_bits"), py::arg("b") = 1.0,
           py::arg("b1") = 1.0)
      .def_readwrite("n_qubits", &exact::PauliSpectrumModel::n_qubits)
      .def_readwrite("log_purity_bits", &exact::PauliSpectrumModel::log_purity_bits)
      .def_readwrite("b", &exact::PauliSpectrumModel::b)
      .def_readwrite("b1", &exact::PauliSpectrumModel::b1)
      .def("sigma", &exact::PauliSpectrumModel::sigma);

  ex.def("haar_sre_analytic", &exact::haar_sre_analytic, py::arg("model"), py::arg("alpha"));
  ex.def("haar_sre_asymptotic", &exact::haar_sre_asymptotic, py::arg("model"), py::arg("alpha"));
  ex.def("haar_sre_crossover_s_over_n", &exact::haar_sre_crossover_s_over_n, py::arg("alpha"));

  // Experiment harness: the same engine the command line drives.
  py::module_ hs = m.def_submodule("harness", "Experiment sweeps, fits, and output files.");

  py::enum_<FitModel>(hs, "FitModel")
      .value("linear_fit", FitModel::linear_fit)
      .value("log_fit", FitModel::log_fit)
      .value("power_fit", FitModel::power_fit)
      .value("exp_fit", FitModel::exp_fit);

  py::class_<FitResult>(hs, "FitResult")
      .def_readonly("model", &FitResult::model)
      .def_readonly("a", &FitResult::a)
      .def_readonly("a_err", &FitResult::a_err)
      .def_readonly("c", &FitResult::c)
      .def_readonly("c_err", &FitResult::c_err)
      .def_readonly("r_squared", &FitResult::r_squared)
      .def_readonly("n_points", &FitResult::n_points)
      .def("as_dict", [](const FitResult& r) { return json_to_py(r.to_json()); });

  hs.def(
      "fit",
      [](const std::vector<double>& x, const std::vector<double>& y, FitModel model) {
        return fit(x, y, model);
      },
      py::arg("x"), py::arg("y"), py::arg("model"));
  hs.def("record_steps", &record_steps, py::arg("depth"), py::arg("stride"),
         "Zero-based step indices to record; stride 0 selects the geometric schedule.");

  hs.def(
      "run_experiment",
      [](const py::dict& config, bool resume) {
        const auto j = nlohmann::json::parse(
            py::module_::import("json").attr("dumps")(config).cast<std::string>());
        ExperimentConfig c = ExperimentConfig::from_json(j);
        if (!j.contains("kind"))
          throw ConfigError("config dict needs a 'kind' entry");
        const RunResult r = run_experiment(c, resume);
        py::dict out;
        out["columns"] = r.table.columns;
        out["rows"] = r.table.rows;
        py::dict fits;
        for (const auto& [name, fr] : r.fits) fits[py::str(name)] = json_to_py(fr.to_json());
        out["fits"] = fits;
        out["notes"] = json_to_py(r.notes);
        out["n_jobs"] = r.n_jobs;
        out["n_discarded"] = r.n_discarded;
        return out;
      },
      py::arg("config"), py::arg("resume") = false,
      "Runs one experiment from a config dict (same schema as the CLI) and returns "
      "the table, fits, and notes. Does not write output files.");

  hs.def(
      "main", [](const std::vector<std::string>& args) { return run_cli(args); },
      py::arg("args"), "The command-line entry point; returns the exit code.");
}
