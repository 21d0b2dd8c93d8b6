"""End-to-end checks that the bindings expose working core operations."""

import json
import math

import numpy as np
import pytest

import ffmagic as ff


def scrambled_state(n_sites, seed, depth):
    st = ff.GaussianState.product_state(n_sites)
    spec = ff.CircuitSpec()
    spec.n_sites = n_sites
    spec.depth = depth
    spec.protocol = ff.Protocol.unitary()
    spec.seed = seed
    ff.run_circuit(spec, st)
    return st


def test_version_string():
    assert isinstance(ff.__version__, str) and ff.__version__


def test_gaussian_evolution_and_entropy():
    st = ff.GaussianState.product_state(8)
    spec = ff.CircuitSpec()
    spec.n_sites = 8
    spec.depth = 16
    spec.protocol = ff.Protocol.projective(0.3)
    spec.seed = 11
    records = ff.run_circuit(spec, st)
    assert records, "projective protocol at p=0.3 must measure something"
    for r in records[:5]:
        assert r.outcome in (-1, 1)
        assert 0.0 <= r.born_probability <= 1.0

    region = ff.Region.interval(0, 4, 8)
    s1 = st.entanglement_entropy(region, 1)
    s2 = st.entanglement_entropy(region, 2)
    assert s1 >= -1e-12
    assert s2 <= s1 + 1e-12

    gamma = st.covariance()
    assert np.allclose(gamma @ gamma.T, np.eye(16), atol=1e-9)
    assert np.allclose(gamma, -gamma.T, atol=1e-12)


def test_projection_pins_the_mode():
    st = scrambled_state(6, seed=5, depth=12)
    st.project_mode(2, +1)
    assert st.expectation_z(2) == pytest.approx(1.0, abs=1e-9)


def test_sampler_matches_string_probability():
    st = scrambled_state(6, seed=9, depth=12)
    rng = ff.Rng(123)
    batch = ff.sample_strings(st, 50, rng)
    assert batch.n_samples == 50
    assert len(batch.strings) == 50
    for s, lp in zip(batch.strings[:10], batch.log_probs[:10]):
        assert s.weight() % 2 == 0
        p = ff.string_probability(st, s)
        assert p == pytest.approx(math.exp(lp), rel=1e-10)
    hexes = [s.to_hex() for s in batch.strings]
    round_trip = ff.MajoranaString.from_hex(hexes[0], 12)
    assert round_trip.bits == batch.strings[0].bits


def test_estimator_agrees_with_dense_oracle():
    st = scrambled_state(4, seed=17, depth=10)
    ds = ff.exact.DenseState.computational(4)
    spec = ff.CircuitSpec()
    spec.n_sites = 4
    spec.depth = 10
    spec.protocol = ff.Protocol.unitary()
    spec.seed = 17
    ff.exact.run_circuit_dense(spec, ds)

    exact_m2 = ff.exact.sre_from_sq_spectrum(ff.exact.majorana_sq_spectrum(ds), 2.0)
    rng = ff.Rng(2024)
    est = ff.estimate_sre(st, 2.0, 20000, rng)
    assert est.value == pytest.approx(exact_m2, abs=5 * est.std_error + 1e-9)
    d = est.as_dict()
    assert d["n_samples"] == 20000 and d["alpha"] == 2.0


def test_stabilizer_state_has_zero_magic():
    st = ff.GaussianState.product_state(5, [0, 1, 1, 0, 1])
    rng = ff.Rng(1)
    est = ff.estimate_sre(st, 2.0, 500, rng)
    assert abs(est.value) < 1e-12
    assert est.std_error < 1e-12


def test_smi_of_product_state_vanishes():
    st = ff.GaussianState.product_state(6)
    rng = ff.Rng(4)
    smi = ff.estimate_smi(st, ff.Region.interval(0, 3, 6), 2.0, 500, rng)
    assert abs(smi.i_alpha) < 1e-12
    assert smi.sign == -1


def test_input_errors_are_value_errors():
    st = ff.GaussianState.product_state(4)
    rng = ff.Rng(1)
    with pytest.raises(ValueError):
        ff.estimate_sre(st, 0.0, 100, rng)
    with pytest.raises(ValueError):
        ff.estimate_smi(st, ff.Region.interval(0, 2, 4), 1.5, 100, rng)
    with pytest.raises(ValueError):
        ff.Region.interval(0, 9, 4)
    with pytest.raises(ValueError):
        ff.cross_ratio(0, 0, 1, 2, 8)


def test_cross_ratio_canonical_value():
    assert ff.cross_ratio(0, 4, 8, 12, 16) == pytest.approx(0.5, abs=1e-14)


def test_haar_closed_form_and_crossover():
    model = ff.exact.PauliSpectrumModel(4, 0.0)
    m2 = ff.exact.haar_sre_analytic(model, 2.0)
    assert m2 == pytest.approx(1.4786676812509052, abs=1e-12)
    assert ff.exact.haar_sre_crossover_s_over_n(1.5) == pytest.approx(1 / 3)


def test_harness_run_experiment_dict(tmp_path):
    config = {
        "version": 1,
        "kind": "steady_sre",
        "sweep": {"l": [6, 8], "p": [0.3], "alpha": [1.0]},
        "n_trajectories": 2,
        "n_samples": 100,
        "out_dir": str(tmp_path),
        "master_seed": 77,
    }
    out = ff.harness.run_experiment(config)
    assert out["columns"][0] == "l"
    assert len(out["rows"]) == 2
    assert out["n_jobs"] == 4 and out["n_discarded"] == 0

    again = ff.harness.run_experiment(config)
    assert again["rows"] == out["rows"], "same seed must reproduce the table exactly"

    with pytest.raises(ValueError):
        bad = dict(config)
        bad["sweep"] = {"l": [6], "p": [1.5], "alpha": [1.0]}
        ff.harness.run_experiment(bad)


def test_harness_cli_writes_outputs(tmp_path):
    config = {
        "version": 1,
        "kind": "steady_sre",
        "sweep": {"l": [6], "p": [0.3], "alpha": [2.0]},
        "n_trajectories": 2,
        "n_samples": 100,
        "out_dir": str(tmp_path / "out"),
        "master_seed": 5,
    }
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(config))
    assert ff.harness.main(["steady-sre", "--config", str(cfg)]) == 0
    sidecar = json.loads((tmp_path / "out" / "steady_sre.json").read_text())
    assert sidecar["kind"] == "steady_sre"
    assert (tmp_path / "out" / "steady_sre.csv").exists()
    assert ff.harness.main(["steady-sre", "--config", str(tmp_path / "nope.json")]) == 2


def test_fit_recovers_exponent():
    x = [0.5 * i for i in range(1, 9)]
    y = [2.0 * xi**0.75 for xi in x]
    r = ff.harness.fit(x, y, ff.harness.FitModel.power_fit)
    assert r.a == pytest.approx(0.75, abs=1e-10)
    assert r.c == pytest.approx(2.0, abs=1e-10)
    assert r.as_dict()["model"] == "power_fit"
