from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankforge.baselines import serial_rank
from rankforge.graph import comparison_matrices, load_edge_list
from rankforge.metrics import kendall_tau, upset_naive
from rankforge.synth import EROConfig, generate, generate_with_outliers, grid, load_truth, save_truth, sweep


@pytest.mark.parametrize("kw", [{"n": 1}, {"p": 0.0}, {"p": 1.5}, {"eta": 1.0}, {"eta": -0.1}, {"style": "normal"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        EROConfig(**kw)


@pytest.mark.parametrize("style", ["uniform", "gamma"])
def test_noiseless_complete_is_consistent(style):
    g, s = generate(EROConfig(n=40, p=1.0, eta=0.0, style=style, seed=3))
    assert upset_naive(comparison_matrices(g), s) == 0


def test_noiseless_serialrank_recovers():
    g, s = generate(EROConfig(n=80, p=1.0, eta=0.0, seed=1))
    assert kendall_tau(serial_rank(g), s) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(2, 25), st.floats(0.05, 1.0), st.floats(0.0, 0.9), st.sampled_from(["uniform", "gamma"]),
       st.integers(0, 1000))
def test_structure(n, p, eta, style, seed):
    g, s = generate(EROConfig(n=n, p=p, eta=eta, style=style, seed=seed))
    A = g.A
    assert np.all(A >= 0) and np.all(np.diag(A) == 0)
    assert not np.any((A > 0) & (A.T > 0))
    assert len(s) == n
    if style == "uniform":
        assert s.min() >= 0 and s.max() <= 1
    else:
        assert s.min() > 0


@pytest.mark.parametrize("seed", range(10))
def test_no_three_cycles_without_noise(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 31))
    g, _ = generate(EROConfig(n=n, p=float(rng.uniform(0.2, 1.0)), eta=0.0, seed=seed))
    C = np.sign(g.A - g.A.T)
    for i, j, k in itertools.permutations(range(n), 3):
        assert not (C[i, j] > 0 and C[j, k] > 0 and C[k, i] > 0)


@pytest.mark.parametrize("eta", [0.1, 0.5, 0.8])
def test_outlier_fraction(eta):
    observed = outliers = 0
    for seed in range(10):
        g, s, mask = generate_with_outliers(EROConfig(n=100, p=0.3, eta=eta, seed=seed))
        iu = np.triu_indices(100, k=1)
        obs = (g.A + g.A.T)[iu] > 0
        observed += int(obs.sum())
        outliers += int(mask[iu][obs].sum())
    sd = np.sqrt(observed * eta * (1 - eta))
    assert abs(outliers - eta * observed) <= 3 * sd


def test_outlier_values_within_range():
    g, s, mask = generate_with_outliers(EROConfig(n=60, p=1.0, eta=0.5, seed=4))
    spread = s.max() - s.min()
    assert g.A.max() <= spread + 1e-12


def test_deterministic():
    a, sa = generate(EROConfig(n=30, p=0.4, eta=0.2, seed=9))
    b, sb = generate(EROConfig(n=30, p=0.4, eta=0.2, seed=9))
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(sa, sb)


def test_truth_round_trip(tmp_path):
    s = np.random.default_rng(0).gamma(0.5, size=12)
    save_truth(s, tmp_path / "t.tsv")
    np.testing.assert_array_equal(load_truth(tmp_path / "t.tsv"), s)


def test_grid_size():
    assert len(grid([0.05, 1.0], [round(0.1 * k, 1) for k in range(9)])) == 18


def test_empty_sweep(tmp_path):
    manifest = sweep([], tmp_path)
    assert manifest["entries"] == []
    assert json.loads((tmp_path / "manifest.json").read_text())["entries"] == []


def test_sweep_files_and_determinism(tmp_path):
    configs = grid([0.5, 1.0], [0.0, 0.3], seeds=[0, 1], n=20)
    first = sweep(configs, tmp_path / "a")
    second = sweep(configs, tmp_path / "b")
    assert len(first["entries"]) == 8
    for ea, eb in zip(first["entries"], second["entries"]):
        assert (tmp_path / "a" / ea["graph"]).read_bytes() == (tmp_path / "b" / eb["graph"]).read_bytes()
        assert (tmp_path / "a" / ea["truth"]).read_bytes() == (tmp_path / "b" / eb["truth"]).read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    e = first["entries"][0]
    g = load_edge_list(tmp_path / "a" / e["graph"], n=20)
    ref, _ = generate(EROConfig(**e["config"]))
    np.testing.assert_array_equal(g.A, ref.A)
