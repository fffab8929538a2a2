from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rankforge import autodiff as ad
from rankforge.graph import comparison_matrices, graph_laplacian
from rankforge.metrics import MetricConfig, upset_ratio
from rankforge.unfold import (
    ProximalConfig,
    build_reducer,
    check_step_bound,
    fast_q_mul,
    proximal_steps,
    reduce_problem,
    spherical_project,
)

from conftest import random_graph


def random_laplacian(rng, n):
    B = rng.uniform(size=(n, n))
    return graph_laplacian(B + B.T - 2 * np.diag(np.diag(B)))


class TestReducer:
    def test_n2(self):
        h = 1 / np.sqrt(2)
        np.testing.assert_allclose(build_reducer(2).Q, [[h, h], [-h, h]], atol=1e-15)

    @pytest.mark.parametrize("n", [2, 3, 5, 17, 64])
    def test_invariants(self, n):
        Q = build_reducer(n).Q
        assert np.abs(Q @ Q.T - np.eye(n)).max() < 1e-10
        assert np.abs(Q.T @ Q - np.eye(n)).max() < 1e-10
        e1 = np.zeros(n)
        e1[0] = np.sqrt(n)
        assert np.abs(Q @ np.ones(n) - e1).max() < 1e-10
        assert not np.tril(Q, k=-2).any()
        assert abs(abs(np.linalg.det(Q)) - 1) < 1e-10

    def test_closed_form_entries(self):
        n = 6
        Q = build_reducer(n).Q
        for i in range(2, n + 1):
            assert Q[i - 1, i - 2] == pytest.approx(-np.sqrt((n - i + 1) / (n - i + 2)))
            for j in range(i, n + 1):
                assert Q[i - 1, j - 1] == pytest.approx(np.sqrt(1 / ((n - i + 1) * (n - i + 2))))

    def test_too_small(self):
        with pytest.raises(ValueError):
            build_reducer(1)


class TestFastMul:
    def test_identity(self):
        red = build_reducer(9)
        np.testing.assert_allclose(fast_q_mul(red, np.eye(9)), red.Q, atol=1e-14)

    def test_ones(self):
        red = build_reducer(9)
        out = fast_q_mul(red, np.ones(9))
        assert out[0] == pytest.approx(3.0) and np.abs(out[1:]).max() < 1e-12

    def test_random(self, rng):
        red = build_reducer(17)
        X = rng.normal(size=(17, 5))
        assert np.abs(fast_q_mul(red, X) - red.Q @ X).max() < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fast_q_mul(build_reducer(4), np.ones(5))

    def test_tensor_gradient(self, rng):
        red = build_reducer(6)
        W = rng.normal(size=(6, 2))
        X = rng.normal(size=(6, 2))
        with ad.Tape() as tape:
            t = tape.watch(X)
            loss = ad.sum(fast_q_mul(red, t) * W)
        np.testing.assert_allclose(tape.gradient(loss, [t])[0], red.Q.T @ W, atol=1e-12)


class TestSpherical:
    def test_basic(self):
        np.testing.assert_allclose(spherical_project(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_zero(self):
        np.testing.assert_array_equal(spherical_project(np.zeros(3)), [1, 0, 0])

    @given(arrays(np.float64, 5, elements=st.floats(-100, 100)))
    def test_idempotent(self, x):
        p = spherical_project(x)
        np.testing.assert_allclose(spherical_project(p), p, atol=1e-15)


class TestProximal:
    def test_no_steps_is_constrained_projection(self, rng):
        n = 8
        red = build_reducer(n)
        r0 = rng.normal(size=n)
        r = proximal_steps(r0, random_laplacian(rng, n), red, ProximalConfig(gamma_steps=0))
        c = r0 - r0.mean()
        np.testing.assert_allclose(r, c / np.linalg.norm(c), atol=1e-12)

    @given(st.integers(0, 10_000), st.integers(2, 20))
    def test_output_constraints(self, seed, n):
        rng = np.random.default_rng(seed)
        r = proximal_steps(rng.normal(size=n), random_laplacian(rng, n), build_reducer(n))
        assert abs(np.linalg.norm(r) - 1) < 1e-10
        assert abs(r.sum()) < 1e-10

    def test_constant_input_uses_e1(self, rng):
        n = 5
        r = proximal_steps(np.ones(n), random_laplacian(rng, n), build_reducer(n), ProximalConfig(gamma_steps=0))
        np.testing.assert_allclose(r, build_reducer(n).Q[1], atol=1e-15)

    @given(st.integers(0, 10_000), st.integers(2, 15))
    def test_reduction_equivalence(self, seed, n):
        rng = np.random.default_rng(seed)
        red = build_reducer(n)
        L = random_laplacian(rng, n)
        r = rng.normal(size=n)
        r -= r.mean()
        y = (red.Q @ r)[1:]
        prob = reduce_problem(r, L, red)
        assert abs(y @ prob.Ltil @ y - r @ L @ r) < 1e-9 * max(1.0, abs(r @ L @ r))
        np.testing.assert_allclose(prob.Ltil, prob.Ltil.T, atol=1e-10)
        assert np.linalg.eigvalsh(prob.Ltil).min() > -1e-10
        assert np.linalg.norm(prob.y) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_descent_within_bound(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 25))
        history: list[float] = []
        cfg = ProximalConfig(gamma_steps=20, alphas=(1 / (5 * (n - 1)),) * 20)
        proximal_steps(rng.normal(size=n), random_laplacian(rng, n), build_reducer(n), cfg, history=history)
        assert np.all(np.diff(history) <= 1e-12 * max(1.0, history[0]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        n = 7
        g = random_graph(rng, n)
        cm = comparison_matrices(g)
        red = build_reducer(n)
        L = random_laplacian(rng, n)
        r0 = rng.normal(size=n)
        alphas = rng.uniform(0.05, 0.3, size=5)
        mcfg = MetricConfig(transform="affine_half")

        def f(r, a):
            return upset_ratio(cm, proximal_steps(r, L, red, alphas=a), mcfg)

        with ad.Tape() as tape:
            tr, ta = tape.watch(r0), tape.watch(alphas)
            loss = upset_ratio(cm, proximal_steps(tr, L, red, alphas=ta), mcfg)
        gr, ga = tape.gradient(loss, [tr, ta])
        h = 1e-6
        fr = np.array([(f(r0 + e, alphas) - f(r0 - e, alphas)) / (2 * h) for e in np.eye(n) * h])
        fa = np.array([(f(r0, alphas + e) - f(r0, alphas - e)) / (2 * h) for e in np.eye(5) * h])
        assert np.linalg.norm(gr - fr) / np.linalg.norm(fr) < 1e-4
        assert np.linalg.norm(ga - fa) / np.linalg.norm(fa) < 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            proximal_steps(np.ones(4), np.eye(5), build_reducer(4))


class TestConfig:
    def test_defaults(self):
        np.testing.assert_allclose(ProximalConfig().alphas_for(11), np.full(5, 0.1))

    @pytest.mark.parametrize("kw", [{"gamma_steps": -1}, {"gamma_steps": 2, "alphas": (0.1,)},
                                    {"gamma_steps": 1, "alphas": (0.0,)}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ProximalConfig(**kw)

    def test_bound(self):
        n = 350
        assert check_step_bound(ProximalConfig(gamma_steps=1, alphas=(1 / (8 * (n - 1)),)), n) == []
        assert len(check_step_bound(ProximalConfig(gamma_steps=1, alphas=(1.0,)), n)) == 1
        assert len(check_step_bound(ProximalConfig(gamma_steps=1, alphas=(1 / (4 * (n - 1)),)), n)) == 1
        assert len(check_step_bound(ProximalConfig(), n)) == 5
