"""Unrolled Fiedler-vector solver.

Minimising r^T L r over unit-norm, zero-sum r is rotated by an orthogonal
Hessenberg matrix Q (with Q 1 = sqrt(n) e_1) into an (n-1)-dimensional
problem on the sphere, which a few projected gradient steps then approximate.
Every step is written with :mod:`rankforge.autodiff` ops so that gradients
reach the initial scores, the Laplacian and the step sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad

__all__ = [
    "OrthogonalReducer",
    "ProximalConfig",
    "ReducedProblem",
    "build_reducer",
    "fast_q_mul",
    "spherical_project",
    "reduce_problem",
    "proximal_steps",
    "check_step_bound",
]


@dataclass(frozen=True)
class OrthogonalReducer:
    n: int
    Q: np.ndarray
    upper: np.ndarray  # value shared by row i on and right of the diagonal
    sub: np.ndarray  # magnitude of the subdiagonal entry of row i (row 0 unused)


@dataclass(frozen=True)
class ProximalConfig:
    gamma_steps: int = 5
    alphas: tuple[float, ...] | None = None  # None -> 1/(n-1) per step
    trainable_alphas: bool = True

    def __post_init__(self):
        if self.gamma_steps < 0:
            raise ValueError("gamma_steps must be nonnegative")
        if self.alphas is not None:
            if len(self.alphas) != self.gamma_steps:
                raise ValueError("need one alpha per proximal step")
            if any(a <= 0 for a in self.alphas):
                raise ValueError("alphas must be positive")

    def alphas_for(self, n: int) -> np.ndarray:
        if self.alphas is not None:
            return np.array(self.alphas, dtype=np.float64)
        return np.full(self.gamma_steps, 1.0 / (n - 1))


@dataclass(frozen=True)
class ReducedProblem:
    Ltil: np.ndarray
    y: np.ndarray


def build_reducer(n: int) -> OrthogonalReducer:
    if n < 2:
        raise ValueError("n must be at least 2")
    i = np.arange(1, n + 1, dtype=np.float64)  # 1-based row index
    m = n - i + 1
    upper = np.empty(n)
    upper[0] = np.sqrt(1.0 / n)
    upper[1:] = np.sqrt(1.0 / (m[1:] * (m[1:] + 1)))
    sub = np.zeros(n)
    sub[1:] = np.sqrt(m[1:] / (m[1:] + 1))
    Q = np.triu(np.broadcast_to(upper[:, None], (n, n)))
    Q[np.arange(1, n), np.arange(n - 1)] = -sub[1:]
    Q.setflags(write=False)
    return OrthogonalReducer(n, Q, upper, sub)


def fast_q_mul(red: OrthogonalReducer, X):
    """Q @ X in O(n m) via suffix sums plus a shifted row scaling.

    Accepts arrays or tensors; a tensor input yields a tensor.
    """
    is_t = isinstance(X, ad.Tensor)
    Xv = ad.value_of(X)
    if Xv.shape[0] != red.n:
        raise ValueError(f"expected {red.n} rows, got {Xv.shape[0]}")
    col = (lambda v: v[:, None]) if Xv.ndim == 2 else (lambda v: v)
    if not is_t:
        out = np.flip(np.cumsum(np.flip(Xv, axis=0), axis=0), axis=0) * col(red.upper)
        out[1:] -= col(red.sub[1:]) * Xv[:-1]
        return out
    suffix = ad.rev_cumsum(X, axis=0) * col(red.upper)
    shifted = ad.concat([ad.Tensor(np.zeros((1,) + Xv.shape[1:])), X[:-1] * col(red.sub[1:])], axis=0)
    return suffix - shifted


def spherical_project(x):
    """x / ||x||_2, with the zero vector sent to e_1."""
    if isinstance(x, ad.Tensor):
        return ad.spherical_project(x)
    x = np.asarray(x, dtype=np.float64)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        e1 = np.zeros_like(x)
        e1[0] = 1.0
        return e1
    return x / nrm


def _reduced_laplacian(red: OrthogonalReducer, L):
    QL = fast_q_mul(red, L)
    if isinstance(QL, ad.Tensor):
        QLQt = ad.transpose(fast_q_mul(red, ad.transpose(QL)))
    else:
        QLQt = fast_q_mul(red, QL.T).T
    return QLQt[1:, 1:]


def reduce_problem(r0, L, red: OrthogonalReducer) -> ReducedProblem:
    """Plain-array form of the rotation: (L~, normalised y)."""
    r0 = np.asarray(r0, dtype=np.float64)
    y = red.Q[1:] @ (r0 - r0.mean())
    return ReducedProblem(np.asarray(_reduced_laplacian(red, np.asarray(L))), spherical_project(y))


def proximal_steps(r0, L, red: OrthogonalReducer, cfg: ProximalConfig = ProximalConfig(), alphas=None,
                   history: list | None = None):
    """Run the unrolled projected-gradient steps and map back to score space.

    ``alphas`` overrides ``cfg`` and may be a tensor (for trainable step
    sizes).  If ``history`` is a list, the reduced objective y^T L~ y is
    appended before the loop and after each step.  The result has unit norm
    and zero sum.
    """
    n = red.n
    if alphas is None:
        alphas = cfg.alphas_for(n)
    n_steps = len(ad.value_of(alphas))
    tensor_mode = any(isinstance(v, ad.Tensor) for v in (r0, L, alphas))
    if tensor_mode:
        r0, L, alphas = ad.as_tensor(r0), ad.as_tensor(L), ad.as_tensor(alphas)
        y = r0 - ad.mean(r0)
        y = ad.matmul(red.Q[1:], y)
    else:
        r0, L, alphas = (np.asarray(v, dtype=np.float64) for v in (r0, L, alphas))
        y = red.Q[1:] @ (r0 - r0.mean())
    if ad.value_of(L).shape != (n, n):
        raise ValueError("Laplacian shape does not match reducer")
    y = spherical_project(y)
    Lt = _reduced_laplacian(red, L)
    mv = ad.matmul if tensor_mode else np.matmul

    def record():
        if history is not None:
            yv, Lv = ad.value_of(y), ad.value_of(Lt)
            history.append(float(yv @ Lv @ yv))

    record()
    for step in range(n_steps):
        y = y - alphas[step] * (2.0 / n) * mv(Lt, y)
        y = spherical_project(y)
        record()
    if tensor_mode:
        y = ad.concat([ad.Tensor(np.zeros(1)), y])
        return ad.matmul(red.Q.T, y)
    return red.Q.T @ np.concatenate([[0.0], y])


def check_step_bound(cfg: ProximalConfig, n: int, alphas: Sequence[float] | None = None) -> list[str]:
    """Warnings for step sizes at or above the sufficient bound 1/(4(n-1))."""
    bound = 1.0 / (4 * (n - 1))
    values = cfg.alphas_for(n) if alphas is None else np.asarray(alphas, dtype=np.float64)
    return [
        f"alpha[{k}]={a:.6g} >= 1/(4(n-1))={bound:.6g}; convergence not guaranteed"
        for k, a in enumerate(values)
        if a >= bound
    ]
