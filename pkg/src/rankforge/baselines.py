"""Learning-free rankers mapping a comparison digraph to scores (higher = stronger).

Conventions: ``A[i, j] > 0`` records a win of i over j.  Walk-based methods
move mass from losers toward winners.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import DiGraph, comparison_matrices, graph_laplacian, serialrank_similarity
from .metrics import upset_naive, upset_simple

__all__ = [
    "BaselineConfig",
    "ConvergenceError",
    "DegenerateSpectrumError",
    "pagerank",
    "eigenvector_centrality",
    "rank_centrality",
    "davids_score",
    "btl",
    "spring_rank",
    "serial_rank",
    "sync_rank",
    "svd_rs",
    "svd_nrs",
    "BASELINES",
    "OUT_OF_SCOPE",
    "run_baseline",
]


@dataclass(frozen=True)
class BaselineConfig:
    damping: float = 0.85
    power_tol: float = 1e-10
    power_max_iter: int = 100_000
    btl_tol: float = 1e-9
    btl_max_iter: int = 100_000
    btl_prior: float = 1e-2  # pseudo-comparisons per pair, relative to mean weight
    eig_teleport: float = 1e-2  # relative all-pairs weight keeping A irreducible
    spring_reg: float = 1e-8

    def __post_init__(self):
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if min(self.power_tol, self.btl_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.power_max_iter, self.btl_max_iter) < 1:
            raise ValueError("iteration caps must be positive")
        if min(self.btl_prior, self.eig_teleport, self.spring_reg) < 0:
            raise ValueError("regularisers must be nonnegative")


class ConvergenceError(RuntimeError):
    def __init__(self, method: str, residual: float, iterations: int):
        super().__init__(f"{method} did not converge after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class DegenerateSpectrumError(ValueError):
    pass


DEFAULT = BaselineConfig()


def _finish(scores, residual, full_output):
    scores = np.asarray(scores, dtype=np.float64)
    if full_output:
        return scores, {"residual": residual}
    return scores


def _power(step: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, tol: float, max_iter: int, name: str):
    x = x0
    for it in range(1, max_iter + 1):
        x_new = step(x)
        res = float(np.abs(x_new - x).sum())
        x = x_new
        if res < tol:
            return x, res
    raise ConvergenceError(name, res, max_iter)


def pagerank(g: DiGraph, cfg: BaselineConfig = DEFAULT, full_output: bool = False):
    """Damped random walk where each loser links to the players that beat it.

    Nodes that never lost teleport uniformly.
    """
    n, d = g.n, cfg.damping
    W = g.A.T  # row j: players who beat j
    out = W.sum(axis=1)
    dangling = out == 0
    P = np.divide(W, out[:, None], out=np.zeros_like(W), where=~dangling[:, None])

    def step(x):
        return d * (P.T @ x + x[dangling].sum() / n) + (1 - d) / n

    x, res = _power(step, np.full(n, 1.0 / n), cfg.power_tol, cfg.power_max_iter, "pagerank")
    return _finish(x / x.sum(), res, full_output)


def eigenvector_centrality(g: DiGraph, cfg: BaselineConfig = DEFAULT, full_output: bool = False):
    """Perron vector of A + tau 11^T: a player's score sums the scores it beat.

    The small all-pairs weight tau (``eig_teleport`` times the mean edge
    weight over all pairs) makes the matrix positive, so the vector is unique
    even for acyclic tournaments.  Iterates on the shifted matrix to damp
    periodic components.
    """
    n = g.n
    A = g.A
    tau = cfg.eig_teleport * A.sum() / (n * n)
    if tau == 0:
        tau = cfg.eig_teleport or 1.0
    B = A + tau
    shift = B.sum(axis=1).max()

    def step(x):
        y = B @ x + shift * x
        return y / y.sum()

    x, res = _power(step, np.full(n, 1.0 / n), cfg.power_tol, cfg.power_max_iter, "eigenvector_centrality")
    return _finish(x, res, full_output)


def rank_centrality(g: DiGraph, cfg: BaselineConfig = DEFAULT, full_output: bool = False):
    A = g.A
    tot = A + A.T
    supported = tot > 0
    dmax = max(int(supported.sum(axis=1).max()), 1)
    P = np.divide(A.T, dmax * tot, out=np.zeros_like(A), where=supported)
    P[np.diag_indices_from(P)] = 1.0 - P.sum(axis=1)

    def step(x):
        return P.T @ x

    x, res = _power(step, np.full(g.n, 1.0 / g.n), cfg.power_tol, cfg.power_max_iter, "rank_centrality")
    return _finish(x, res, full_output)


def davids_score(g: DiGraph, cfg: BaselineConfig = DEFAULT):
    A = g.A
    tot = A + A.T
    P = np.divide(A, tot, out=np.zeros_like(A), where=tot > 0)
    w = P.sum(axis=1)
    l = P.sum(axis=0)
    w2 = P @ w
    l2 = P.T @ l
    return w + w2 - l - l2


def btl(g: DiGraph, cfg: BaselineConfig = DEFAULT, full_output: bool = False):
    """Bradley-Terry-Luce strengths by the MM iteration; returns log-strengths.

    Every pair receives ``btl_prior`` (scaled by the mean nonzero weight)
    virtual wins each way so that the maximum-likelihood estimate exists
    for any comparison pattern.
    """
    A = g.A.copy()
    n = g.n
    if cfg.btl_prior > 0:
        pos = A[A > 0]
        prior = cfg.btl_prior * (pos.mean() if pos.size else 1.0)
        A = A + prior * (1.0 - np.eye(n))
    wins = A.sum(axis=1)
    N = A + A.T
    w = np.full(n, 1.0 / n)
    for it in range(1, cfg.btl_max_iter + 1):
        denom = np.divide(N, w[:, None] + w[None, :], out=np.zeros_like(N), where=N > 0).sum(axis=1)
        w_new = np.divide(wins, denom, out=np.zeros(n), where=denom > 0)
        w_new /= w_new.sum()
        change = float(np.max(np.abs(w_new - w) / np.maximum(w, 1e-300)))
        w = w_new
        if change < cfg.btl_tol:
            break
    else:
        raise ConvergenceError("btl", change, cfg.btl_max_iter)
    with np.errstate(divide="ignore"):
        scores = np.log(w)
    if not np.all(np.isfinite(scores)):
        raise ConvergenceError("btl", float("inf"), it)
    return _finish(scores, change, full_output)


def btl_log_likelihood(g: DiGraph, w: np.ndarray) -> float:
    A = g.A
    P = w[:, None] / (w[:, None] + w[None, :])
    mask = A > 0
    return float(np.sum(A[mask] * np.log(P[mask])))


def spring_rank(g: DiGraph, cfg: BaselineConfig = DEFAULT, full_output: bool = False):
    """Spring-network ground state with unit rest length per unit of weight."""
    A = g.A
    d_out, d_in = A.sum(axis=1), A.sum(axis=0)
    lhs = np.diag(d_out + d_in) - (A + A.T) + cfg.spring_reg * np.eye(g.n)
    rhs = d_out - d_in
    s = np.linalg.solve(lhs, rhs)
    res = float(np.linalg.norm(lhs @ s - rhs))
    return _finish(s - s.mean(), res, full_output)


def serial_rank(g: DiGraph, cfg: BaselineConfig = DEFAULT):
    """Fiedler vector of the SerialRank similarity, sign fixed by upsets.

    Raises DegenerateSpectrumError on a graph without edges; if edges exist
    but every compared pair is tied, all players are tied (zero scores).
    """
    if not np.any(g.A):
        raise DegenerateSpectrumError("degenerate spectrum: graph has no comparisons")
    cm = comparison_matrices(g)
    if cm.t == 0:
        return np.zeros(g.n)
    L = graph_laplacian(serialrank_similarity(g).Sprime)
    vals, vecs = np.linalg.eigh(L)
    v = vecs[:, 1]
    v = v - v.mean()
    v /= np.linalg.norm(v)
    if upset_simple(cm, -v) < upset_simple(cm, v):
        v = -v
    return v


def _sync_eigvec(g: DiGraph) -> np.ndarray:
    n = g.n
    C = np.sign(g.A - g.A.T)
    supported = (g.A + g.A.T) > 0
    H = np.where(supported, np.exp(1j * np.pi * C * (n - 1) / n), 0.0)
    vals, vecs = np.linalg.eigh(H)
    return vecs[:, -1]


def sync_rank(g: DiGraph, cfg: BaselineConfig = DEFAULT, eigvec: np.ndarray | None = None):
    """Angular synchronisation ranking.

    The top eigenvector of the Hermitian pairwise-angle matrix places
    players on a circle; the circle is cut at the position (and read in the
    direction) with the fewest upsets.  Scores are circular offsets from the
    cut point, so ties on the circle give tied scores.
    """
    cm = comparison_matrices(g)
    n = g.n
    if cm.t == 0:
        return np.zeros(n)
    v = _sync_eigvec(g) if eigvec is None else np.asarray(eigvec)
    total = v.sum()
    phase = np.angle(total) if abs(total) > 1e-12 else np.angle(v[np.argmax(np.round(np.abs(v), 12))])
    theta = np.mod(np.angle(v * np.exp(-1j * phase)), 2 * np.pi)
    theta = np.round(theta, 12) % (2 * np.pi)
    order = np.lexsort((np.arange(n), theta))
    best = None
    for k in range(n):
        start = theta[order[k]]
        offset = np.mod(theta - start, 2 * np.pi)
        for direction in (1.0, -1.0):
            scores = direction * offset
            cost = upset_naive(cm, scores)
            if best is None or cost < best[0] - 1e-15:
                best = (cost, scores)
    return best[1]


def _svd_direction(X: np.ndarray) -> np.ndarray:
    """Unit vector in the top-2 left singular subspace of X orthogonal to 1."""
    n = X.shape[0]
    U, s, _ = np.linalg.svd(X)
    if s[0] <= 1e-12 * max(1.0, np.abs(X).max()):
        return np.zeros(n)
    U2 = U[:, :2]
    c = U2.T @ (np.ones(n) / np.sqrt(n))
    coords = np.array([-c[1], c[0]]) if c @ c > 1e-24 else np.array([1.0, 0.0])
    u = U2 @ coords
    return u / np.linalg.norm(u)


def _orient(u: np.ndarray, X: np.ndarray) -> np.ndarray:
    # X has X_ij > 0 when i beats j, so its row sums point toward the stronger players
    return -u if u @ X.sum(axis=1) < 0 else u


def svd_rs(g: DiGraph, cfg: BaselineConfig = DEFAULT):
    """Scores from the rank-2 SVD of A - A^T (noiseless offsets are exactly rank 2)."""
    cm = comparison_matrices(g)
    X = cm.Mprime
    u = _svd_direction(X)
    u = _orient(u, X)
    # rescale so that score differences fit the observed offsets in least squares
    mask = X != 0
    if mask.any():
        du = (u[:, None] - u[None, :])[mask]
        denom = du @ du
        if denom > 0:
            u = u * (du @ X[mask]) / denom
    return u


def svd_nrs(g: DiGraph, cfg: BaselineConfig = DEFAULT):
    """Normalised variant on the ratio matrix M, then least-squares de-biasing.

    The SVD of the degree-normalised ratio matrix gives a first score
    estimate; the scores are then refit to the observed offsets A - A^T on
    the compared pairs, with the SVD estimate fixing each connected
    component's offset.
    """
    cm = comparison_matrices(g)
    M = cm.M
    deg = (M != 0).sum(axis=1).astype(float)
    dinv = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    u = _svd_direction(dinv[:, None] * M * dinv[None, :])
    u = _orient(u, M)
    mask = cm.Mprime != 0
    if not mask.any():
        return np.zeros(g.n)
    W = mask.astype(float)
    Lw = np.diag(W.sum(axis=1)) - W
    rhs = cm.Mprime.sum(axis=1)  # sum_j (r_i - r_j) = M'_ij over compared j
    # minimal-norm solution plus the component of u in the null space
    r = np.linalg.lstsq(Lw, rhs, rcond=None)[0]
    vals, vecs = np.linalg.eigh(Lw)
    null = vecs[:, vals < 1e-9 * max(1.0, vals.max())]
    r = r - null @ (null.T @ r) + null @ (null.T @ u)
    return r


BASELINES: dict[str, Callable] = {
    "springrank": spring_rank,
    "syncrank": sync_rank,
    "serialrank": serial_rank,
    "btl": btl,
    "davidscore": davids_score,
    "eigenvectorcentrality": eigenvector_centrality,
    "pagerank": pagerank,
    "rankcentrality": rank_centrality,
    "svd_rs": svd_rs,
    "svd_nrs": svd_nrs,
}

OUT_OF_SCOPE = {"mvr"}


def run_baseline(name: str, g: DiGraph, cfg: BaselineConfig = DEFAULT) -> np.ndarray:
    key = name.lower()
    if key in OUT_OF_SCOPE:
        raise NotImplementedError(f"{name}: not implemented (out of scope)")
    if key not in BASELINES:
        raise KeyError(f"unknown method {name!r}; choose from {sorted(BASELINES)}")
    return BASELINES[key](g, cfg)
