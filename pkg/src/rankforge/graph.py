"""Comparison digraphs and the matrices derived from their adjacency."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DiGraph",
    "ComparisonMatrices",
    "SerialSimilarity",
    "EdgeListError",
    "load_edge_list",
    "save_edge_list",
    "comparison_matrices",
    "serialrank_similarity",
    "graph_laplacian",
    "hermitian_features",
]


class EdgeListError(ValueError):
    """Malformed edge-list input; message carries the 1-based row number."""


@dataclass(frozen=True)
class DiGraph:
    """Weighted comparison digraph; ``A[i, j]`` is the margin by which i beats j."""

    A: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"adjacency must be square, got {A.shape}")
        if A.shape[0] < 2:
            raise ValueError("need at least two nodes")
        if not np.all(np.isfinite(A)) or np.any(A < 0):
            raise ValueError("adjacency entries must be finite and nonnegative")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if self.labels is not None and len(self.labels) != A.shape[0]:
            raise ValueError("label count does not match node count")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def permuted(self, perm: Sequence[int]) -> DiGraph:
        """Relabel so that new node k is old node perm[k]."""
        perm = np.asarray(perm)
        labels = None if self.labels is None else tuple(self.labels[i] for i in perm)
        return DiGraph(self.A[np.ix_(perm, perm)], labels)


@dataclass(frozen=True)
class ComparisonMatrices:
    Mprime: np.ndarray
    M: np.ndarray
    C: np.ndarray
    t: int
    tM: int


@dataclass(frozen=True)
class SerialSimilarity:
    Sprime: np.ndarray
    SprimeNorm: np.ndarray


def _parse_node(tok: str):
    tok = tok.strip()
    try:
        return int(tok)
    except ValueError:
        return tok


def load_edge_list(path, finer_offset: float | None = None, n: int | None = None) -> DiGraph:
    """Read ``src<TAB>dst<TAB>weight`` rows into a DiGraph.

    Duplicate (src, dst) rows are summed.  If every node id is an integer the
    ids are used as 0-based indices (``n`` may force extra isolated nodes);
    otherwise string ids are indexed in order of first appearance and kept as
    labels.  With ``finer_offset`` every listed edge gets that much extra
    weight, which keeps zero-margin matches distinguishable from no match.
    """
    if finer_offset is not None and finer_offset < 0:
        raise ValueError("finer_offset must be nonnegative")
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise EdgeListError(f"row {lineno}: expected 3 tab-separated fields, got {len(parts)}")
            try:
                w = float(parts[2])
            except ValueError:
                raise EdgeListError(f"row {lineno}: weight {parts[2]!r} is not a number") from None
            if not np.isfinite(w) or w < 0:
                raise EdgeListError(f"row {lineno}: weight must be finite and nonnegative")
            src, dst = _parse_node(parts[0]), _parse_node(parts[1])
            if src == dst and w != 0:
                raise EdgeListError(f"row {lineno}: self-loop with nonzero weight")
            rows.append((src, dst, w))

    ids = [x for s, d, _ in rows for x in (s, d)]
    if all(isinstance(x, int) for x in ids):
        if any(x < 0 for x in ids):
            raise EdgeListError("negative node id")
        size = max(ids, default=-1) + 1
        size = max(size, n or 0)
        index = {i: i for i in range(size)}
        labels = None
    else:
        index: dict = {}
        for x in ids:
            index.setdefault(str(x), len(index))
        rows = [(str(s), str(d), w) for s, d, w in rows]
        size = len(index)
        labels = tuple(index)

    A = np.zeros((size, size))
    support = np.zeros((size, size), dtype=bool)
    for s, d, w in rows:
        if s == d:
            continue
        A[index[s], index[d]] += w
        support[index[s], index[d]] = True
    if finer_offset:
        A[support] += finer_offset
    return DiGraph(A, labels)


def save_edge_list(g: DiGraph, path) -> None:
    """Write nonzero edges; ``repr`` of a float is its shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        src, dst = np.nonzero(g.A)
        for i, j in zip(src, dst):
            a = g.labels[i] if g.labels else int(i)
            b = g.labels[j] if g.labels else int(j)
            writer.writerow([a, b, repr(float(g.A[i, j]))])


def comparison_matrices(g: DiGraph) -> ComparisonMatrices:
    A = g.A
    Mp = A - A.T
    tot = A + A.T
    M = np.divide(Mp, tot, out=np.zeros_like(Mp), where=tot != 0)
    C = np.sign(Mp)
    return ComparisonMatrices(Mp, M, C, int(np.count_nonzero(Mp)), int(np.count_nonzero(M)))


def serialrank_similarity(g: DiGraph) -> SerialSimilarity:
    C = np.sign(g.A - g.A.T)
    S = 0.5 * (g.n + C @ C.T)
    return SerialSimilarity(S, S / S.max())


def graph_laplacian(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("similarity must be square")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("similarity must be symmetric")
    if np.any(S < 0):
        raise ValueError("similarity entries must be nonnegative")
    return np.diag(S.sum(axis=1)) - S


def hermitian_features(g: DiGraph, K: int) -> np.ndarray:
    """Real/imaginary parts of the top-K eigenvectors of i(A - A^T).

    Columns are ``[Re v1, Im v1, ..., Re vK, Im vK]``.  Eigenvectors with a
    nonpositive eigenvalue carry no directional signal and are left as zero
    columns, as are the slots beyond what n nodes can supply.  Each
    eigenvector's phase is fixed so its largest-magnitude entry is real and
    positive.
    """
    if K <= 0:
        raise ValueError("K must be positive")
    n = g.n
    if 2 * K > n:
        warnings.warn(f"2K={2 * K} exceeds n={n}; padding features with zeros", RuntimeWarning)
    H = 1j * (g.A - g.A.T)
    vals, vecs = np.linalg.eigh(H)
    scale = max(1.0, float(np.abs(vals).max()) if vals.size else 1.0)
    X = np.zeros((n, 2 * K))
    order = np.argsort(-vals, kind="stable")
    for k, idx in enumerate(order[:K]):
        if vals[idx] <= 1e-10 * scale:
            break
        v = vecs[:, idx]
        # ties in |v| resolved toward the lowest index
        j = int(np.argmax(np.round(np.abs(v), 12)))
        v = v * np.exp(-1j * np.angle(v[j]))
        X[:, 2 * k] = v.real
        X[:, 2 * k + 1] = v.imag
    return X
