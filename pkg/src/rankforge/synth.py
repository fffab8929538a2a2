"""Erdős–Rényi Outlier (ERO) comparison graphs with known scores."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .graph import DiGraph, save_edge_list

__all__ = ["EROConfig", "generate", "generate_with_outliers", "sweep", "save_truth", "load_truth"]


@dataclass(frozen=True)
class EROConfig:
    n: int = 350
    p: float = 0.05
    eta: float = 0.0
    style: Literal["uniform", "gamma"] = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if not 0 <= self.eta < 1:
            raise ValueError("eta must lie in [0, 1)")
        if self.style not in ("uniform", "gamma"):
            raise ValueError(f"unknown style {self.style!r}")

    @property
    def tag(self) -> str:
        return f"ero_n{self.n}_p{self.p:g}_eta{self.eta:g}_{self.style}_s{self.seed}"


def generate_with_outliers(cfg: EROConfig) -> tuple[DiGraph, np.ndarray, np.ndarray]:
    """Like :func:`generate`, also returning the boolean outlier mask (upper triangle)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    if cfg.style == "uniform":
        s = rng.uniform(0.0, 1.0, size=n)
    else:
        s = rng.gamma(shape=0.5, scale=1.0, size=n)
    iu, ju = np.triu_indices(n, k=1)
    m = len(iu)
    observed = rng.uniform(size=m) < cfg.p
    outlier = (rng.uniform(size=m) < cfg.eta) & observed
    spread = float(s.max() - s.min())
    offsets = s[iu] - s[ju]
    noise = rng.uniform(-1.0, 1.0, size=m) * spread
    values = np.where(outlier, noise, offsets)
    values = np.where(observed, values, 0.0)
    A = np.zeros((n, n))
    pos = values > 0
    A[iu[pos], ju[pos]] = values[pos]
    A[ju[~pos], iu[~pos]] = -values[~pos]
    outlier_mask = np.zeros((n, n), dtype=bool)
    outlier_mask[iu, ju] = outlier
    return DiGraph(A), s, outlier_mask


def generate(cfg: EROConfig) -> tuple[DiGraph, np.ndarray]:
    """Sample an ERO graph and its ground-truth scores.

    Each unordered pair is measured with probability p.  A measurement is the
    true offset s_i - s_j, or with probability eta an outlier drawn uniformly
    from [-R, R] where R is the score range.  A positive value v becomes
    A[i, j] = v, a negative one A[j, i] = -v.
    """
    g, s, _ = generate_with_outliers(cfg)
    return g, s


def save_truth(scores: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for i, v in enumerate(scores):
            fh.write(f"{i}\t{float(v)!r}\n")


def load_truth(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"row {lineno}: expected node<TAB>score")
            rows.append((int(parts[0]), float(parts[1])))
    out = np.empty(len(rows))
    for i, v in rows:
        out[i] = v
    return out


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def sweep(configs: Iterable[EROConfig], out_dir) -> dict:
    """Generate and write every configuration; returns (and writes) a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for cfg in configs:
        g, s = generate(cfg)
        graph_path = out_dir / f"{cfg.tag}.tsv"
        truth_path = out_dir / f"{cfg.tag}.truth.tsv"
        save_edge_list(g, graph_path)
        save_truth(s, truth_path)
        entries.append({
            "config": asdict(cfg),
            "graph": graph_path.name,
            "truth": truth_path.name,
            "sha256": _sha(graph_path),
        })
    manifest = {"version": 1, "entries": entries}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def grid(ps: Iterable[float], etas: Iterable[float], styles: Iterable[str] = ("uniform",),
         seeds: Iterable[int] = (0,), n: int = 350) -> list[EROConfig]:
    return [
        EROConfig(n=n, p=p, eta=eta, style=style, seed=seed)
        for p in ps for eta in etas for style in styles for seed in seeds
    ]
