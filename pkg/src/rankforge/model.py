"""GNN ranking model: directed embedder, score heads, unrolled Fiedler refinement.

Five variants share one embedder:

* ``dist`` / ``innerproduct`` score nodes directly from their embeddings;
* ``proximal_dist`` / ``proximal_innerproduct`` feed those scores as the
  initial guess into the unrolled Fiedler solver on a learned similarity;
* ``proximal_baseline`` starts the solver from a classical ranker's scores.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from . import autodiff as ad
from .baselines import BaselineConfig, run_baseline
from .graph import DiGraph, comparison_matrices, hermitian_features, serialrank_similarity
from .metrics import MetricConfig, scores_to_ranks, similarity_pretrain_loss, upset_margin, upset_naive, \
    upset_ratio, upset_simple
from .unfold import ProximalConfig, build_reducer, proximal_steps

__all__ = [
    "VARIANTS",
    "VariantSpec",
    "TrainConfig",
    "ModelState",
    "TrainReport",
    "TrainingDivergedError",
    "GraphContext",
    "init_state",
    "embed",
    "head_dist",
    "head_inner",
    "similarity_matrix",
    "forward_variant",
    "training_loss",
    "loss_and_grads",
    "loss_value",
    "train",
    "apply_model",
    "save_checkpoint",
    "load_checkpoint",
]

VARIANTS = ("dist", "innerproduct", "proximal_dist", "proximal_innerproduct", "proximal_baseline")
PROXIMAL = {"proximal_dist", "proximal_innerproduct", "proximal_baseline"}
WARMUP = {"proximal_dist": "dist", "proximal_innerproduct": "innerproduct", "proximal_baseline": "dist"}
SIGMA2_FLOOR = 1e-8
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, reason: str):
        super().__init__(f"training diverged at epoch {epoch}: {reason}")
        self.epoch = epoch


@dataclass(frozen=True)
class VariantSpec:
    name: str = "proximal_baseline"
    baseline: str | None = None
    pretrain: Literal["non_proximal_warmup", "serialrank_similarity", "none"] = "non_proximal_warmup"
    loss: Literal["ratio", "margin", "sum"] = "sum"

    def __post_init__(self):
        if self.name not in VARIANTS:
            raise ValueError(f"unknown variant {self.name!r}")
        if (self.baseline is not None) != (self.name == "proximal_baseline"):
            raise ValueError("a baseline is required for, and only for, proximal_baseline")
        if self.pretrain not in ("non_proximal_warmup", "serialrank_similarity", "none"):
            raise ValueError(f"unknown pretrain mode {self.pretrain!r}")
        if self.loss not in ("ratio", "margin", "sum"):
            raise ValueError(f"unknown loss mode {self.loss!r}")

    @property
    def proximal(self) -> bool:
        return self.name in PROXIMAL


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    patience: int = 200
    pretrain_epochs: int = 50
    lr: float = 0.01
    proximal_lr_factor: float = 10.0
    weight_decay: float = 5e-4
    selection: Literal["upset_simple", "upset_naive"] = "upset_simple"
    K: int = 5
    d: int = 16
    hidden: int | None = None  # None -> 2d
    epsilon: float = 0.01
    prox: ProximalConfig = field(default_factory=ProximalConfig)

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.pretrain_epochs < 0:
            raise ValueError("epoch counts must be positive")
        if self.lr <= 0 or self.proximal_lr_factor <= 0:
            raise ValueError("learning rates must be positive")
        if self.selection not in ("upset_simple", "upset_naive"):
            raise ValueError(f"unknown selection metric {self.selection!r}")
        if self.K < 1 or self.d < 1:
            raise ValueError("K and d must be positive")

    @property
    def hidden_dim(self) -> int:
        return self.hidden or 2 * self.d

    def to_dict(self) -> dict:
        out = asdict(self)
        out["prox"] = asdict(self.prox)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        data = dict(data)
        prox = dict(data.pop("prox"))
        if prox.get("alphas") is not None:
            prox["alphas"] = tuple(prox["alphas"])
        return cls(prox=ProximalConfig(**prox), **data)


@dataclass
class ModelState:
    params: dict[str, np.ndarray]
    K: int
    d: int
    hidden: int
    seed: int
    adam: ad.AdamState | None = None

    def copy(self) -> ModelState:
        return ModelState({k: v.copy() for k, v in self.params.items()}, self.K, self.d, self.hidden,
                          self.seed, copy.deepcopy(self.adam))


@dataclass
class TrainReport:
    losses: list[float]
    selected_epoch: int
    metrics: dict[str, float]
    scores: np.ndarray
    ranks: np.ndarray
    wall_time: float
    state: ModelState
    selection_history: list[float] = field(default_factory=list)
    pretrain_losses: list[float] = field(default_factory=list)

    def to_json(self, include_timing: bool = False) -> str:
        payload = {
            "losses": self.losses,
            "pretrain_losses": self.pretrain_losses,
            "selection_history": self.selection_history,
            "selected_epoch": self.selected_epoch,
            "metrics": self.metrics,
            "scores": self.scores.tolist(),
            "ranks": self.ranks.tolist(),
        }
        if include_timing:
            payload["wall_time"] = self.wall_time
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class GraphContext:
    """Per-graph constants reused by every forward pass."""

    g: DiGraph
    X: np.ndarray
    A_hat: np.ndarray
    Ar_hat: np.ndarray
    cm: object
    sr: object
    baseline_r0: np.ndarray | None
    reducer: object

    @classmethod
    def build(cls, g: DiGraph, K: int, baseline: str | None = None,
              baseline_cfg: BaselineConfig = BaselineConfig(), X: np.ndarray | None = None) -> GraphContext:
        if X is None:
            X = hermitian_features(g, K)
        r0 = None if baseline is None else run_baseline(baseline, g, baseline_cfg)
        return cls(g, X, _row_normalise(g.A), _row_normalise(g.A.T), comparison_matrices(g),
                   serialrank_similarity(g), r0, build_reducer(g.n))


def _row_normalise(A: np.ndarray) -> np.ndarray:
    B = A + np.eye(A.shape[0])
    deg = B.sum(axis=1, keepdims=True)
    return np.divide(B, deg, out=np.zeros_like(B), where=deg > 0)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_state(K: int, d: int, seed: int, hidden: int | None = None, n_alphas: int = 5,
               alpha_init: float = 1.0) -> ModelState:
    rng = np.random.default_rng(seed)
    h = hidden or 2 * d
    f = 2 * K
    params = {
        "W_s1": _glorot(rng, f, h),
        "W_t1": _glorot(rng, f, h),
        "W_s2": _glorot(rng, h, h),
        "W_t2": _glorot(rng, h, h),
        "W_out": _glorot(rng, 2 * h, d),
        "a": rng.normal(0.0, 1.0 / math.sqrt(d), size=d),
        "b": np.array(0.0),
        "sigma": np.array(1.0),
        "alpha": np.full(n_alphas, float(alpha_init)),
    }
    return ModelState(params, K, d, h, seed)


# --- forward pieces (work on arrays or tensors) ------------------------------


def _embed(P, ctx: GraphContext):
    X = ctx.X
    if X.shape[1] != ad.value_of(P["W_s1"]).shape[0]:
        raise ValueError(f"feature width {X.shape[1]} does not match embedder input "
                         f"{ad.value_of(P['W_s1']).shape[0]}")
    hs = ad.relu(ad.matmul(ctx.A_hat, ad.matmul(X, P["W_s1"])))
    ht = ad.relu(ad.matmul(ctx.Ar_hat, ad.matmul(X, P["W_t1"])))
    hs = ad.relu(ad.matmul(ctx.A_hat, ad.matmul(hs, P["W_s2"])))
    ht = ad.relu(ad.matmul(ctx.Ar_hat, ad.matmul(ht, P["W_t2"])))
    return ad.matmul(ad.concat([hs, ht], axis=1), P["W_out"])


def _kernel_scale(P, d: int):
    s2 = ad.as_tensor(P["sigma"]) * P["sigma"]
    if s2.value < SIGMA2_FLOOR:
        s2 = ad.Tensor(SIGMA2_FLOOR)
    return s2 * float(d)


def _head_dist(Z, P):
    d = ad.value_of(Z).shape[1]
    sq = ad.sum((ad.as_tensor(Z) - P["a"]) * (ad.as_tensor(Z) - P["a"]), axis=1)
    return ad.exp(ad.neg(sq / _kernel_scale(P, d)))


def _head_inner(Z, P):
    return ad.sigmoid(ad.matmul(Z, P["a"]) + P["b"])


def _similarity(Z, P):
    d = ad.value_of(Z).shape[1]
    return ad.exp(ad.neg(ad.pairwise_sqdist(Z) / _kernel_scale(P, d)))


def _laplacian(S):
    n = ad.value_of(S).shape[0]
    deg = ad.reshape(ad.sum(S, axis=1), (n, 1))
    return np.eye(n) * deg - S


def _forward(P, ctx: GraphContext, name: str, prox_cfg: ProximalConfig, frozen_alpha: bool):
    """Returns (raw scores, similarity or None)."""
    Z = _embed(P, ctx)
    if name in ("dist", "proximal_dist"):
        r = _head_dist(Z, P)
    elif name in ("innerproduct", "proximal_innerproduct"):
        r = _head_inner(Z, P)
    else:
        if ctx.baseline_r0 is None:
            raise ValueError("proximal_baseline needs baseline scores")
        r = ad.Tensor(ctx.baseline_r0)
    if name not in PROXIMAL:
        return r, None
    S = _similarity(Z, P)
    alphas = ad.value_of(P["alpha"]) if frozen_alpha else P["alpha"]
    r = proximal_steps(r, _laplacian(S), ctx.reducer, prox_cfg, alphas=alphas)
    return r, S


def _as_plain(x) -> np.ndarray:
    return np.array(ad.value_of(x))


def embed(g: DiGraph, X: np.ndarray, state: ModelState) -> np.ndarray:
    ctx = GraphContext(g, X, _row_normalise(g.A), _row_normalise(g.A.T), None, None, None, None)
    return _as_plain(_embed(state.params, ctx))


def head_dist(Z: np.ndarray, state: ModelState) -> np.ndarray:
    return _as_plain(_head_dist(Z, state.params))


def head_inner(Z: np.ndarray, state: ModelState) -> np.ndarray:
    return _as_plain(_head_inner(Z, state.params))


def similarity_matrix(Z: np.ndarray, state: ModelState) -> np.ndarray:
    return _as_plain(_similarity(Z, state.params))


def forward_variant(g: DiGraph, X: np.ndarray, state: ModelState, spec: VariantSpec,
                    baseline_r0: np.ndarray | None = None, prox_cfg: ProximalConfig | None = None) -> np.ndarray:
    """Untransformed output scores of one variant."""
    if (baseline_r0 is not None) != (spec.name == "proximal_baseline"):
        raise ValueError("baseline_r0 must be supplied for, and only for, proximal_baseline")
    ctx = GraphContext(g, X, _row_normalise(g.A), _row_normalise(g.A.T), None, None, baseline_r0,
                       build_reducer(g.n))
    prox_cfg = prox_cfg or ProximalConfig(gamma_steps=len(state.params["alpha"]))
    r, _ = _forward(state.params, ctx, spec.name, prox_cfg, frozen_alpha=True)
    return _as_plain(r)


# --- losses -------------------------------------------------------------------


def training_loss(r, ctx: GraphContext, name: str, loss_mode: str, epsilon: float, S=None):
    """Ranking loss on raw variant output r; proximal outputs are mapped by (r+1)/2."""
    if name in PROXIMAL:
        r = (r + 1.0) * 0.5
    mcfg = MetricConfig(epsilon=epsilon, transform="none")
    terms = []
    if loss_mode in ("ratio", "sum"):
        terms.append(upset_ratio(ctx.cm, r, mcfg))
    if loss_mode in ("margin", "sum"):
        terms.append(upset_margin(ctx.cm, r, mcfg))
    loss = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    if S is not None:
        loss = loss + similarity_pretrain_loss(S, ctx.sr)
    return loss


def loss_and_grads(params: dict[str, np.ndarray], ctx: GraphContext, name: str, loss_mode: str,
                   cfg: TrainConfig, with_similarity: bool = False, frozen_alpha: bool = False):
    """Loss value, gradients for every parameter, and the raw output scores."""
    with ad.Tape() as tape:
        P = {k: tape.watch(v) for k, v in params.items()}
        r, S = _forward(P, ctx, name, cfg.prox, frozen_alpha)
        loss = training_loss(r, ctx, name, loss_mode, cfg.epsilon, S if with_similarity else None)
    keys = list(P)
    grads = dict(zip(keys, tape.gradient(loss, [P[k] for k in keys])))
    return float(loss.value), grads, np.array(r.value)


def loss_value(params: dict[str, np.ndarray], ctx: GraphContext, name: str, loss_mode: str,
               cfg: TrainConfig, with_similarity: bool = False) -> float:
    r, S = _forward(params, ctx, name, cfg.prox, frozen_alpha=True)
    return float(ad.value_of(training_loss(r, ctx, name, loss_mode, cfg.epsilon,
                                           S if with_similarity else None)))


# --- training -----------------------------------------------------------------


def _selection_value(cm, r, metric: str) -> float:
    return upset_simple(cm, r) if metric == "upset_simple" else upset_naive(cm, r)


def _check(loss: float, epoch: int) -> None:
    if not math.isfinite(loss):
        raise TrainingDivergedError(epoch, "non-finite loss")


def train(g: DiGraph, spec: VariantSpec, cfg: TrainConfig = TrainConfig(), seed: int = 0,
          baseline_cfg: BaselineConfig = BaselineConfig(), X: np.ndarray | None = None,
          ctx: GraphContext | None = None) -> TrainReport:
    """Fit one variant on one graph and return the epoch with the best selection metric.

    Proximal variants first pretrain (Adam) for ``pretrain_epochs``, either
    on the matching non-proximal variant or on the proximal loss plus the
    similarity term, then train with SGD at ``proximal_lr_factor`` times the
    learning rate.  Non-proximal variants use Adam throughout.  Training
    stops once the loss has not improved for ``patience`` epochs.
    """
    t0 = time.perf_counter()
    ctx = ctx or GraphContext.build(g, cfg.K, spec.baseline, baseline_cfg, X)
    n = g.n
    alpha0 = cfg.prox.alphas_for(n)
    state = init_state(cfg.K, cfg.d, seed, cfg.hidden_dim, cfg.prox.gamma_steps)
    state.params["alpha"] = alpha0.copy()
    frozen = () if cfg.prox.trainable_alphas else ("alpha",)
    frozen_alpha = not cfg.prox.trainable_alphas
    params = state.params
    adam = ad.AdamState()
    pretrain_losses: list[float] = []

    if spec.proximal and spec.pretrain != "none":
        for epoch in range(cfg.pretrain_epochs):
            try:
                if spec.pretrain == "non_proximal_warmup":
                    loss, grads, _ = loss_and_grads(params, ctx, WARMUP[spec.name], spec.loss, cfg)
                else:
                    loss, grads, _ = loss_and_grads(params, ctx, spec.name, spec.loss, cfg,
                                                    with_similarity=True, frozen_alpha=frozen_alpha)
            except (FloatingPointError, ZeroDivisionError) as exc:
                raise TrainingDivergedError(epoch, str(exc)) from None
            _check(loss, epoch)
            pretrain_losses.append(loss)
            params, adam = ad.adam_step(params, grads, adam, cfg.lr, cfg.weight_decay, frozen=frozen)

    losses: list[float] = []
    history: list[float] = []
    best = (math.inf, -1, None, None)
    best_loss, since_best = math.inf, 0
    for epoch in range(cfg.max_epochs):
        try:
            loss, grads, r = loss_and_grads(params, ctx, spec.name, spec.loss, cfg, frozen_alpha=frozen_alpha)
        except (FloatingPointError, ZeroDivisionError) as exc:
            raise TrainingDivergedError(epoch, str(exc)) from None
        _check(loss, epoch)
        losses.append(loss)
        sel = _selection_value(ctx.cm, r, cfg.selection)
        history.append(sel)
        if sel < best[0]:
            best = (sel, epoch, {k: v.copy() for k, v in params.items()}, r)
        if loss < best_loss:
            best_loss, since_best = loss, 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
        if spec.proximal:
            params = ad.sgd_step(params, grads, cfg.lr * cfg.proximal_lr_factor, cfg.weight_decay, frozen=frozen)
        else:
            params, adam = ad.adam_step(params, grads, adam, cfg.lr, cfg.weight_decay, frozen=frozen)

    _, sel_epoch, best_params, scores = best
    metrics = {
        "upset_simple": upset_simple(ctx.cm, scores),
        "upset_naive": upset_naive(ctx.cm, scores),
        "upset_ratio": upset_ratio(ctx.cm, (scores + 1.0) * 0.5 if spec.proximal else scores,
                                   MetricConfig(epsilon=cfg.epsilon, transform="none")),
        "loss": losses[sel_epoch],
    }
    final = ModelState(best_params, cfg.K, cfg.d, cfg.hidden_dim, seed, adam)
    return TrainReport(losses, sel_epoch, metrics, scores, scores_to_ranks(scores),
                       time.perf_counter() - t0, final, history, pretrain_losses)


def apply_model(state: ModelState, spec: VariantSpec, g_new: DiGraph,
                baseline_cfg: BaselineConfig = BaselineConfig(), prox_cfg: ProximalConfig | None = None) -> np.ndarray:
    """Score a graph with trained parameters, without any update."""
    ctx = GraphContext.build(g_new, state.K, spec.baseline, baseline_cfg)
    prox_cfg = prox_cfg or ProximalConfig(gamma_steps=len(state.params["alpha"]))
    r, _ = _forward(state.params, ctx, spec.name, prox_cfg, frozen_alpha=True)
    return _as_plain(r)


# --- checkpoints --------------------------------------------------------------


def config_hash(spec: VariantSpec, cfg: TrainConfig) -> str:
    blob = json.dumps({"spec": asdict(spec), "cfg": cfg.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def save_checkpoint(path, state: ModelState, spec: VariantSpec, cfg: TrainConfig) -> None:
    """JSON checkpoint; floats are written in shortest round-trip form."""
    adam = None
    if state.adam is not None:
        adam = {
            "step": state.adam.step,
            "m": {k: v.tolist() for k, v in state.adam.m.items()},
            "v": {k: v.tolist() for k, v in state.adam.v.items()},
        }
    blob = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(spec, cfg),
        "spec": asdict(spec),
        "train_config": cfg.to_dict(),
        "K": state.K,
        "d": state.d,
        "hidden": state.hidden,
        "seed": state.seed,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in state.params.items()},
        "adam": adam,
    }
    with open(path, "w") as fh:
        json.dump(blob, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelState, VariantSpec, TrainConfig]:
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    spec = VariantSpec(**blob["spec"])
    cfg = TrainConfig.from_dict(blob["train_config"])
    if config_hash(spec, cfg) != blob["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in blob["params"].items()}
    adam = None
    if blob["adam"] is not None:
        adam = ad.AdamState(blob["adam"]["step"],
                            {k: np.array(v) for k, v in blob["adam"]["m"].items()},
                            {k: np.array(v) for k, v in blob["adam"]["v"].items()})
    return ModelState(params, blob["K"], blob["d"], blob["hidden"], blob["seed"], adam), spec, cfg
