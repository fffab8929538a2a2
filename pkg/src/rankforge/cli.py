"""Command-line front end: ``rankforge {generate,rank,train,eval,report}``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines, model, synth
from .graph import DiGraph, comparison_matrices, load_edge_list
from .metrics import MetricConfig, kendall_tau, scores_to_ranks, upset_naive, upset_ratio, upset_simple
from .unfold import ProximalConfig

PRETRAIN_MODES = {"warmup": "non_proximal_warmup", "serialrank": "serialrank_similarity", "none": "none"}
METRIC_FIELDS = ("method", "metric", "value", "seed")


class CLIError(Exception):
    pass


# --- file helpers -------------------------------------------------------------


def node_names(g: DiGraph) -> list[str]:
    return list(g.labels) if g.labels is not None else [str(i) for i in range(g.n)]


def write_scores(path, g: DiGraph, scores: np.ndarray) -> None:
    ranks = scores_to_ranks(scores)
    with open(path, "w") as fh:
        for name, s, r in zip(node_names(g), scores, ranks):
            fh.write(f"{name}\t{float(s)!r}\t{int(r)}\n")


def read_scores(path, g: DiGraph) -> np.ndarray:
    names = node_names(g)
    index = {name: i for i, name in enumerate(names)}
    out = np.full(g.n, np.nan)
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) not in (2, 3):
                raise CLIError(f"{path}: row {lineno}: expected node<TAB>score[<TAB>rank]")
            if parts[0] not in index:
                raise CLIError(f"{path}: node {parts[0]!r} is not in the graph")
            if parts[0] in seen:
                raise CLIError(f"{path}: node {parts[0]!r} listed twice")
            seen.add(parts[0])
            try:
                out[index[parts[0]]] = float(parts[1])
            except ValueError:
                raise CLIError(f"{path}: row {lineno}: bad score {parts[1]!r}") from None
    if len(seen) != g.n:
        missing = sorted(set(names) - seen)[:5]
        raise CLIError(f"{path}: node set does not match the graph (missing e.g. {missing})")
    return out


def read_truth(path, g: DiGraph) -> np.ndarray:
    return read_scores(path, g)


def write_metrics(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**row, "value": repr(float(row["value"]))})


def evaluate(g: DiGraph, scores: np.ndarray, method: str, seed: int, truth: np.ndarray | None = None,
             epsilon: float = 0.01) -> list[dict]:
    cm = comparison_matrices(g)
    values = {
        "upset_simple": upset_simple(cm, scores),
        "upset_naive": upset_naive(cm, scores),
        "upset_ratio": upset_ratio(cm, scores, MetricConfig(epsilon=epsilon)),
    }
    if truth is not None:
        values["kendall_tau"] = kendall_tau(scores, truth)
    return [{"method": method, "metric": k, "value": v, "seed": seed} for k, v in values.items()]


def threads() -> int:
    raw = os.environ.get("RANKFORGE_THREADS", "")
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise CLIError(f"RANKFORGE_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise CLIError("RANKFORGE_THREADS must be at least 1")
    return value


# --- argument parsing ---------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=model.VARIANTS, default="proximal_baseline")
    p.add_argument("--baseline", help="baseline seeding proximal_baseline")
    p.add_argument("--loss", choices=("ratio", "margin", "sum"), default="sum")
    p.add_argument("--pretrain", choices=tuple(PRETRAIN_MODES), default="warmup")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=200)
    p.add_argument("--pretrain-epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--gamma", type=int, default=5, help="number of proximal steps")
    p.add_argument("--alpha-init", type=float, help="initial step size (default 1/(n-1))")
    p.add_argument("--freeze-alpha", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankforge", description="Rank players from pairwise-comparison digraphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic ERO graphs and a manifest")
    p.add_argument("out_dir")
    p.add_argument("--n", type=int, default=350)
    p.add_argument("--p", type=float, nargs="+", default=[0.05])
    p.add_argument("--eta", type=float, nargs="+", default=[0.0])
    p.add_argument("--style", choices=("uniform", "gamma"), nargs="+", default=["uniform"])
    p.add_argument("--seeds", type=int, default=1, help="number of seeds per setting")
    p.add_argument("--seed", type=int, default=0, help="first seed")

    p = sub.add_parser("rank", help="score a graph with a baseline or a trained checkpoint")
    p.add_argument("graph")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--method", help=f"one of: {', '.join(sorted(baselines.BASELINES))}")
    g.add_argument("--checkpoint")
    p.add_argument("--out", required=True, help="scores TSV")
    p.add_argument("--metrics", help="metrics CSV")
    p.add_argument("--truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--finer-offset", type=float)

    p = sub.add_parser("train", help="train a model variant on one graph")
    p.add_argument("graph")
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--finer-offset", type=float)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report", required=True, help="training report JSON")
    p.add_argument("--out", help="scores TSV at the selected epoch")
    p.add_argument("--truth")

    p = sub.add_parser("eval", help="metrics for a scores file")
    p.add_argument("scores")
    p.add_argument("graph")
    p.add_argument("--truth")
    p.add_argument("--out", help="metrics CSV (default stdout)")
    p.add_argument("--method", default="scores")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--finer-offset", type=float)

    p = sub.add_parser("report", help="mean/std table over a generated manifest")
    p.add_argument("manifest")
    p.add_argument("--methods", nargs="+", default=["serialrank", "springrank"],
                   help="baseline names, or gnn:<variant>[:<baseline>]")
    p.add_argument("--seeds", type=int, nargs="*", help="restrict to these manifest seeds")
    p.add_argument("--out", required=True, help="aggregated CSV")
    p.add_argument("--svg", help="optional plot of kendall tau against eta")
    _add_train_flags(p)
    return parser


def _train_config(args) -> model.TrainConfig:
    gamma = args.gamma
    if gamma < 0:
        raise CLIError("--gamma must be nonnegative")
    alphas = None if args.alpha_init is None else (args.alpha_init,) * gamma
    try:
        prox = ProximalConfig(gamma_steps=gamma, alphas=alphas, trainable_alphas=not args.freeze_alpha)
        return model.TrainConfig(max_epochs=args.epochs, patience=args.patience, pretrain_epochs=args.pretrain_epochs,
                                 lr=args.lr, K=args.k, d=args.d, prox=prox)
    except ValueError as exc:
        raise CLIError(str(exc)) from None


def _variant(variant: str, baseline: str | None, pretrain: str, loss: str) -> model.VariantSpec:
    if variant == "proximal_baseline" and baseline is None:
        raise CLIError("--baseline is required for proximal_baseline")
    if variant != "proximal_baseline" and baseline is not None:
        raise CLIError("--baseline only applies to proximal_baseline")
    if baseline is not None:
        _check_method(baseline)
    return model.VariantSpec(variant, baseline, PRETRAIN_MODES[pretrain], loss)


def _check_method(name: str) -> None:
    if name in baselines.OUT_OF_SCOPE:
        raise CLIError(f"method {name!r} not implemented (out of scope)")
    if name not in baselines.BASELINES:
        raise CLIError(f"unknown method {name!r}; choose from {', '.join(sorted(baselines.BASELINES))}")


def _load(path, finer_offset) -> DiGraph:
    try:
        return load_edge_list(path, finer_offset=finer_offset)
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}") from None


# --- commands -----------------------------------------------------------------


def cmd_generate(args) -> int:
    seeds = range(args.seed, args.seed + args.seeds)
    configs = synth.grid(args.p, args.eta, args.style, seeds, n=args.n)
    manifest = synth.sweep(configs, args.out_dir)
    print(f"wrote {len(manifest['entries'])} graphs to {args.out_dir}")
    return 0


def cmd_rank(args) -> int:
    g = _load(args.graph, args.finer_offset)
    truth = read_truth(args.truth, g) if args.truth else None
    if args.method is not None:
        _check_method(args.method)
        scores = baselines.run_baseline(args.method, g)
        label = args.method
    else:
        state, spec, cfg = model.load_checkpoint(args.checkpoint)
        scores = model.apply_model(state, spec, g, prox_cfg=cfg.prox)
        label = spec.name if spec.baseline is None else f"{spec.name}:{spec.baseline}"
    write_scores(args.out, g, scores)
    if args.metrics:
        write_metrics(args.metrics, evaluate(g, scores, label, args.seed, truth))
    return 0


def cmd_train(args) -> int:
    g = _load(args.graph, args.finer_offset)
    truth = read_truth(args.truth, g) if args.truth else None
    spec = _variant(args.variant, args.baseline, args.pretrain, args.loss)
    cfg = _train_config(args)
    report = model.train(g, spec, cfg, seed=args.seed)
    if truth is not None:
        report.metrics["kendall_tau"] = kendall_tau(report.scores, truth)
    model.save_checkpoint(args.checkpoint, report.state, spec, cfg)
    Path(args.report).write_text(report.to_json())
    if args.out:
        write_scores(args.out, g, report.scores)
    return 0


def cmd_eval(args) -> int:
    g = _load(args.graph, args.finer_offset)
    scores = read_scores(args.scores, g)
    truth = read_truth(args.truth, g) if args.truth else None
    rows = evaluate(g, scores, args.method, args.seed, truth)
    if args.out:
        write_metrics(args.out, rows)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**row, "value": repr(float(row["value"]))})
    return 0


def _parse_method(token: str, args) -> tuple[str, model.VariantSpec | None]:
    if not token.startswith("gnn:"):
        _check_method(token)
        return token, None
    parts = token.split(":")
    if len(parts) not in (2, 3) or parts[1] not in model.VARIANTS:
        raise CLIError(f"bad model method {token!r}; expected gnn:<variant>[:<baseline>]")
    return token, _variant(parts[1], parts[2] if len(parts) == 3 else None, args.pretrain, args.loss)


def _run_cell(entry: dict, base: Path, method: str, spec, args) -> dict:
    g = load_edge_list(base / entry["graph"], n=entry["config"]["n"])
    truth = synth.load_truth(base / entry["truth"])
    seed = entry["config"]["seed"]
    if spec is None:
        scores = baselines.run_baseline(method, g)
    else:
        scores = model.train(g, spec, _train_config(args), seed=seed).scores
    cm = comparison_matrices(g)
    return {
        "kendall_tau": kendall_tau(scores, truth),
        "upset_simple": upset_simple(cm, scores),
        "upset_naive": upset_naive(cm, scores),
    }


def _setting(cfg: dict) -> tuple:
    return cfg["n"], cfg["p"], cfg["eta"], cfg["style"]


def cmd_report(args) -> int:
    manifest_path = Path(args.manifest)
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise CLIError(f"cannot read {manifest_path}: {exc.strerror}") from None
    entries = manifest.get("entries", [])
    if args.seeds:
        entries = [e for e in entries if e["config"]["seed"] in set(args.seeds)]
    methods = [_parse_method(m, args) for m in args.methods]
    cells = [(e, m, spec) for e in entries for m, spec in methods]
    base = manifest_path.parent
    with ThreadPoolExecutor(max_workers=threads()) as pool:
        results = list(pool.map(lambda c: _run_cell(c[0], base, c[1], c[2], args), cells))

    grouped: dict[tuple, dict[str, list[float]]] = {}
    for (entry, method, _), res in zip(cells, results):
        bucket = grouped.setdefault(_setting(entry["config"]) + (method,), {})
        for k, v in res.items():
            bucket.setdefault(k, []).append(v)

    rows = []
    for key in sorted(grouped, key=lambda k: (k[0], k[1], k[2], k[3], k[4])):
        n, p, eta, style, method = key
        for metric, vals in sorted(grouped[key].items()):
            rows.append({"n": n, "p": p, "eta": eta, "style": style, "method": method, "metric": metric,
                         "mean": repr(float(np.mean(vals))), "std": repr(float(np.std(vals))), "runs": len(vals)})
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=("n", "p", "eta", "style", "method", "metric", "mean", "std", "runs"),
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    if args.svg:
        plot_report(rows, args.svg)
    return 0


def plot_report(rows: list[dict], path) -> None:
    """Kendall tau against eta, one line per (method, p, style)."""
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "rankforge"
    lines: dict[tuple, list[tuple[float, float, float]]] = {}
    for row in rows:
        if row["metric"] != "kendall_tau":
            continue
        key = (row["method"], row["p"], row["style"])
        lines.setdefault(key, []).append((row["eta"], float(row["mean"]), float(row["std"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (method, p, style), pts in sorted(lines.items()):
        pts.sort()
        x, y, e = zip(*pts)
        ax.errorbar(x, y, yerr=e, marker="o", capsize=2, label=f"{method} p={p:g} {style}")
    ax.set_xlabel("eta")
    ax.set_ylabel("Kendall tau")
    if lines:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


COMMANDS = {"generate": cmd_generate, "rank": cmd_rank, "train": cmd_train, "eval": cmd_eval, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (CLIError, ValueError, KeyError, NotImplementedError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
