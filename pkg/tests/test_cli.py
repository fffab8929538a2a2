from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from rankforge.cli import main
from rankforge.graph import save_edge_list

from conftest import tournament

pytestmark = pytest.mark.filterwarnings("ignore:2K=")


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def metric(rows, name):
    return float(next(r["value"] for r in rows if r["metric"] == name))


@pytest.fixture
def noiseless(tmp_path):
    assert main(["generate", str(tmp_path / "d"), "--n", "30", "--p", "1", "--eta", "0", "--seeds", "1"]) == 0
    base = tmp_path / "d" / "ero_n30_p1_eta0_uniform_s0"
    return tmp_path, base.with_suffix(".tsv"), base.parent / (base.name + ".truth.tsv")


def test_rank_serialrank_recovers(noiseless):
    tmp, graph, truth = noiseless
    assert main(["rank", str(graph), "--method", "serialrank", "--out", str(tmp / "s.tsv"),
                 "--metrics", str(tmp / "m.csv"), "--truth", str(truth)]) == 0
    rows = read_csv(tmp / "m.csv")
    assert metric(rows, "kendall_tau") == pytest.approx(1.0)
    assert set(rows[0]) == {"method", "metric", "value", "seed"}
    lines = (tmp / "s.tsv").read_text().splitlines()
    assert len(lines) == 30 and all(len(line.split("\t")) == 3 for line in lines)


def test_rank_output_feeds_eval(noiseless, capsys):
    tmp, graph, truth = noiseless
    main(["rank", str(graph), "--method", "springrank", "--out", str(tmp / "s.tsv")])
    assert main(["eval", str(tmp / "s.tsv"), str(graph), "--truth", str(truth), "--out", str(tmp / "e.csv")]) == 0
    assert metric(read_csv(tmp / "e.csv"), "kendall_tau") == pytest.approx(1.0)
    assert main(["eval", str(tmp / "s.tsv"), str(graph)]) == 0
    assert "upset_simple" in capsys.readouterr().out


def test_mvr_out_of_scope(noiseless, capsys):
    tmp, graph, _ = noiseless
    assert main(["rank", str(graph), "--method", "mvr", "--out", str(tmp / "x.tsv")]) == 1
    assert "not implemented (out of scope)" in capsys.readouterr().err


def test_unknown_method_and_missing_file(noiseless, capsys):
    tmp, graph, _ = noiseless
    assert main(["rank", str(graph), "--method", "magic", "--out", str(tmp / "x.tsv")]) == 1
    assert main(["rank", str(tmp / "nope.tsv"), "--method", "btl", "--out", str(tmp / "x.tsv")]) == 1
    err = capsys.readouterr().err
    assert "unknown method" in err and "cannot read" in err


def test_eval_constant_scores(tmp_path):
    g = tournament(5)
    save_edge_list(g, tmp_path / "g.tsv")
    (tmp_path / "s.tsv").write_text("".join(f"{i}\t0.5\n" for i in range(5)))
    assert main(["eval", str(tmp_path / "s.tsv"), str(tmp_path / "g.tsv"), "--out", str(tmp_path / "m.csv")]) == 0
    assert metric(read_csv(tmp_path / "m.csv"), "upset_simple") == 1.0


def test_eval_mismatched_nodes(tmp_path, capsys):
    save_edge_list(tournament(5), tmp_path / "g.tsv")
    (tmp_path / "s.tsv").write_text("".join(f"{i}\t{i}\n" for i in range(4)))
    assert main(["eval", str(tmp_path / "s.tsv"), str(tmp_path / "g.tsv")]) == 1
    (tmp_path / "s.tsv").write_text("".join(f"{i}\t{i}\n" for i in range(6)))
    assert main(["eval", str(tmp_path / "s.tsv"), str(tmp_path / "g.tsv")]) == 1
    assert "node" in capsys.readouterr().err


def test_train_missing_baseline(noiseless, capsys):
    tmp, graph, _ = noiseless
    code = main(["train", str(graph), "--variant", "proximal_baseline", "--checkpoint", str(tmp / "c.json"),
                 "--report", str(tmp / "r.json")])
    assert code == 1
    assert "--baseline is required" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["rank"])
    assert info.value.code == 2


def _train(tmp, graph, tag, *extra):
    args = ["train", str(graph), "--variant", "proximal_baseline", "--baseline", "syncrank", "--epochs", "15",
            "--patience", "10", "--pretrain-epochs", "3", "--seed", "4", "--checkpoint", str(tmp / f"{tag}.ckpt"),
            "--report", str(tmp / f"{tag}.json"), "--out", str(tmp / f"{tag}.tsv"), *extra]
    assert main(args) == 0


def test_train_deterministic_and_checkpoint_reuse(noiseless):
    tmp, graph, _ = noiseless
    _train(tmp, graph, "a")
    _train(tmp, graph, "b")
    for ext in ("json", "tsv", "ckpt"):
        assert (tmp / f"a.{ext}").read_bytes() == (tmp / f"b.{ext}").read_bytes()
    assert main(["rank", str(graph), "--checkpoint", str(tmp / "a.ckpt"), "--out", str(tmp / "c.tsv")]) == 0
    assert (tmp / "c.tsv").read_bytes() == (tmp / "a.tsv").read_bytes()


def test_train_flags_reach_config(noiseless):
    tmp, graph, _ = noiseless
    _train(tmp, graph, "p", "--pretrain", "serialrank", "--gamma", "3", "--alpha-init", "0.01", "--freeze-alpha",
           "--loss", "ratio", "--k", "3", "--d", "8", "--lr", "0.02")
    blob = json.loads((tmp / "p.ckpt").read_text())
    assert blob["spec"]["pretrain"] == "serialrank_similarity"
    assert blob["spec"]["loss"] == "ratio"
    cfg = blob["train_config"]
    assert cfg["prox"] == {"gamma_steps": 3, "alphas": [0.01, 0.01, 0.01], "trainable_alphas": False}
    assert (cfg["K"], cfg["d"], cfg["lr"]) == (3, 8, 0.02)
    assert blob["params"]["alpha"]["data"] == [0.01, 0.01, 0.01]
    report = json.loads((tmp / "p.json").read_text())
    assert len(report["pretrain_losses"]) == 3


def test_report_and_determinism(tmp_path, monkeypatch):
    main(["generate", str(tmp_path / "d"), "--n", "25", "--p", "1", "--eta", "0", "0.4", "--seeds", "2"])
    manifest = str(tmp_path / "d" / "manifest.json")
    for tag, threads in (("a", "1"), ("b", "3")):
        monkeypatch.setenv("RANKFORGE_THREADS", threads)
        assert main(["report", manifest, "--methods", "serialrank", "btl", "gnn:proximal_baseline:springrank",
                     "--epochs", "5", "--pretrain-epochs", "2", "--out", str(tmp_path / f"{tag}.csv"),
                     "--svg", str(tmp_path / f"{tag}.svg")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    rows = read_csv(tmp_path / "a.csv")
    assert len(rows) == 2 * 3 * 3
    tau = [r for r in rows if r["metric"] == "kendall_tau" and r["eta"] == "0.0" and r["method"] == "serialrank"]
    assert float(tau[0]["mean"]) == pytest.approx(1.0) and int(tau[0]["runs"]) == 2


def test_report_single_seed_zero_std(tmp_path):
    main(["generate", str(tmp_path / "d"), "--n", "20", "--p", "0.5", "--eta", "0.2"])
    assert main(["report", str(tmp_path / "d" / "manifest.json"), "--methods", "davidscore",
                 "--out", str(tmp_path / "r.csv")]) == 0
    assert all(float(r["std"]) == 0.0 for r in read_csv(tmp_path / "r.csv"))


def test_report_empty_manifest(tmp_path):
    from rankforge.synth import sweep

    sweep([], tmp_path)
    assert main(["report", str(tmp_path / "manifest.json"), "--out", str(tmp_path / "r.csv")]) == 0
    assert read_csv(tmp_path / "r.csv") == []


def test_bad_thread_env(tmp_path, monkeypatch, capsys):
    from rankforge.synth import sweep

    sweep([], tmp_path)
    monkeypatch.setenv("RANKFORGE_THREADS", "many")
    assert main(["report", str(tmp_path / "manifest.json"), "--out", str(tmp_path / "r.csv")]) == 1
    assert "RANKFORGE_THREADS" in capsys.readouterr().err


def test_generate_deterministic(tmp_path):
    for tag in ("a", "b"):
        main(["generate", str(tmp_path / tag), "--n", "15", "--p", "0.3", "1", "--eta", "0.1", "--seeds", "2"])
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 2 * 2 * 2 + 1
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_finer_offset(tmp_path):
    (tmp_path / "g.tsv").write_text("0\t1\t0\n1\t2\t2\n")
    assert main(["rank", str(tmp_path / "g.tsv"), "--method", "springrank", "--finer-offset", "0.1",
                 "--out", str(tmp_path / "s.tsv")]) == 0
    scores = [float(line.split("\t")[1]) for line in (tmp_path / "s.tsv").read_text().splitlines()]
    assert scores[0] > scores[1] > scores[2]


def test_console_script(tmp_path):
    save_edge_list(tournament(4), tmp_path / "g.tsv")
    out = subprocess.run([sys.executable, "-m", "rankforge.cli", "rank", str(tmp_path / "g.tsv"), "--method",
                          "pagerank", "--out", str(tmp_path / "s.tsv")], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    ranks = [int(line.split("\t")[2]) for line in (tmp_path / "s.tsv").read_text().splitlines()]
    assert ranks == [1, 2, 3, 4]
