import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from molxfer.cli import main
from molxfer.experiment import (
    ExperimentSpec,
    ProtocolError,
    derive_seed,
    parse_variant,
    random_folds,
    rotations,
    stratified_folds,
)

REPORT_HEADER = (
    "pair,variant,cell,alpha,lam,d,tau,pooling,rotations,val_roc_auc_mean,val_roc_auc_std,"
    "roc_auc_mean,roc_auc_std,pr_auc_mean,pr_auc_std,precision_mean,precision_std,"
    "sensitivity_mean,sensitivity_std,accuracy_mean,accuracy_std,f1_mean,f1_std"
)
EPOCH_HEADER = "pair,variant,cell,rotation,epoch,train_loss,val_roc_auc,lr"
SMALL = ["--d", "4", "--tau", "1", "--epochs", "1"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth", "--seed", "1", "--n-active", "10", "--n-inactive", "10", "--out-dir", str(d)]) == 0
    assert main(["synth", "--seed", "2", "--ranking", "30", "--out-dir", str(d)]) == 0
    return d


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def train(data, out, *extra):
    argv = ["train", "--source", str(data / "source.jsonl"), "--target", str(data / "target.jsonl"),
            "--out-dir", str(out), *SMALL, *extra]
    return main(argv)


def test_synth_is_deterministic(data, tmp_path):
    main(["synth", "--seed", "1", "--n-active", "10", "--n-inactive", "10", "--out-dir", str(tmp_path)])
    for name in ("source.jsonl", "target.jsonl"):
        assert (tmp_path / name).read_bytes() == (data / name).read_bytes()
    lines = (data / "ranking.jsonl").read_text().splitlines()
    assert len(lines) == 30 and all("activity" in json.loads(x) for x in lines)


def test_train_report_shape(data, tmp_path, capsys):
    out = tmp_path / "run"
    assert train(data, out, "--variants", "TAc,TAc-fc,NoT:morgan", "--alpha", "0,0.5", "--checkpoints") == 0
    assert "TAc-fc" in capsys.readouterr().out
    text = (out / "report.csv").read_text()
    assert text.splitlines()[0] == REPORT_HEADER
    rows = read_csv(out / "report.csv")
    assert len(rows) == 3 * 2
    assert all(r["rotations"] == "10" for r in rows)
    epochs = read_csv(out / "epochs.csv")
    assert (out / "epochs.csv").read_text().splitlines()[0] == EPOCH_HEADER
    assert len(epochs) == 6 * 10 * 1
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["variants"]) == {"TAc", "TAc-fc", "NoT:morgan"}
    assert summary["protocol"]["folds"] == 10
    ckpts = sorted(p.name for p in (out / "checkpoints").iterdir())
    assert len(ckpts) == 6 and "target.NoT-morgan.cell1.rot0.ckpt" in ckpts
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["alpha"] == [0.0, 0.5] and cfg["d"] == [4]

    res = tmp_path / "eval.json"
    preds = tmp_path / "preds.csv"
    ck = out / "checkpoints" / "target.TAc-fc.cell1.rot0.ckpt"
    assert main(["eval", "--checkpoint", str(ck), "--data", str(data / "target.jsonl"),
                 "--out", str(res), "--predictions", str(preds)]) == 0
    metrics = json.loads(res.read_text())["metrics"]
    assert set(metrics) == {"roc_auc", "pr_auc", "precision", "sensitivity", "accuracy", "f1"}
    assert len(read_csv(preds)) == 20


def test_train_bytes_are_reproducible(data, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert train(data, a, "--variants", "TAc-c,DT", "--checkpoints", "--workers", "1") == 0
    assert train(data, b, "--variants", "TAc-c,DT", "--checkpoints", "--workers", "2") == 0
    for name in ("report.csv", "epochs.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    for ck in (a / "checkpoints").iterdir():
        assert ck.read_bytes() == (b / "checkpoints" / ck.name).read_bytes()


def test_config_file_and_errors(data, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"variants": ["TAc"], "alpha": [0.5], "folds": 10}))
    assert main(["train", "--config", str(cfg), "--source", str(data / "source.jsonl"),
                 "--target", str(data / "target.jsonl"), "--out-dir", str(tmp_path / "o"), *SMALL]) == 0
    cfg.write_text(json.dumps({"variants": ["TAc"], "bogus": 1}))
    assert main(["train", "--config", str(cfg), "--source", str(data / "source.jsonl"),
                 "--target", str(data / "target.jsonl"), "--out-dir", str(tmp_path / "o2")]) == 2
    assert main(["train", "--source", str(tmp_path / "missing.jsonl"), "--target", str(data / "target.jsonl"),
                 "--out-dir", str(tmp_path / "o3"), *SMALL]) == 2
    assert main(["train", "--source", str(data / "source.jsonl"), "--target", str(data / "target.jsonl"),
                 "--folds", "11", "--out-dir", str(tmp_path / "o4"), *SMALL]) == 2
    assert "fewer than 11 folds" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", str(data / "source.jsonl"), "--data", str(data / "target.jsonl")]) == 2


def test_rank_cli(data, tmp_path):
    out = tmp_path / "rk"
    assert main(["rank", "--data", str(data / "ranking.jsonl"), "--l2", "1e-6,1e-3", *SMALL,
                 "--out-dir", str(out), "--checkpoints"]) == 0
    rows = read_csv(out / "report.csv")
    assert len(rows) == 2 and all(r["folds"] == "5" for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["best_over_cells"]["ci"] == max(float(r["ci_mean"]) for r in rows)
    ck = out / "checkpoints" / "ranking.cell0.fold0.ckpt"
    assert main(["eval", "--checkpoint", str(ck), "--data", str(data / "ranking.jsonl"),
                 "--out", str(tmp_path / "e.json")]) == 0
    assert "ci" in json.loads((tmp_path / "e.json").read_text())["metrics"]


def test_pair_cli(data, tmp_path):
    d = tmp_path / "assays"
    main(["synth", "--seed", "4", "--n-active", "12", "--n-inactive", "12", "--out-dir", str(d)])
    (d / "source.jsonl").rename(d / "X1.jsonl")
    (d / "target.jsonl").rename(d / "X2.jsonl")
    out = tmp_path / "pairs"
    argv = ["pair", str(d / "X1.jsonl"), str(d / "X2.jsonl"), "--margin", "auto", "--out-dir", str(out)]
    assert main(argv) == 2  # shared compounds leave the classes unbalanced and there is no pool
    main(["synth", "--seed", "5", "--n-active", "0", "--n-inactive", "30", "--out-dir", str(tmp_path / "pool")])
    assert main(argv + ["--pool", str(tmp_path / "pool" / "source.jsonl")]) == 0
    man = json.loads((out / "manifest.json").read_text())
    (entry,) = man["pairs"]
    assert (entry["source"], entry["target"]) == ("X1", "X2")
    assert man["margin"] == man["average_margin_p0"] or not entry["in_p0"]
    for role in ("source", "target"):
        lines = (out / entry["files"][role]).read_text().splitlines()
        labels = [json.loads(x)["label"] for x in lines]
        assert labels.count(1) == labels.count(0)
    if entry["selected"]:
        assert main(["train", "--manifest", str(out / "manifest.json"), "--out-dir", str(tmp_path / "t"),
                     "--folds", "3", *SMALL]) == 0


def test_gradcheck_exit_codes(capsys):
    assert main(["gradcheck", "--suite", "nn_core", "--suite", "ranking"]) == 0
    assert "all passed" in capsys.readouterr().out
    assert main(["gradcheck", "--suite", "nn_core", "--tolerance", "1e-30"]) == 1
    assert "FAILED" in capsys.readouterr().out
    assert main(["gradcheck", "--suite", "nope"]) == 2


# -- protocol helpers ---------------------------------------------------------------------


@given(st.integers(10, 40), st.integers(10, 40), st.integers(0, 10**6))
def test_ten_rotations_partition_the_data(n_pos, n_neg, seed):
    labels = np.array([1] * n_pos + [0] * n_neg)
    folds = stratified_folds(labels, 10, seed)
    rots = rotations(folds, 10)
    assert len(rots) == 10
    for i, (tr, va, te) in enumerate(rots):
        parts = [set(tr), set(va), set(te)]
        assert sum(map(len, parts)) == len(labels) and set().union(*parts) == set(range(len(labels)))
        assert set(tr) == set(np.flatnonzero(folds == i)) and set(va) == set(np.flatnonzero(folds == (i + 1) % 10))
    sizes = np.bincount(folds[labels == 1], minlength=10)
    assert sizes.max() - sizes.min() <= 1
    # every fold serves as training exactly once
    assert sorted(int(folds[tr[0]]) for tr, _, _ in rots) == list(range(10))


def test_random_folds_and_errors():
    f = random_folds(23, 5, 0)
    assert np.bincount(f).tolist() == [5, 5, 5, 4, 4]
    with pytest.raises(ProtocolError):
        random_folds(3, 5, 0)
    with pytest.raises(ProtocolError):
        stratified_folds([1] * 9 + [0] * 20, 10, 0)


def test_seed_derivation_and_variants():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2) != derive_seed(0, 2, 1)
    assert parse_variant("NoT:morgan") == ("NoT", "morgan")
    assert parse_variant("TAc-fc") == ("TAc-fc", "encoder")
    for bad in ("TAc:morgan", "Foo"):
        with pytest.raises(ProtocolError):
            parse_variant(bad)
    with pytest.raises(ProtocolError):
        ExperimentSpec(alpha=[])
    spec = ExperimentSpec(variants=["TAc", "DT"], alpha=[0, 0.5, 1], lam=[0.01, 0.1])
    assert len(spec.cells()) == 6
