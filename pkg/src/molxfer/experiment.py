"""Cross-validation protocols, grid search and report files.

Classification: the target assay is split into 10 stratified folds.
Rotation ``i`` trains on fold ``i``, validates on fold ``i + 1`` and
tests on the other eight, so each rotation sees a 1:1:8 split.  The
source assay is used whole.

Ranking: 5 random folds, four for training and one for testing.

Every training run draws its seed from ``(seed, pair, variant, cell,
rotation)``, so results do not depend on worker count or scheduling.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dmpnn import EncoderConfig
from .metrics import classification_report, ranking_report
from .molgraph.dataset import load_dataset
from .ranking import RankConfig, train_gnncp
from .transfer import VARIANTS, TransferConfig, baseline_fcn, train, train_dann

CLASSIFICATION_METRICS = ("roc_auc", "pr_auc", "precision", "sensitivity", "accuracy", "f1")
GRID_KEYS = ("alpha", "lam", "d", "tau", "pooling")


class ProtocolError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    pairs: list = field(default_factory=list)  # dicts: name, source, target (JSONL paths)
    manifest: str | None = None
    variants: list = field(default_factory=lambda: ["TAc"])
    alpha: list = field(default_factory=lambda: [0.5])
    lam: list = field(default_factory=lambda: [0.01])
    d: list = field(default_factory=lambda: [50])
    tau: list = field(default_factory=lambda: [3])
    pooling: list = field(default_factory=lambda: ["attention"])
    folds: int = 10
    epochs: int = 40
    batch_size: int = 10
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs"
    checkpoints: bool = False

    def __post_init__(self):
        for key in GRID_KEYS + ("variants",):
            if not getattr(self, key):
                raise ProtocolError(f"grid '{key}' is empty")
        for v in self.variants:
            parse_variant(v)
        if self.folds < 3:
            raise ProtocolError("need at least 3 folds")

    @classmethod
    def from_json(cls, obj) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ProtocolError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    def cells(self):
        return [dict(zip(GRID_KEYS, c)) for c in itertools.product(*(getattr(self, k) for k in GRID_KEYS))]

    def resolved_pairs(self):
        pairs = list(self.pairs)
        if self.manifest:
            base = Path(self.manifest).parent
            with open(self.manifest, encoding="utf-8") as fh:
                man = json.load(fh)
            for entry in man["pairs"]:
                if entry.get("selected") and "files" in entry:
                    pairs.append({
                        "name": f"{entry['source']}__{entry['target']}",
                        "source": str(base / entry["files"]["source"]),
                        "target": str(base / entry["files"]["target"]),
                    })
        if not pairs:
            raise ProtocolError("no assay pairs to run")
        return pairs


def parse_variant(name: str):
    """'TAc-fc' or 'NoT:morgan' -> (variant, features)."""
    variant, _, features = name.partition(":")
    features = features or "encoder"
    if variant not in VARIANTS:
        raise ProtocolError(f"unknown variant {variant!r}")
    if features != "encoder" and variant not in ("NoT", "DT"):
        raise ProtocolError(f"{name}: fingerprint features only for NoT/DT")
    return variant, features


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def stratified_folds(labels, k: int, seed) -> np.ndarray:
    """Fold id per item; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.intp)
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise ProtocolError(f"class {cls} has {len(idx)} compounds, fewer than {k} folds")
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return folds


def random_folds(n: int, k: int, seed) -> np.ndarray:
    if n < k:
        raise ProtocolError(f"{n} compounds cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.intp)
    folds[perm] = np.arange(n) % k
    return folds


def rotations(folds: np.ndarray, k: int):
    """(train, val, test) index arrays for each rotation."""
    out = []
    for i in range(k):
        val_fold = (i + 1) % k
        train_idx = np.flatnonzero(folds == i)
        val_idx = np.flatnonzero(folds == val_fold)
        test_idx = np.flatnonzero((folds != i) & (folds != val_fold))
        out.append((train_idx, val_idx, test_idx))
    return out


# -- classification CV ---------------------------------------------------------


def _transfer_config(variant, features, cell, spec, seed):
    enc = EncoderConfig(d=int(cell["d"]), tau=int(cell["tau"]), pooling=cell["pooling"])
    return TransferConfig(
        variant=variant, alpha=float(cell["alpha"]), lam=float(cell["lam"]), encoder=enc,
        features=features, epochs=spec["epochs"], batch_size=spec["batch_size"], seed=seed,
    )


def _run_one(task):
    variant, features = parse_variant(task["variant"])
    cfg = _transfer_config(variant, features, task["cell"], task["spec"], task["seed"])
    source, tr, va, te = task["source"], task["train"], task["val"], task["test"]
    if variant == "DANN":
        result = train_dann(source, tr, va, cfg)
    elif variant in ("NoT", "DT"):
        result = baseline_fcn(features, variant, source, tr, va, cfg)
    else:
        result = train(variant, source, tr, va, cfg)
    scores = result.model.predict_proba(te)
    metrics = classification_report(scores, np.array([r.label for r in te]))
    ckpt = None
    if task.get("checkpoint"):
        ckpt = task["checkpoint"]
        Path(ckpt).parent.mkdir(parents=True, exist_ok=True)
        result.save(ckpt)
    return {
        "metrics": metrics,
        "best_epoch": result.best_epoch,
        "val_roc_auc": result.best_val,
        "history": result.history,
        "checkpoint": ckpt,
    }


def _map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def run_cv(spec: ExperimentSpec, out_dir=None):
    """Train every variant x grid cell on every rotation; write report files.

    Returns ``(rows, summary)``; rows hold mean and std of the six test
    metrics over rotations.
    """
    out = Path(out_dir or spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = spec.cells()
    plain = {"epochs": spec.epochs, "batch_size": spec.batch_size}
    tasks, keys = [], []
    for p_idx, pair in enumerate(spec.resolved_pairs()):
        source = load_dataset(pair["source"])
        target = load_dataset(pair["target"])
        name = pair.get("name", f"pair{p_idx}")
        folds = stratified_folds([r.label for r in target], spec.folds, derive_seed(spec.seed, p_idx))
        splits = rotations(folds, spec.folds)
        for v_idx, variant in enumerate(spec.variants):
            for c_idx, cell in enumerate(cells):
                for rot, (tr, va, te) in enumerate(splits):
                    ckpt = None
                    if spec.checkpoints and rot == 0:
                        ckpt = str(out / "checkpoints" / f"{name}.{variant.replace(':', '-')}.cell{c_idx}.rot0.ckpt")
                    tasks.append({
                        "variant": variant,
                        "cell": cell,
                        "spec": plain,
                        "seed": derive_seed(spec.seed, p_idx, v_idx, c_idx, rot),
                        "source": source,
                        "train": [target[i] for i in tr],
                        "val": [target[i] for i in va],
                        "test": [target[i] for i in te],
                        "checkpoint": ckpt,
                    })
                    keys.append((name, variant, c_idx, rot))
    results = _map(_run_one, tasks, spec.workers)

    grouped: dict = {}
    for (name, variant, c_idx, rot), res in zip(keys, results):
        grouped.setdefault((name, variant, c_idx), []).append(res)
    rows = []
    for (name, variant, c_idx), runs in grouped.items():
        row = {"pair": name, "variant": variant, "cell": c_idx}
        row.update(cells[c_idx])
        row["rotations"] = len(runs)
        row["val_roc_auc_mean"], row["val_roc_auc_std"] = _mean_std([r["val_roc_auc"] for r in runs])
        for m in CLASSIFICATION_METRICS:
            row[f"{m}_mean"], row[f"{m}_std"] = _mean_std([r["metrics"][m] for r in runs])
        rows.append(row)

    epoch_rows = []
    for (name, variant, c_idx, rot), res in zip(keys, results):
        for h in res["history"]:
            epoch_rows.append({"pair": name, "variant": variant, "cell": c_idx, "rotation": rot, **h})

    summary = _summarize(rows, spec)
    write_csv(out / "report.csv", rows)
    write_csv(out / "epochs.csv", epoch_rows)
    write_json(out / "summary.json", summary)
    return rows, summary


def _summarize(rows, spec):
    """Per variant: the cell with the best mean validation ROC-AUC, averaged over pairs."""
    per_variant = {}
    for variant in spec.variants:
        by_pair = {}
        for row in rows:
            if row["variant"] != variant:
                continue
            best = by_pair.get(row["pair"])
            if best is None or row["val_roc_auc_mean"] > best["val_roc_auc_mean"]:
                by_pair[row["pair"]] = row
        chosen = [by_pair[k] for k in sorted(by_pair)]
        per_variant[variant] = {
            "pairs": len(chosen),
            "selected_cells": {r["pair"]: r["cell"] for r in chosen},
            **{m: float(np.mean([r[f"{m}_mean"] for r in chosen])) for m in CLASSIFICATION_METRICS},
        }
    return {
        "protocol": {"folds": spec.folds, "split": "1 train / 1 val / rest test", "seed": spec.seed},
        "grid": {k: list(getattr(spec, k)) for k in GRID_KEYS},
        "variants": per_variant,
    }


# -- ranking CV ------------------------------------------------------------------


@dataclass
class RankSpec:
    datasets: list = field(default_factory=list)  # dicts: name, path
    d: list = field(default_factory=lambda: [50])
    tau: list = field(default_factory=lambda: [3])
    pooling: list = field(default_factory=lambda: ["attention"])
    l2: list = field(default_factory=lambda: [1e-6])
    folds: int = 5
    epochs: int = 50
    batch_size: int = 10
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs-rank"
    checkpoints: bool = False

    RANK_GRID = ("d", "tau", "pooling", "l2")

    def __post_init__(self):
        for key in self.RANK_GRID:
            if not getattr(self, key):
                raise ProtocolError(f"grid '{key}' is empty")
        if not self.datasets:
            raise ProtocolError("no ranking datasets")
        if self.folds < 2:
            raise ProtocolError("need at least 2 folds")

    @classmethod
    def from_json(cls, obj) -> "RankSpec":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ProtocolError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    def cells(self):
        return [dict(zip(self.RANK_GRID, c)) for c in itertools.product(*(getattr(self, k) for k in self.RANK_GRID))]


def _rank_one(task):
    cell = task["cell"]
    cfg = RankConfig(
        encoder=EncoderConfig(d=int(cell["d"]), tau=int(cell["tau"]), pooling=cell["pooling"]),
        l2=float(cell["l2"]), epochs=task["epochs"], batch_size=task["batch_size"], seed=task["seed"],
    )
    result = train_gnncp(task["train"], cfg)
    test = task["test"]
    metrics = ranking_report([r.activity for r in test], result.model.predict(test))
    if task.get("checkpoint"):
        Path(task["checkpoint"]).parent.mkdir(parents=True, exist_ok=True)
        result.model.save(task["checkpoint"])
    return metrics


def run_rank_cv(spec: RankSpec, out_dir=None):
    out = Path(out_dir or spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = spec.cells()
    tasks, keys = [], []
    for d_idx, ds in enumerate(spec.datasets):
        records = load_dataset(ds["path"])
        name = ds.get("name", f"assay{d_idx}")
        folds = random_folds(len(records), spec.folds, derive_seed(spec.seed, d_idx))
        for c_idx, cell in enumerate(cells):
            for k in range(spec.folds):
                ckpt = None
                if spec.checkpoints and k == 0:
                    ckpt = str(out / "checkpoints" / f"{name}.cell{c_idx}.fold0.ckpt")
                tasks.append({
                    "cell": cell,
                    "epochs": spec.epochs,
                    "batch_size": spec.batch_size,
                    "seed": derive_seed(spec.seed, d_idx, c_idx, k),
                    "train": [records[i] for i in np.flatnonzero(folds != k)],
                    "test": [records[i] for i in np.flatnonzero(folds == k)],
                    "checkpoint": ckpt,
                })
                keys.append((name, c_idx, k))
    results = _map(_rank_one, tasks, spec.workers)

    grouped: dict = {}
    for (name, c_idx, _), res in zip(keys, results):
        grouped.setdefault((name, c_idx), []).append(res)
    rows = []
    for (name, c_idx), runs in grouped.items():
        metric_names = sorted(set.intersection(*(set(r) for r in runs)))
        row = {"dataset": name, "cell": c_idx, **cells[c_idx], "folds": len(runs)}
        for m in metric_names:
            row[f"{m}_mean"], row[f"{m}_std"] = _mean_std([r[m] for r in runs])
        rows.append(row)
    # best value of each metric over cells, per dataset, then averaged over datasets
    best: dict = {}
    for name in sorted({r["dataset"] for r in rows}):
        mine = [r for r in rows if r["dataset"] == name]
        for key in mine[0]:
            if key.endswith("_mean"):
                best.setdefault(key[:-5], []).append(max(r[key] for r in mine if key in r))
    summary = {
        "protocol": {"folds": spec.folds, "seed": spec.seed},
        "grid": {k: list(getattr(spec, k)) for k in spec.RANK_GRID},
        "best_over_cells": {k: float(np.mean(v)) for k, v in sorted(best.items())},
    }
    write_csv(out / "report.csv", rows)
    write_json(out / "summary.json", summary)
    return rows, summary


# -- report files ----------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return v


def csv_text(rows) -> str:
    buf = io.StringIO()
    if rows:
        header = list(rows[0])
        for r in rows[1:]:
            header += [k for k in r if k not in header]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in header])
    return buf.getvalue()


def write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(rows))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = [
    "ExperimentSpec",
    "RankSpec",
    "ProtocolError",
    "run_cv",
    "run_rank_cv",
    "stratified_folds",
    "random_folds",
    "rotations",
    "derive_seed",
    "parse_variant",
    "csv_text",
]
