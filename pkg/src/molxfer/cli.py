"""Command-line entry point: ``molxfer {synth,pair,train,eval,rank,gradcheck}``.

Configs are JSON files; any grid value can be overridden by a flag with a
comma-separated list (``--alpha 0,0.5 --variants TAc,NoT``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import gradcheck
from .experiment import ExperimentSpec, ProtocolError, RankSpec, run_cv, run_rank_cv, write_json
from .metrics import classification_report, ranking_report
from .molgraph.dataset import DatasetError, load_dataset, write_dataset
from .molgraph.synth import DEFAULT_MOTIF, synth_generate, synth_ranking
from .nn.checkpoint import CheckpointError, load_checkpoint
from .pairing import Assay, InsufficientInactives, run_pairing, write_manifest
from .ranking import RankModel
from .transfer import TransferModel


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ProtocolError(f"{path}: config must be a JSON object")
    return obj


def _list(text, cast):
    return [cast(x) for x in text.split(",") if x.strip()]


def _override(cfg, args, keys):
    for key, cast in keys.items():
        value = getattr(args, key, None)
        if value is None:
            continue
        cfg[key] = _list(value, cast) if isinstance(value, str) and cast is not None else value


# -- synth -----------------------------------------------------------------------


def cmd_synth(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.ranking:
        records = synth_ranking(args.seed, args.ranking, args.motif)
        write_dataset(records, out / "ranking.jsonl")
        print(f"wrote {len(records)} ranking compounds to {out / 'ranking.jsonl'}")
        return 0
    source, target = synth_generate(args.seed, args.n_active, args.n_inactive, args.motif, args.overlap)
    write_dataset(source, out / "source.jsonl")
    write_dataset(target, out / "target.jsonl")
    print(f"wrote {len(source)} source and {len(target)} target compounds to {out}")
    return 0


# -- pair ------------------------------------------------------------------------


def cmd_pair(args):
    families = _load_config(args.families)
    assays = [Assay.from_jsonl(p, family=families.get(Path(p).stem)) for p in args.assays]
    pool = load_dataset(args.pool) if args.pool else []
    margin = None if args.margin == "auto" else float(args.margin)
    result = run_pairing(assays, pool, args.seed, margin, args.radius, args.dim, args.workers)
    out = Path(args.out_dir)
    files = {}
    for (a_id, b_id), outcome in result.outcomes.items():
        sub = Path("pairs") / f"{a_id}__{b_id}"
        (out / sub).mkdir(parents=True, exist_ok=True)
        write_dataset(outcome.source.records, out / sub / "source.jsonl")
        write_dataset(outcome.target.records, out / sub / "target.jsonl")
        files[(a_id, b_id)] = {"source": str(sub / "source.jsonl"), "target": str(sub / "target.jsonl")}
    manifest = result.manifest(files)
    write_manifest(manifest, out / "manifest.json")
    sel = result.selection
    print(f"{len(result.outcomes)} candidate pairs, {len(sel.p0)} in P0, {len(sel.p)} selected")
    return 0


# -- train (cross-validated grid) ----------------------------------------------------


def cmd_train(args):
    cfg = _load_config(args.config)
    _override(cfg, args, {"variants": str, "alpha": float, "lam": float, "d": int, "tau": int, "pooling": str})
    for key in ("folds", "epochs", "batch_size", "seed", "workers", "out_dir", "manifest"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.checkpoints:
        cfg["checkpoints"] = True
    if args.source or args.target:
        if not (args.source and args.target):
            raise ProtocolError("--source and --target go together")
        cfg["pairs"] = [{"name": Path(args.target).stem, "source": args.source, "target": args.target}]
    spec = ExperimentSpec.from_json(cfg)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", asdict(spec))
    rows, summary = run_cv(spec)
    for variant, s in summary["variants"].items():
        print(f"{variant:<14} roc_auc={s['roc_auc']:.4f} pr_auc={s['pr_auc']:.4f} f1={s['f1']:.4f}")
    return 0


# -- eval ----------------------------------------------------------------------------


def cmd_eval(args):
    header, _ = load_checkpoint(args.checkpoint)
    records = load_dataset(args.data)
    kind = header.get("kind")
    if kind == "transfer":
        model = TransferModel.load(args.checkpoint)
        scores = model.predict_proba(records)
        labels = [r.label for r in records]
        if any(y is None for y in labels):
            raise DatasetError("every record needs a label for classification metrics")
        metrics = classification_report(scores, np.array(labels))
    elif kind == "rank":
        model = RankModel.load(args.checkpoint)
        scores = model.predict(records)
        metrics = ranking_report([r.activity for r in records], scores)
    else:
        raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    if args.out:
        write_json(args.out, {"checkpoint": str(args.checkpoint), "data": str(args.data), "metrics": metrics})
    if args.predictions:
        with open(args.predictions, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "score"])
            for r, s in zip(records, scores):
                w.writerow([r.id, repr(float(s))])
    for k in sorted(metrics):
        print(f"{k:<12} {metrics[k]:.4f}")
    return 0


# -- rank ----------------------------------------------------------------------------


def cmd_rank(args):
    cfg = _load_config(args.config)
    _override(cfg, args, {"d": int, "tau": int, "pooling": str, "l2": float})
    for key in ("folds", "epochs", "batch_size", "seed", "workers", "out_dir"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.checkpoints:
        cfg["checkpoints"] = True
    if args.data:
        cfg["datasets"] = [{"name": Path(p).stem, "path": p} for p in args.data]
    spec = RankSpec.from_json(cfg)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", asdict(spec))
    rows, summary = run_rank_cv(spec)
    for k, v in summary["best_over_cells"].items():
        print(f"{k:<12} {v:.4f}")
    return 0


# -- gradcheck -------------------------------------------------------------------------


def cmd_gradcheck(args):
    suites = args.suite or None
    if suites:
        unknown = set(suites) - set(gradcheck.SUITES)
        if unknown:
            raise ProtocolError(f"unknown suites {sorted(unknown)}; have {sorted(gradcheck.SUITES)}")
    rows, ok = gradcheck.run_all(args.seed, args.tolerance, suites)
    print(gradcheck.format_table(rows))
    print("all passed" if ok else "FAILED")
    return 0 if ok else 1


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="molxfer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic assay pair or ranking set")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-active", type=int, default=50)
    s.add_argument("--n-inactive", type=int, default=50)
    s.add_argument("--overlap", type=float, default=1.0)
    s.add_argument("--motif", default=DEFAULT_MOTIF)
    s.add_argument("--ranking", type=int, default=0, metavar="N", help="write N ranking compounds instead")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pair", help="curate assays and select transferable pairs")
    s.add_argument("assays", nargs="+", help="assay JSONL files; the file stem is the assay id")
    s.add_argument("--pool", help="JSONL of extra inactives for balancing")
    s.add_argument("--families", help="JSON object mapping assay id to a family tag")
    s.add_argument("--margin", default="0.026", help="number, or 'auto' for the P0 average")
    s.add_argument("--radius", type=int, default=3)
    s.add_argument("--dim", type=int, default=2048)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_pair)

    s = sub.add_parser("train", help="cross-validated training over a hyperparameter grid")
    s.add_argument("--config")
    s.add_argument("--source")
    s.add_argument("--target")
    s.add_argument("--manifest")
    s.add_argument("--variants")
    for key in ("alpha", "lam", "d", "tau", "pooling"):
        s.add_argument(f"--{key}")
    s.add_argument("--folds", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out-dir")
    s.add_argument("--checkpoints", action="store_true", help="save the rotation-0 model of every cell")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a dataset with a saved checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.add_argument("--predictions")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("rank", help="5-fold cross-validated compound ranking")
    s.add_argument("--config")
    s.add_argument("--data", nargs="*")
    for key in ("d", "tau", "pooling", "l2"):
        s.add_argument(f"--{key}")
    s.add_argument("--folds", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out-dir")
    s.add_argument("--checkpoints", action="store_true")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("gradcheck", help="finite-difference checks of every loss")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tolerance", type=float, default=gradcheck.TOLERANCE)
    s.add_argument("--suite", action="append", help="restrict to a suite (repeatable)")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ProtocolError, DatasetError, CheckpointError, InsufficientInactives, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
