"""Bioassay curation and transferable-pair selection.

For every candidate pair of assays: drop within-assay label conflicts and
duplicates, split or drop compounds shared across the pair, balance each
assay to 1:1 actives/inactives, then compare the two assays through four
mean cross-similarities.  A pair is kept when the active-active
similarity beats both mixed-label similarities by a margin.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fingerprint import fingerprint_matrix, hash_ints, atom_identifiers, tanimoto_matrix
from .molgraph.dataset import CompoundRecord, load_dataset

DEFAULT_MARGIN = 0.026


class InsufficientInactives(ValueError):
    pass


def canonical_key(record: CompoundRecord) -> str:
    """SMILES as given when present (assumed canonical), else a permutation-invariant graph hash."""
    if record.smiles is not None:
        return "smiles:" + record.smiles
    g = record.graph
    rounds = atom_identifiers(g, max(3, g.n_atoms))
    h = hash_ints([g.n_atoms, g.n_bonds] + sorted(rounds[-1]))
    return f"graph:{h:016x}"


@dataclass
class Assay:
    id: str
    records: list
    family: str | None = None
    keys: list = field(init=False, repr=False)

    def __post_init__(self):
        self.records = list(self.records)
        if any(r.label is None for r in self.records):
            raise ValueError(f"assay {self.id!r}: every record needs a label")
        self.keys = [canonical_key(r) for r in self.records]

    def replace(self, records) -> "Assay":
        return Assay(self.id, records, self.family)

    @property
    def actives(self):
        return [r for r in self.records if r.label == 1]

    @property
    def inactives(self):
        return [r for r in self.records if r.label == 0]

    @classmethod
    def from_jsonl(cls, path, id=None, family=None) -> "Assay":
        return cls(id or Path(path).stem, load_dataset(path), family)


def dedup_assay(a: Assay) -> Assay:
    """Keep the first of same-label duplicates; drop compounds recorded with both labels."""
    labels: dict[str, set] = {}
    for k, r in zip(a.keys, a.records):
        labels.setdefault(k, set()).add(r.label)
    kept, seen = [], set()
    for k, r in zip(a.keys, a.records):
        if len(labels[k]) > 1 or k in seen:
            continue
        seen.add(k)
        kept.append(r)
    return a.replace(kept)


def resolve_pair(a: Assay, b: Assay, seed) -> tuple[Assay, Assay]:
    """Remove cross-assay label conflicts; split shared same-label compounds between the two.

    floor(n/2) of the n shared compounds (chosen uniformly) stay in ``a``,
    the rest in ``b``.
    """
    a, b = dedup_assay(a), dedup_assay(b)
    label_a = dict(zip(a.keys, (r.label for r in a.records)))
    label_b = dict(zip(b.keys, (r.label for r in b.records)))
    shared = [k for k in a.keys if k in label_b]
    conflict = {k for k in shared if label_a[k] != label_b[k]}
    same = [k for k in shared if k not in conflict]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(same))
    to_a = {same[i] for i in perm[: len(same) // 2]}
    drop_a = conflict | (set(same) - to_a)
    drop_b = conflict | to_a
    ra = [r for k, r in zip(a.keys, a.records) if k not in drop_a]
    rb = [r for k, r in zip(b.keys, b.records) if k not in drop_b]
    return a.replace(ra), b.replace(rb)


def balance_assay(a: Assay, inactive_pool, seed) -> Assay:
    """All actives plus an equal number of inactives, topped up from ``inactive_pool`` if needed.

    Pool records enter as inactives with ids prefixed ``pool:``.
    """
    rng = np.random.default_rng(seed)
    actives = a.actives
    own = a.inactives
    n = len(actives)
    if len(own) >= n:
        pick = np.sort(rng.choice(len(own), size=n, replace=False))
        return a.replace(actives + [own[i] for i in pick])
    present = set(a.keys)
    pool = []
    for r in inactive_pool:
        # relabelled inactive under a prefixed id so it cannot clash with the assay's own ids
        rec = CompoundRecord("pool:" + r.id, r.graph, 0, r.activity, r.smiles)
        k = canonical_key(rec)
        if k not in present:
            present.add(k)
            pool.append(rec)
    need = n - len(own)
    if len(pool) < need:
        raise InsufficientInactives(f"assay {a.id!r} needs {need} more inactives, pool has {len(pool)}")
    pick = np.sort(rng.choice(len(pool), size=need, replace=False))
    return a.replace(actives + own + [pool[i] for i in pick])


@dataclass(frozen=True)
class PairProfile:
    sim_pp: float
    sim_nn: float
    sim_pn: float
    sim_np: float

    @property
    def margin_sum(self) -> float:
        return (self.sim_pp - self.sim_pn) + (self.sim_pp - self.sim_np)

    @property
    def in_p0(self) -> bool:
        return self.sim_pp > self.sim_pn and self.sim_pp > self.sim_np

    def to_json(self) -> dict:
        return {"sim_pp": self.sim_pp, "sim_nn": self.sim_nn, "sim_pn": self.sim_pn, "sim_np": self.sim_np}


def _mean_sim(A, B) -> float:
    if A.shape[0] == 0 or B.shape[0] == 0:
        return float("nan")
    return float(tanimoto_matrix(A, B).mean())


def profile(a: Assay, b: Assay, radius: int = 3, dim: int = 2048) -> PairProfile:
    """Mean count-Tanimoto between the active/inactive halves of two assays."""
    fa = fingerprint_matrix([r.graph for r in a.records], radius, dim)
    fb = fingerprint_matrix([r.graph for r in b.records], radius, dim)
    ya = np.array([r.label for r in a.records], dtype=bool)
    yb = np.array([r.label for r in b.records], dtype=bool)
    if not (ya.any() and (~ya).any() and yb.any() and (~yb).any()):
        raise ValueError("both assays need actives and inactives to be profiled")
    return PairProfile(
        sim_pp=_mean_sim(fa[ya], fb[yb]),
        sim_nn=_mean_sim(fa[~ya], fb[~yb]),
        sim_pn=_mean_sim(fa[ya], fb[~yb]),
        sim_np=_mean_sim(fa[~ya], fb[yb]),
    )


@dataclass
class Selection:
    p0: list
    p: list
    average_margin: float | None  # mean margin_sum over P0
    margin: float


def select_pairs(profiles: dict, margin: float | None = DEFAULT_MARGIN, families: dict | None = None) -> Selection:
    """P0: strict active-active dominance.  P: P0 pairs with margin_sum >= margin.

    ``margin=None`` uses the average margin_sum over P0 as the threshold.
    When ``families`` maps assay id to a tag, pairs with two different
    tags are ignored.
    """
    keys = list(profiles)
    if families:
        keys = [
            k for k in keys
            if families.get(k[0]) is None or families.get(k[1]) is None or families[k[0]] == families[k[1]]
        ]
    p0 = [k for k in keys if profiles[k].in_p0]
    avg = float(np.mean([profiles[k].margin_sum for k in p0])) if p0 else None
    threshold = avg if margin is None else margin
    p = [k for k in p0 if threshold is not None and profiles[k].margin_sum >= threshold]
    return Selection(p0, p, avg, threshold)


# -- end-to-end ----------------------------------------------------------------


@dataclass
class PairOutcome:
    source: Assay
    target: Assay
    profile: PairProfile


@dataclass
class PairingResult:
    outcomes: dict  # (id_a, id_b) -> PairOutcome
    selection: Selection

    def manifest(self, files: dict | None = None) -> dict:
        pairs = []
        for key, out in self.outcomes.items():
            entry = {
                "source": key[0],
                "target": key[1],
                "profile": out.profile.to_json(),
                "margin_sum": out.profile.margin_sum,
                "in_p0": key in self.selection.p0,
                "selected": key in self.selection.p,
                "n_source": len(out.source.records),
                "n_target": len(out.target.records),
            }
            if files and key in files:
                entry["files"] = files[key]
            pairs.append(entry)
        return {
            "margin": self.selection.margin,
            "average_margin_p0": self.selection.average_margin,
            "pairs": pairs,
        }


def candidate_pairs(assays):
    """Unordered pairs in input order, restricted to same-family pairs when both carry a tag."""
    out = []
    for i in range(len(assays)):
        for j in range(i + 1, len(assays)):
            fa, fb = assays[i].family, assays[j].family
            if fa is not None and fb is not None and fa != fb:
                continue
            out.append((i, j))
    return out


def run_pairing(
    assays,
    inactive_pool=(),
    seed: int = 0,
    margin: float | None = DEFAULT_MARGIN,
    radius: int = 3,
    dim: int = 2048,
    workers: int = 1,
) -> PairingResult:
    assays = list(assays)
    ids = [a.id for a in assays]
    if len(set(ids)) != len(ids):
        raise ValueError("assay ids must be unique")
    pool = list(inactive_pool)

    def one(task):
        idx, (i, j) = task
        seq = np.random.SeedSequence([seed, idx])
        s_resolve, s_a, s_b = seq.spawn(3)
        a, b = resolve_pair(assays[i], assays[j], s_resolve)
        a = balance_assay(a, pool, s_a)
        b = balance_assay(b, pool, s_b)
        return (assays[i].id, assays[j].id), PairOutcome(a, b, profile(a, b, radius, dim))

    tasks = list(enumerate(candidate_pairs(assays)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, tasks))
    else:
        results = [one(t) for t in tasks]
    outcomes = dict(results)
    selection = select_pairs({k: o.profile for k, o in outcomes.items()}, margin)
    return PairingResult(outcomes, selection)


def write_manifest(manifest: dict, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
