"""Synthetic assay generator with a planted active motif.

Compounds are assembled from small decoy fragments joined by single
bonds.  Actives additionally carry the motif; inactives are checked to be
motif free.  Source and target assays draw decoys from per-assay
vocabularies whose shared fraction is set by ``overlap``.
"""

from __future__ import annotations

import numpy as np

from .dataset import CompoundRecord
from .graph import BOND_VALENCE, MolecularGraph
from .match import count_substructures, has_substructure
from .smiles import parse_smiles

DECOY_FRAGMENTS = (
    "c1ccccc1", "c1ccncc1", "c1ccoc1", "c1ccsc1", "C1CCCCC1", "C1CCNCC1",
    "C1CCOCC1", "C1CC1", "C1CCCC1", "CC(C)C", "CCCC", "CCO", "CN(C)C",
    "CC(=O)C", "OC(=O)C", "CSC", "c1ccc2ccccc2c1", "CC#N", "FC(F)F", "ClCC",
    "BrCC", "CC=CC", "COC", "NCCN",
)
DEFAULT_MOTIF = "S(=O)(=O)N"
MAX_VALENCE = {5: 3, 6: 4, 7: 3, 8: 2, 9: 1, 15: 3, 16: 6, 17: 1, 35: 1, 53: 1}

_FRAGMENT_CACHE: dict[str, MolecularGraph] = {}


def _fragment(smiles):
    if smiles not in _FRAGMENT_CACHE:
        _FRAGMENT_CACHE[smiles] = parse_smiles(smiles)
    return _FRAGMENT_CACHE[smiles]


def _free_valence(g: MolecularGraph):
    used = [0.0] * g.n_atoms
    for b in g.bonds:
        used[b.u] += BOND_VALENCE[b.features.order]
        used[b.v] += BOND_VALENCE[b.features.order]
    # aromatic n/o/s with two ring bonds come out at or below zero
    return [MAX_VALENCE.get(a.element, 4) - u for a, u in zip(g.atoms, used)]


def join(a: MolecularGraph, b: MolecularGraph, ua: int, ub: int) -> MolecularGraph:
    """Disjoint union of ``a`` and ``b`` plus a single bond ``ua -- ub``."""
    off = a.n_atoms
    atoms = list(a.atoms) + list(b.atoms)
    bonds = [(x.u, x.v, x.features.order) for x in a.bonds]
    bonds += [(x.u + off, x.v + off, x.features.order) for x in b.bonds]
    bonds.append((ua, ub + off, "single"))
    return MolecularGraph.build(
        [x.element for x in atoms],
        bonds,
        [x.formal_charge for x in atoms],
        [x.aromatic for x in atoms],
    )


def _attach(rng, core: MolecularGraph, piece: MolecularGraph) -> MolecularGraph | None:
    free_core = [i for i, f in enumerate(_free_valence(core)) if f >= 1]
    free_piece = [i for i, f in enumerate(_free_valence(piece)) if f >= 1]
    if not free_core or not free_piece:
        return None
    return join(core, piece, free_core[rng.integers(len(free_core))], free_piece[rng.integers(len(free_piece))])


def scaffold_vocabularies(seed: int, overlap: float, vocab_size: int = 8, pool=DECOY_FRAGMENTS):
    """Pick the source and target decoy vocabularies (lists of fragment SMILES)."""
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    n_shared = int(round(overlap * vocab_size))
    n_own = vocab_size - n_shared
    if n_shared + 2 * n_own > len(pool):
        raise ValueError("fragment pool too small for this vocabulary size and overlap")
    rng = np.random.default_rng([seed, 0])
    perm = [pool[i] for i in rng.permutation(len(pool))]
    shared = perm[:n_shared]
    src = shared + perm[n_shared : n_shared + n_own]
    tgt = shared + perm[n_shared + n_own : n_shared + 2 * n_own]
    return sorted(src), sorted(tgt)


def _decoy(rng, vocab, max_fragments):
    n = int(rng.integers(1, max_fragments + 1))
    g = _fragment(vocab[rng.integers(len(vocab))])
    for _ in range(n - 1):
        joined = _attach(rng, g, _fragment(vocab[rng.integers(len(vocab))]))
        if joined is not None:
            g = joined
    return g


def _make_assay(rng, vocab, motif, n_active, n_inactive, prefix, max_fragments, attempts=1000):
    graphs, labels = [], []
    for label, count in ((1, n_active), (0, n_inactive)):
        made = 0
        tries = 0
        while made < count:
            tries += 1
            if tries > attempts * max(count, 1):
                raise RuntimeError("could not build enough compounds for the requested motif")
            g = _decoy(rng, vocab, max_fragments)
            if has_substructure(g, motif):
                continue
            if label == 1:
                g = _attach(rng, g, motif)
                if g is None:
                    continue
            graphs.append(g)
            labels.append(label)
            made += 1
    order = rng.permutation(len(graphs))
    return [
        CompoundRecord(f"{prefix}-{k:04d}", graphs[i], label=labels[i])
        for k, i in enumerate(order)
    ]


def synth_generate(
    seed: int,
    n_active: int,
    n_inactive: int,
    motif: MolecularGraph | str = DEFAULT_MOTIF,
    overlap: float = 1.0,
    vocab_size: int = 8,
    max_fragments: int = 3,
):
    """Generate a ``(source, target)`` pair of labelled assays."""
    if n_active < 0 or n_inactive < 0:
        raise ValueError("counts must be non-negative")
    if isinstance(motif, str):
        motif = parse_smiles(motif)
    if motif.n_atoms < 2:
        raise ValueError("motif needs at least two atoms")
    src_vocab, tgt_vocab = scaffold_vocabularies(seed, overlap, vocab_size)
    source = _make_assay(
        np.random.default_rng([seed, 1]), src_vocab, motif, n_active, n_inactive, "src", max_fragments
    )
    target = _make_assay(
        np.random.default_rng([seed, 2]), tgt_vocab, motif, n_active, n_inactive, "tgt", max_fragments
    )
    return source, target


def synth_ranking(
    seed: int,
    n: int,
    motif: MolecularGraph | str = DEFAULT_MOTIF,
    max_copies: int = 4,
    vocab=DECOY_FRAGMENTS,
    max_fragments: int = 3,
    attempts: int = 50,
):
    """``n`` compounds whose activity is a linear function of planted motif counts.

    ``activity = copies + 0.01 * n_atoms + 0.0001 * n_hetero`` where
    ``copies`` is the number of distinct motif embeddings.  Draws that
    repeat an earlier activity value are discarded and redrawn.
    """
    if isinstance(motif, str):
        motif = parse_smiles(motif)
    rng = np.random.default_rng([seed, 3])
    vocab = list(vocab)
    records, seen = [], set()
    for _ in range(attempts * max(n, 1)):
        if len(records) == n:
            break
        g = _decoy(rng, vocab, max_fragments)
        for _ in range(int(rng.integers(0, max_copies + 1))):
            joined = _attach(rng, g, motif)
            if joined is not None:
                g = joined
        copies = count_substructures(g, motif)
        hetero = sum(1 for a in g.atoms if a.element != 6)
        activity = round(copies + 0.01 * g.n_atoms + 0.0001 * hetero, 6)
        if activity in seen:
            continue
        seen.add(activity)
        records.append(CompoundRecord(f"rk-{len(records):04d}", g, activity=activity))
    if len(records) < n:
        raise RuntimeError(f"only {len(records)} distinct activities after {attempts * n} draws")
    return records
