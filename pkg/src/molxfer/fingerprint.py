"""Morgan-style circular fingerprints and count Tanimoto similarity.

Identifiers come from a fixed 64-bit mixing function, so vectors are
identical across runs and platforms.  They are not bit-compatible with
RDKit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .molgraph.graph import BOND_CODE, MolecularGraph

_MASK = (1 << 64) - 1
_SEED = 0x9E3779B97F4A7C15


class DimensionMismatch(ValueError):
    pass


class EmptySet(ValueError):
    pass


def _mix(x: int) -> int:
    # splitmix64 finaliser
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def hash_ints(values) -> int:
    h = _SEED
    for v in values:
        h = _mix(h ^ (int(v) & _MASK))
    return h


@dataclass(frozen=True)
class FingerprintVector:
    counts: np.ndarray
    radius: int
    dim: int

    def __post_init__(self):
        if self.counts.shape != (self.dim,):
            raise DimensionMismatch(f"counts of shape {self.counts.shape} for dim {self.dim}")
        if (self.counts < 0).any():
            raise ValueError("fingerprint counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def atom_identifiers(g: MolecularGraph, radius: int) -> list[list[int]]:
    """Identifiers per round: ``ids[r][u]`` for r = 0..radius."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    current = [
        hash_ints((a.element, a.degree, a.formal_charge + 8, int(a.aromatic))) for a in g.atoms
    ]
    rounds = [current]
    nbrs = [[] for _ in range(g.n_atoms)]
    for b in g.bonds:
        code = BOND_CODE[b.features.order]
        nbrs[b.u].append((code, b.v))
        nbrs[b.v].append((code, b.u))
    for _ in range(radius):
        prev = current
        current = []
        for u in range(g.n_atoms):
            env = sorted((code, prev[k]) for code, k in nbrs[u])
            flat = [prev[u], len(env)]
            for code, ident in env:
                flat.extend((code, ident))
            current.append(hash_ints(flat))
        rounds.append(current)
    return rounds


def morgan_count(g: MolecularGraph, radius: int = 3, dim: int = 2048) -> FingerprintVector:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    counts = np.zeros(dim, dtype=np.int64)
    for ids in atom_identifiers(g, radius):
        for ident in ids:
            counts[ident % dim] += 1
    return FingerprintVector(counts, radius, dim)


def morgan_binary(g: MolecularGraph, radius: int = 3, dim: int = 2048) -> FingerprintVector:
    fp = morgan_count(g, radius, dim)
    return FingerprintVector(np.minimum(fp.counts, 1), radius, dim)


def _counts(x) -> np.ndarray:
    return x.counts if isinstance(x, FingerprintVector) else np.asarray(x)


def tanimoto(a, b) -> float:
    """Sum(min) / sum(max); two all-zero vectors count as identical."""
    ca, cb = _counts(a), _counts(b)
    if ca.shape != cb.shape:
        raise DimensionMismatch(f"{ca.shape} vs {cb.shape}")
    hi = np.maximum(ca, cb).sum()
    if hi == 0:
        return 1.0
    return float(np.minimum(ca, cb).sum() / hi)


def fingerprint_matrix(graphs, radius=3, dim=2048, binary=False) -> np.ndarray:
    fn = morgan_binary if binary else morgan_count
    if not graphs:
        return np.zeros((0, dim), dtype=np.int64)
    return np.stack([fn(g, radius, dim).counts for g in graphs])


def tanimoto_matrix(A: np.ndarray, B: np.ndarray, chunk: int = 64) -> np.ndarray:
    """All-pairs count Tanimoto between the rows of ``A`` and ``B``."""
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"{A.shape[1]} vs {B.shape[1]}")
    sa, sb = A.sum(axis=1), B.sum(axis=1)
    out = np.empty((A.shape[0], B.shape[0]))
    for lo in range(0, A.shape[0], chunk):
        block = A[lo : lo + chunk]
        mins = np.minimum(block[:, None, :], B[None, :, :]).sum(axis=2)
        maxs = sa[lo : lo + chunk, None] + sb[None, :] - mins
        with np.errstate(invalid="ignore", divide="ignore"):
            out[lo : lo + chunk] = np.where(maxs == 0, 1.0, mins / np.where(maxs == 0, 1, maxs))
    return out


def mean_cross_similarity(A, B, radius: int = 3, dim: int = 2048) -> float:
    """Mean count Tanimoto over all |A| x |B| pairs of graphs."""
    A, B = list(A), list(B)
    if not A or not B:
        raise EmptySet("both compound sets must be non-empty")
    return float(tanimoto_matrix(fingerprint_matrix(A, radius, dim), fingerprint_matrix(B, radius, dim)).mean())
