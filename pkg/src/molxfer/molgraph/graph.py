"""Featurised heavy-atom molecular graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# symbol -> (atomic number, standard atomic mass)
ELEMENTS = {
    "H": (1, 1.008), "He": (2, 4.0026), "Li": (3, 6.94), "Be": (4, 9.0122),
    "B": (5, 10.81), "C": (6, 12.011), "N": (7, 14.007), "O": (8, 15.999),
    "F": (9, 18.998), "Ne": (10, 20.180), "Na": (11, 22.990), "Mg": (12, 24.305),
    "Al": (13, 26.982), "Si": (14, 28.085), "P": (15, 30.974), "S": (16, 32.06),
    "Cl": (17, 35.45), "Ar": (18, 39.948), "K": (19, 39.098), "Ca": (20, 40.078),
    "Ti": (22, 47.867), "V": (23, 50.942), "Cr": (24, 51.996), "Mn": (25, 54.938),
    "Fe": (26, 55.845), "Co": (27, 58.933), "Ni": (28, 58.693), "Cu": (29, 63.546),
    "Zn": (30, 65.38), "Ga": (31, 69.723), "Ge": (32, 72.630), "As": (33, 74.922),
    "Se": (34, 78.971), "Br": (35, 79.904), "Kr": (36, 83.798), "Rb": (37, 85.468),
    "Sr": (38, 87.62), "Zr": (40, 91.224), "Mo": (42, 95.95), "Ru": (44, 101.07),
    "Rh": (45, 102.91), "Pd": (46, 106.42), "Ag": (47, 107.87), "Cd": (48, 112.41),
    "In": (49, 114.82), "Sn": (50, 118.71), "Sb": (51, 121.76), "Te": (52, 127.60),
    "I": (53, 126.90), "Xe": (54, 131.29), "Cs": (55, 132.91), "Ba": (56, 137.33),
    "Gd": (64, 157.25), "Pt": (78, 195.08), "Au": (79, 196.97), "Hg": (80, 200.59),
    "Tl": (81, 204.38), "Pb": (82, 207.2), "Bi": (83, 208.98),
}
SYMBOL_OF = {z: s for s, (z, _) in ELEMENTS.items()}

# one-hot element alphabet; anything else falls into a trailing "other" slot
ELEMENT_ALPHABET = ("B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Br", "I")
_ELEMENT_SLOT = {ELEMENTS[s][0]: i for i, s in enumerate(ELEMENT_ALPHABET)}
MAX_DEGREE = 5
CHARGES = (-2, -1, 0, 1, 2)

BOND_ORDERS = ("single", "double", "triple", "aromatic")
BOND_CODE = {name: i + 1 for i, name in enumerate(BOND_ORDERS)}
# valence consumed by each bond order (aromatic counted as 1.5)
BOND_VALENCE = {"single": 1.0, "double": 2.0, "triple": 3.0, "aromatic": 1.5}

ATOM_DIM = len(ELEMENT_ALPHABET) + 1 + (MAX_DEGREE + 1) + len(CHARGES) + 1 + 1
BOND_DIM = len(BOND_ORDERS) + 1


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class AtomFeatures:
    element: int
    degree: int
    formal_charge: int = 0
    aromatic: bool = False

    @property
    def symbol(self) -> str:
        return SYMBOL_OF.get(self.element, f"Z{self.element}")

    @property
    def mass_scaled(self) -> float:
        sym = SYMBOL_OF.get(self.element)
        mass = ELEMENTS[sym][1] if sym else 2.0 * self.element
        return mass / 100.0

    @property
    def encoded(self) -> np.ndarray:
        vec = np.zeros(ATOM_DIM)
        vec[_ELEMENT_SLOT.get(self.element, len(ELEMENT_ALPHABET))] = 1.0
        off = len(ELEMENT_ALPHABET) + 1
        vec[off + min(self.degree, MAX_DEGREE)] = 1.0
        off += MAX_DEGREE + 1
        charge = min(max(self.formal_charge, CHARGES[0]), CHARGES[-1])
        vec[off + CHARGES.index(charge)] = 1.0
        off += len(CHARGES)
        vec[off] = float(self.aromatic)
        vec[off + 1] = self.mass_scaled
        return vec


@dataclass(frozen=True)
class BondFeatures:
    order: str
    in_ring: bool = False

    @property
    def encoded(self) -> np.ndarray:
        vec = np.zeros(BOND_DIM)
        vec[BOND_ORDERS.index(self.order)] = 1.0
        vec[-1] = float(self.in_ring)
        return vec


@dataclass(frozen=True)
class Bond:
    u: int
    v: int
    features: BondFeatures


def _ring_flags(n_atoms, pairs):
    """A bond is in a ring iff its endpoints stay connected without it."""
    adj = [set() for _ in range(n_atoms)]
    for i, (u, v) in enumerate(pairs):
        adj[u].add((v, i))
        adj[v].add((u, i))
    flags = []
    for i, (u, v) in enumerate(pairs):
        seen, stack = {u}, [u]
        found = False
        while stack and not found:
            a = stack.pop()
            for b, j in adj[a]:
                if j == i or b in seen:
                    continue
                if b == v:
                    found = True
                    break
                seen.add(b)
                stack.append(b)
        flags.append(found)
    return flags


@dataclass(frozen=True)
class MolecularGraph:
    """Atoms, undirected bonds and the derived directed-edge index.

    Bond ``i = (u, v)`` owns directed edges ``2i = u->v`` and
    ``2i+1 = v->u``; ``neighbor_index[u]`` lists ``(k, edge k->u)`` for
    every neighbour ``k``.
    """

    atoms: tuple
    bonds: tuple
    directed_edges: tuple = field(init=False, repr=False, compare=False)
    neighbor_index: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        edges, nbrs = [], [[] for _ in range(n)]
        for i, bond in enumerate(self.bonds):
            u, v = bond.u, bond.v
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"bond {i} references atom outside 0..{n - 1}")
            if u == v:
                raise GraphError(f"bond {i} is a self loop on atom {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate bond between atoms {key[0]} and {key[1]}")
            seen.add(key)
            edges.append((u, v))
            edges.append((v, u))
            nbrs[v].append((u, 2 * i))
            nbrs[u].append((v, 2 * i + 1))
        object.__setattr__(self, "directed_edges", tuple(edges))
        object.__setattr__(self, "neighbor_index", tuple(tuple(x) for x in nbrs))

    @classmethod
    def build(cls, elements, bonds, charges=None, aromatic=None) -> "MolecularGraph":
        """Construct from atom descriptors and ``(u, v, order)`` triples.

        ``elements`` may hold symbols or atomic numbers.  Degrees and ring
        flags are derived from the bond list.
        """
        n = len(elements)
        zs = []
        for e in elements:
            if isinstance(e, str):
                if e not in ELEMENTS:
                    raise GraphError(f"unknown element {e!r}")
                zs.append(ELEMENTS[e][0])
            else:
                zs.append(int(e))
        charges = list(charges) if charges is not None else [0] * n
        aromatic = list(aromatic) if aromatic is not None else [False] * n
        if len(charges) != n or len(aromatic) != n:
            raise GraphError("per-atom lists have inconsistent lengths")
        pairs, orders = [], []
        for b in bonds:
            u, v, order = int(b[0]), int(b[1]), b[2] if len(b) > 2 else "single"
            if order not in BOND_CODE:
                raise GraphError(f"unknown bond order {order!r}")
            pairs.append((u, v))
            orders.append(order)
        degree = [0] * n
        for i, (u, v) in enumerate(pairs):
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"bond {i} references atom outside 0..{n - 1}")
            degree[u] += 1
            degree[v] += 1
        rings = _ring_flags(n, pairs)
        atoms = tuple(
            AtomFeatures(zs[i], degree[i], int(charges[i]), bool(aromatic[i])) for i in range(n)
        )
        bond_objs = tuple(
            Bond(u, v, BondFeatures(o, r)) for (u, v), o, r in zip(pairs, orders, rings)
        )
        return cls(atoms, bond_objs)

    # -- derived views -------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def neighbors(self, u: int) -> list[int]:
        return [k for k, _ in self.neighbor_index[u]]

    def bond_between(self, u: int, v: int):
        for b in self.bonds:
            if (b.u, b.v) in ((u, v), (v, u)):
                return b
        return None

    @cached_property
    def atom_matrix(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((0, ATOM_DIM))
        return np.stack([a.encoded for a in self.atoms])

    @cached_property
    def edge_arrays(self):
        """``(src, dst, rev, bond_matrix)`` over directed edges."""
        m = len(self.directed_edges)
        src = np.array([e[0] for e in self.directed_edges], dtype=np.intp)
        dst = np.array([e[1] for e in self.directed_edges], dtype=np.intp)
        rev = np.arange(m, dtype=np.intp) ^ 1
        if self.bonds:
            per_bond = np.stack([b.features.encoded for b in self.bonds])
            bond_matrix = np.repeat(per_bond, 2, axis=0)
        else:
            bond_matrix = np.zeros((0, BOND_DIM))
        return src, dst, rev, bond_matrix

    def permute(self, perm) -> "MolecularGraph":
        """Relabel atoms so that old atom ``i`` becomes ``perm[i]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.n_atoms)):
            raise GraphError("not a permutation of the atom indices")
        atoms = [None] * self.n_atoms
        for i, p in enumerate(perm):
            atoms[p] = self.atoms[i]
        bonds = tuple(Bond(perm[b.u], perm[b.v], b.features) for b in self.bonds)
        return MolecularGraph(tuple(atoms), bonds)

    # -- JSON ----------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "atoms": [
                {"element": a.symbol, "charge": a.formal_charge, "aromatic": a.aromatic}
                for a in self.atoms
            ],
            "bonds": [[b.u, b.v, b.features.order] for b in self.bonds],
        }

    @classmethod
    def from_json(cls, obj) -> "MolecularGraph":
        try:
            atoms = obj["atoms"]
            bonds = obj["bonds"]
            elements = [a["element"] for a in atoms]
            charges = [int(a.get("charge", 0)) for a in atoms]
            aromatic = [bool(a.get("aromatic", False)) for a in atoms]
        except (KeyError, TypeError, AttributeError) as exc:
            raise GraphError(f"malformed graph object: {exc}") from None
        for b in bonds:
            if not isinstance(b, (list, tuple)) or len(b) not in (2, 3):
                raise GraphError(f"malformed bond entry {b!r}")
        return cls.build(elements, bonds, charges, aromatic)
