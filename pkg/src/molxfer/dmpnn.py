"""Directed message-passing encoder with mean or attention readout.

Hidden states live on directed edges.  A list of graphs is encoded as one
disjoint union: edge and atom indices are offset per graph and readout
sums are taken per graph segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .molgraph.graph import ATOM_DIM, BOND_DIM, MolecularGraph
from .nn import autodiff as ad
from .nn.params import ParamSet, add_mlp, init_glorot, mlp

POOLINGS = ("mean", "attention")


class FeatureWidthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 50
    tau: int = 3
    pooling: str = "attention"
    attn_hidden: int = 100
    atom_dim: int = ATOM_DIM
    bond_dim: int = BOND_DIM

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if self.tau < 0 or self.d < 1:
            raise ValueError("need tau >= 0 and d >= 1")

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "tau": self.tau,
            "pooling": self.pooling,
            "attn_hidden": self.attn_hidden,
            "atom_dim": self.atom_dim,
            "bond_dim": self.bond_dim,
        }


def init_encoder(params: ParamSet, cfg: EncoderConfig, rng, prefix: str = "F"):
    """Register encoder weights (no biases in the message-passing matrices)."""
    params.add(f"{prefix}.W0", init_glorot((cfg.d, cfg.atom_dim + cfg.bond_dim), rng))
    params.add(f"{prefix}.W", init_glorot((cfg.d, cfg.d), rng))
    params.add(f"{prefix}.We", init_glorot((cfg.d, cfg.atom_dim + cfg.d), rng))
    if cfg.pooling == "attention":
        add_mlp(params, f"{prefix}.attn", cfg.d, cfg.attn_hidden, 1, rng)


@dataclass
class GraphBatch:
    """Index arrays for the disjoint union of several graphs."""

    atoms: np.ndarray  # (N, atom_dim)
    edge_init: np.ndarray  # (E, atom_dim + bond_dim): [a_src || e_uv]
    src: np.ndarray
    dst: np.ndarray
    rev: np.ndarray
    atom_graph: np.ndarray  # graph id per atom
    atom_counts: np.ndarray
    n_graphs: int

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @classmethod
    def from_graphs(cls, graphs) -> "GraphBatch":
        graphs = list(graphs)
        atoms, edge_init, src, dst, rev, seg = [], [], [], [], [], []
        atom_off = edge_off = 0
        for gi, g in enumerate(graphs):
            s, t, r, bond_matrix = g.edge_arrays
            A = g.atom_matrix
            atoms.append(A)
            edge_init.append(np.concatenate([A[s], bond_matrix], axis=1) if len(s) else
                             np.zeros((0, A.shape[1] + bond_matrix.shape[1])))
            src.append(s + atom_off)
            dst.append(t + atom_off)
            rev.append(r + edge_off)
            seg.append(np.full(g.n_atoms, gi, dtype=np.intp))
            atom_off += g.n_atoms
            edge_off += len(s)
        counts = np.array([g.n_atoms for g in graphs], dtype=np.intp)
        if (counts == 0).any():
            raise ValueError("graphs without atoms cannot be encoded")
        return cls(
            atoms=np.concatenate(atoms) if atoms else np.zeros((0, ATOM_DIM)),
            edge_init=np.concatenate(edge_init) if edge_init else np.zeros((0, ATOM_DIM + BOND_DIM)),
            src=np.concatenate(src).astype(np.intp) if src else np.zeros(0, np.intp),
            dst=np.concatenate(dst).astype(np.intp) if dst else np.zeros(0, np.intp),
            rev=np.concatenate(rev).astype(np.intp) if rev else np.zeros(0, np.intp),
            atom_graph=np.concatenate(seg) if seg else np.zeros(0, np.intp),
            atom_counts=counts,
            n_graphs=len(graphs),
        )


@dataclass
class EdgeState:
    h: ad.Value  # (E, d), one row per directed edge
    h0: ad.Value
    iteration: int


def _as_batch(g) -> GraphBatch:
    if isinstance(g, GraphBatch):
        return g
    if isinstance(g, MolecularGraph):
        return GraphBatch.from_graphs([g])
    return GraphBatch.from_graphs(g)


def _check_widths(batch: GraphBatch, params: ParamSet, prefix: str):
    W0 = params[f"{prefix}.W0"]
    if batch.edge_init.shape[1] != W0.shape[1]:
        raise FeatureWidthMismatch(
            f"edge input width {batch.edge_init.shape[1]} but {prefix}.W0 expects {W0.shape[1]}"
        )


def init_edge_hidden(g, params: ParamSet, prefix: str = "F") -> EdgeState:
    """h0_uv = ReLU(W0 [a_u || e_uv]), using the source atom's features."""
    batch = _as_batch(g)
    _check_widths(batch, params, prefix)
    h0 = ad.relu(ad.dense(batch.edge_init, params[f"{prefix}.W0"]))
    return EdgeState(h0, h0, 0)


def message_pass(g, state: EdgeState, params: ParamSet, prefix: str = "F") -> EdgeState:
    """One update: m_uv = sum over k in N(u)\\v of h_ku;  h_uv = ReLU(h0_uv + W m_uv)."""
    batch = _as_batch(g)
    incoming = ad.scatter_add(state.h, batch.dst, batch.n_atoms)  # per atom: sum of h_ku
    m = ad.sub(ad.gather(incoming, batch.src), ad.gather(state.h, batch.rev))
    h = ad.relu(ad.add(state.h0, ad.dense(m, params[f"{prefix}.W"])))
    return EdgeState(h, state.h0, state.iteration + 1)


def atom_readout(g, state: EdgeState, params: ParamSet, prefix: str = "F") -> ad.Value:
    """s_u = ReLU(We [a_u || sum over k in N(u) of h_ku]); returns (N, d)."""
    batch = _as_batch(g)
    h_atom = ad.scatter_add(state.h, batch.dst, batch.n_atoms)
    return ad.relu(ad.dense(ad.concat(batch.atoms, h_atom, axis=1), params[f"{prefix}.We"]))


def pool_mean(s, batch: GraphBatch) -> ad.Value:
    inv = (1.0 / batch.atom_counts)[:, None]
    return ad.mul(ad.scatter_add(s, batch.atom_graph, batch.n_graphs), inv)


def attention_weights(s, batch: GraphBatch, params: ParamSet, prefix: str = "F") -> ad.Value:
    """Softmax of f_a(s_u) over the atoms of each graph; (N, 1)."""
    scores = mlp(s, params, f"{prefix}.attn", output="linear")
    return ad.segment_softmax(scores, batch.atom_graph, batch.n_graphs)


def pool_attention(s, batch: GraphBatch, params: ParamSet, prefix: str = "F") -> ad.Value:
    """r = sum_u (1 + w_u) * s_u."""
    w = attention_weights(s, batch, params, prefix)
    return ad.scatter_add(ad.mul(ad.add(w, 1.0), s), batch.atom_graph, batch.n_graphs)


def encode_batch(graphs, params: ParamSet, cfg: EncoderConfig, prefix: str = "F") -> ad.Value:
    """Embeddings for a list of graphs, one row each: (B, d)."""
    batch = _as_batch(graphs)
    state = init_edge_hidden(batch, params, prefix)
    for _ in range(cfg.tau):
        state = message_pass(batch, state, params, prefix)
    s = atom_readout(batch, state, params, prefix)
    if cfg.pooling == "mean":
        return pool_mean(s, batch)
    return pool_attention(s, batch, params, prefix)


def encode(g: MolecularGraph, params: ParamSet, cfg: EncoderConfig, prefix: str = "F") -> ad.Value:
    """Embedding r of a single graph, shape (d,)."""
    r = encode_batch([g], params, cfg, prefix)
    return ad.sum(r, axis=0)


def build_encoder(cfg: EncoderConfig, seed) -> ParamSet:
    params = ParamSet()
    init_encoder(params, cfg, np.random.default_rng(seed))
    return params
