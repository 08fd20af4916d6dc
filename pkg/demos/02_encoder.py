"""Embed molecules with the directed message passing encoder.

Shows the batch shape, that relabelling atoms does not change the
embedding, and how the attention weights spread over atoms.
"""

import numpy as np

from molxfer.dmpnn import (
    EncoderConfig,
    GraphBatch,
    atom_readout,
    attention_weights,
    build_encoder,
    encode,
    encode_batch,
    init_edge_hidden,
    message_pass,
)
from molxfer.molgraph import parse_smiles

cfg = EncoderConfig(d=16, tau=3, pooling="attention")
params = build_encoder(cfg, seed=0)
smiles = ["CCO", "c1ccncc1", "CC(=O)[O-]", "NS(=O)(=O)c1ccccc1"]
graphs = [parse_smiles(s) for s in smiles]

R = encode_batch(graphs, params, cfg)
print("batch embedding shape:", R.shape)

g = graphs[3]
perm = np.random.default_rng(1).permutation(g.n_atoms)
diff = np.abs(encode(g, params, cfg).data - encode(g.permute(perm), params, cfg).data).max()
print(f"max change after shuffling atom order: {diff:.1e}")

batch = GraphBatch.from_graphs([g])
state = init_edge_hidden(batch, params)
for _ in range(cfg.tau):
    state = message_pass(batch, state, params)
w = attention_weights(atom_readout(batch, state, params), batch, params).data.ravel()
print("\nattention over", smiles[3])
for atom, weight in zip(g.atoms, w):
    print(f"  {atom.symbol:<2} {'*' * int(round(weight * 60))} {weight:.3f}")
print("weights sum to", round(float(w.sum()), 12))
