"""Curate three assays and pick the transferable pairs.

Two assays share a motif and scaffolds; the third uses different
scaffolds.  The pipeline removes conflicts, balances classes and
compares each pair through four mean cross-similarities.
"""

import json

from molxfer.molgraph import synth_generate
from molxfer.pairing import Assay, run_pairing

a, b = synth_generate(seed=1, n_active=20, n_inactive=30, overlap=1.0)
_, c = synth_generate(seed=2, n_active=20, n_inactive=30, overlap=0.0, motif="c1ccncc1")
pool = synth_generate(seed=9, n_active=0, n_inactive=40)[0]
assays = [Assay("kinase_a", a), Assay("kinase_b", b), Assay("other", c)]

result = run_pairing(assays, pool, seed=0, margin=None)  # margin=None: threshold at the P0 average
print(f"{'pair':<22} {'pp':>6} {'nn':>6} {'pn':>6} {'np':>6} {'margin':>7}  P0  P")
for (s, t), out in result.outcomes.items():
    p = out.profile
    print(
        f"{s + '/' + t:<22} {p.sim_pp:6.3f} {p.sim_nn:6.3f} {p.sim_pn:6.3f} {p.sim_np:6.3f} {p.margin_sum:7.3f}"
        f"  {'y' if (s, t) in result.selection.p0 else '-':>2}  {'y' if (s, t) in result.selection.p else '-'}"
    )
print("\naverage margin over P0:", result.selection.average_margin)
print(json.dumps(result.manifest()["pairs"][0], indent=2)[:400], "...")
