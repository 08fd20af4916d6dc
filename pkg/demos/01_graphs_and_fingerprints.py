"""Parse a few molecules, look at their graphs and compare them by fingerprint."""

from molxfer.fingerprint import morgan_count, tanimoto
from molxfer.molgraph import SmilesError, has_substructure, parse_smiles

mols = {
    "ethanol": "CCO",
    "propanol": "CCCO",
    "benzene": "c1ccccc1",
    "phenol": "Oc1ccccc1",
    "acetate": "CC(=O)[O-]",
}
graphs = {name: parse_smiles(s) for name, s in mols.items()}

for name, g in graphs.items():
    orders = sorted({b.features.order for b in g.bonds})
    print(f"{name:<9} atoms={g.n_atoms:<2} bonds={g.n_bonds:<2} orders={orders}")

# count fingerprints: every atom contributes one identifier per radius
fps = {name: morgan_count(g, radius=3, dim=2048) for name, g in graphs.items()}
print("\nfingerprint totals:", {n: fp.total for n, fp in fps.items()})

print("\npairwise Tanimoto")
names = list(fps)
print(" " * 10 + "".join(f"{n[:8]:>9}" for n in names))
for a in names:
    print(f"{a:<10}" + "".join(f"{tanimoto(fps[a].counts, fps[b].counts):9.3f}" for b in names))

ring = parse_smiles("c1ccccc1")
print("\nphenol contains a benzene ring:", has_substructure(graphs["phenol"], ring))
print("ethanol contains a benzene ring:", has_substructure(graphs["ethanol"], ring))

try:
    parse_smiles("C[C@H](O)N")
except SmilesError as exc:
    print("\nstereo is rejected:", exc)
