from .dataset import (
    CompoundRecord,
    DatasetError,
    DuplicateId,
    dumps_dataset,
    load_dataset,
    record_from_json,
    write_dataset,
)
from .graph import (
    ATOM_DIM,
    BOND_DIM,
    AtomFeatures,
    Bond,
    BondFeatures,
    GraphError,
    MolecularGraph,
)
from .match import count_substructures, find_substructure, has_substructure
from .smiles import DanglingRingClosure, SmilesError, UnbalancedBranch, UnsupportedToken, parse_smiles
from .synth import DEFAULT_MOTIF, scaffold_vocabularies, synth_generate, synth_ranking

__all__ = [
    "ATOM_DIM",
    "BOND_DIM",
    "AtomFeatures",
    "Bond",
    "BondFeatures",
    "CompoundRecord",
    "DEFAULT_MOTIF",
    "DanglingRingClosure",
    "DatasetError",
    "DuplicateId",
    "GraphError",
    "MolecularGraph",
    "SmilesError",
    "UnbalancedBranch",
    "UnsupportedToken",
    "count_substructures",
    "dumps_dataset",
    "find_substructure",
    "has_substructure",
    "load_dataset",
    "parse_smiles",
    "record_from_json",
    "scaffold_vocabularies",
    "synth_generate",
    "synth_ranking",
    "write_dataset",
]
