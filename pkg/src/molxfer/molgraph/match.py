"""Substructure search (subgraph monomorphism) by backtracking."""

from .graph import MolecularGraph


def _atom_ok(pa, ga):
    return (
        pa.element == ga.element
        and pa.formal_charge == ga.formal_charge
        and pa.aromatic == ga.aromatic
    )


def _adjacency(g: MolecularGraph):
    adj = [dict() for _ in range(g.n_atoms)]
    for b in g.bonds:
        adj[b.u][b.v] = b.features.order
        adj[b.v][b.u] = b.features.order
    return adj


def iter_substructures(g: MolecularGraph, pattern: MolecularGraph):
    """Yield every mapping ``pattern atom -> g atom``.

    Atoms match on element, charge and aromatic flag; every pattern bond
    must map onto a bond of the same order.  Extra bonds in ``g`` are
    allowed.
    """
    if pattern.n_atoms == 0:
        yield {}
        return
    if pattern.n_atoms > g.n_atoms:
        return
    gadj, padj = _adjacency(g), _adjacency(pattern)
    # visit pattern atoms so that each one (after the first of its
    # component) has an already-mapped neighbour
    order, seen = [], set()
    for root in range(pattern.n_atoms):
        if root in seen:
            continue
        seen.add(root)
        queue = [root]
        while queue:
            u = queue.pop(0)
            order.append(u)
            for v in sorted(padj[u]):
                if v not in seen:
                    seen.add(v)
                    queue.append(v)

    mapping, used = {}, set()

    def candidates(pu):
        anchors = [pv for pv in padj[pu] if pv in mapping]
        if anchors:
            pool = gadj[mapping[anchors[0]]].keys()
        else:
            pool = range(g.n_atoms)
        for gu in pool:
            if gu in used or not _atom_ok(pattern.atoms[pu], g.atoms[gu]):
                continue
            if all(gadj[gu].get(mapping[pv]) == order_ for pv, order_ in padj[pu].items() if pv in mapping):
                yield gu

    def extend(depth):
        if depth == len(order):
            yield dict(mapping)
            return
        pu = order[depth]
        for gu in candidates(pu):
            mapping[pu] = gu
            used.add(gu)
            yield from extend(depth + 1)
            del mapping[pu]
            used.discard(gu)

    yield from extend(0)


def find_substructure(g: MolecularGraph, pattern: MolecularGraph):
    """First mapping ``pattern atom -> g atom``, or ``None``."""
    return next(iter_substructures(g, pattern), None)


def count_substructures(g: MolecularGraph, pattern: MolecularGraph) -> int:
    """Number of distinct atom sets covered by a pattern embedding."""
    return len({frozenset(m.values()) for m in iter_substructures(g, pattern)})


def has_substructure(g: MolecularGraph, pattern: MolecularGraph) -> bool:
    return find_substructure(g, pattern) is not None
