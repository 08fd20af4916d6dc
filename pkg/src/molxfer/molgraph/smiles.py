"""Parser for a SMILES subset.

Supported: organic-subset atoms (B C N O P S F Cl Br I and aromatic
b c n o p s), bracket atoms with element, charge and hydrogen count,
bonds ``- = #``, branches, ring closures ``0-9`` and ``%nn``.  Stereo
markers, isotopes, atom classes, wildcards and multi-fragment input are
rejected with :class:`UnsupportedToken`.
"""

from __future__ import annotations

from .graph import ELEMENTS, MolecularGraph, _ring_flags

ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC = ("b", "c", "n", "o", "p", "s")
BRACKET_AROMATIC = ("se", "as", "b", "c", "n", "o", "p", "s")
BOND_SYMBOLS = {"-": "single", "=": "double", "#": "triple"}


class SmilesError(ValueError):
    """Malformed input; ``offset`` is the byte offset of the offending token."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnsupportedToken(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class DanglingRingClosure(SmilesError):
    pass


class _Parser:
    def __init__(self, s):
        self.s = s
        self.i = 0
        self.elements, self.charges, self.aromatic = [], [], []
        # (u, v, order or None for implicit)
        self.bonds = []
        self.bond_keys = set()
        self.prev = None
        self.pending_bond = None  # (order, offset)
        self.branch_stack = []  # (atom, offset of '(')
        self.rings = {}  # number -> (atom, order or None, offset)

    def fail(self, cls, msg, offset=None):
        raise cls(msg, self.i if offset is None else offset)

    def add_bond(self, u, v, order, offset):
        if u == v:
            self.fail(SmilesError, "ring closure bonds an atom to itself", offset)
        key = (min(u, v), max(u, v))
        if key in self.bond_keys:
            self.fail(SmilesError, f"duplicate bond between atoms {u} and {v}", offset)
        self.bond_keys.add(key)
        self.bonds.append((u, v, order))

    def add_atom(self, symbol, charge, aromatic, offset):
        idx = len(self.elements)
        self.elements.append(symbol)
        self.charges.append(charge)
        self.aromatic.append(aromatic)
        if self.prev is not None:
            order = self.pending_bond[0] if self.pending_bond else None
            self.add_bond(self.prev, idx, order, offset)
        elif self.pending_bond is not None:
            self.fail(SmilesError, "bond symbol without a preceding atom", self.pending_bond[1])
        self.pending_bond = None
        self.prev = idx

    def parse_bracket(self):
        start = self.i
        s = self.s
        end = s.find("]", start)
        if end < 0:
            self.fail(SmilesError, "unterminated bracket atom", start)
        j = start + 1
        if j < end and s[j].isdigit():
            self.fail(UnsupportedToken, "isotope labels are not supported", j)
        symbol, aromatic = None, False
        for cand in BRACKET_AROMATIC:
            if s.startswith(cand, j) and j + len(cand) <= end:
                symbol, aromatic = cand.capitalize(), True
                break
        if symbol is None:
            two, one = s[j : j + 2], s[j : j + 1]
            if j + 2 <= end and two in ELEMENTS:
                symbol = two
            elif one in ELEMENTS:
                symbol = one
            elif one == "*":
                self.fail(UnsupportedToken, "wildcard atoms are not supported", j)
            else:
                self.fail(UnsupportedToken, f"unknown element in {s[start:end + 1]!r}", j)
        j += len(symbol)
        if j < end and s[j] == "@":
            self.fail(UnsupportedToken, "chirality is not supported", j)
        if j < end and s[j] == "H":
            j += 1
            while j < end and s[j].isdigit():
                j += 1
        charge = 0
        if j < end and s[j] in "+-":
            sign = 1 if s[j] == "+" else -1
            j += 1
            if j < end and s[j].isdigit():
                k = j
                while j < end and s[j].isdigit():
                    j += 1
                charge = sign * int(s[k:j])
            else:
                charge = sign
                while j < end and s[j] == s[j - 1]:
                    charge += sign
                    j += 1
        if j < end:
            cls = UnsupportedToken if s[j] in "@:" else SmilesError
            self.fail(cls, f"unexpected {s[j]!r} inside bracket atom", j)
        self.add_atom(symbol, charge, aromatic, start)
        self.i = end + 1

    def ring_bond(self, number, offset):
        if self.prev is None:
            self.fail(SmilesError, "ring closure before any atom", offset)
        order = self.pending_bond[0] if self.pending_bond else None
        self.pending_bond = None
        if number in self.rings:
            atom, order0, _ = self.rings.pop(number)
            if order is not None and order0 is not None and order != order0:
                self.fail(SmilesError, "conflicting ring closure bond symbols", offset)
            self.add_bond(atom, self.prev, order or order0, offset)
        else:
            self.rings[number] = (self.prev, order, offset)

    def run(self):
        s = self.s
        if not s:
            raise SmilesError("empty SMILES string", 0)
        while self.i < len(s):
            c = s[self.i]
            start = self.i
            if c == "[":
                self.parse_bracket()
            elif s.startswith(("Cl", "Br"), self.i):
                self.add_atom(s[self.i : self.i + 2], 0, False, start)
                self.i += 2
            elif c in ORGANIC:
                self.add_atom(c, 0, False, start)
                self.i += 1
            elif c in AROMATIC:
                self.add_atom(c.upper(), 0, True, start)
                self.i += 1
            elif c in BOND_SYMBOLS:
                if self.pending_bond is not None:
                    self.fail(SmilesError, "two consecutive bond symbols")
                self.pending_bond = (BOND_SYMBOLS[c], start)
                self.i += 1
            elif c == "(":
                if self.prev is None:
                    self.fail(SmilesError, "branch before any atom")
                if self.pending_bond is not None:
                    self.fail(SmilesError, "bond symbol before branch")
                self.branch_stack.append((self.prev, start))
                self.i += 1
            elif c == ")":
                if not self.branch_stack:
                    self.fail(UnbalancedBranch, "')' without matching '('")
                if self.pending_bond is not None:
                    self.fail(SmilesError, "dangling bond symbol", self.pending_bond[1])
                if s[self.i - 1] == "(":
                    self.fail(SmilesError, "empty branch")
                self.prev = self.branch_stack.pop()[0]
                self.i += 1
            elif c.isdigit():
                self.ring_bond(int(c), start)
                self.i += 1
            elif c == "%":
                digits = s[self.i + 1 : self.i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    self.fail(SmilesError, "'%' must be followed by two digits")
                self.ring_bond(int(digits), start)
                self.i += 3
            elif c in "@/\\.:$*":
                self.fail(UnsupportedToken, f"unsupported token {c!r}")
            else:
                self.fail(UnsupportedToken, f"unexpected character {c!r}")
        if self.pending_bond is not None:
            self.fail(SmilesError, "dangling bond symbol", self.pending_bond[1])
        if self.branch_stack:
            self.fail(UnbalancedBranch, "unclosed '('", self.branch_stack[-1][1])
        if self.rings:
            offset = min(off for _, _, off in self.rings.values())
            self.fail(DanglingRingClosure, "ring closure never closed", offset)
        return self.finish()

    def finish(self):
        pairs = [(u, v) for u, v, _ in self.bonds]
        in_ring = _ring_flags(len(self.elements), pairs)
        triples = []
        for (u, v, order), ring in zip(self.bonds, in_ring):
            if order is None:
                both = self.aromatic[u] and self.aromatic[v]
                order = "aromatic" if both and ring else "single"
            triples.append((u, v, order))
        return MolecularGraph.build(self.elements, triples, self.charges, self.aromatic)


def parse_smiles(s: str) -> MolecularGraph:
    """Parse ``s`` into a heavy-atom graph; implicit hydrogens are not materialised."""
    return _Parser(s).run()
