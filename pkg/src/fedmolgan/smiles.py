"""SMILES subset parser and writer for the fixed-size graph alphabet.

Grammar: organic-subset atoms (C, N, O, F, P, S, Cl, Br, I and aromatic
c, n, o, p, s), bonds - = # :, branches, ring-closure digits 1-9 and %nn.
No brackets, charges, explicit hydrogens, stereo marks or dot-disconnection;
anything outside the subset fails loudly with a typed error carrying the
character position.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .molgraph import (
    DEFAULT_N_MAX,
    AtomType,
    BondType,
    InvalidGraphError,
    MolecularGraph,
    canonical_order,
    from_arrays,
    is_valid,
    strip_padding,
)


class SmilesError(ValueError):
    """Base for parse errors; `position` is the offending character index."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnsupportedAtom(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class DanglingRingClosure(SmilesError):
    pass


class DanglingBond(SmilesError):
    pass


class TooManyAtoms(SmilesError):
    pass


class EmptyInput(SmilesError):
    pass


class MissingColumn(ValueError):
    pass


_ORGANIC = {"C", "N", "O", "F", "P", "S", "I"}
_TWO_CHAR = {"Cl": AtomType.CL, "Br": AtomType.BR}
_AROMATIC = {"c", "n", "o", "p", "s"}
_BOND_SYMBOLS = {"-": BondType.SINGLE, "=": BondType.DOUBLE, "#": BondType.TRIPLE, ":": BondType.AROMATIC}
_BOND_TO_SYMBOL = {BondType.DOUBLE: "=", BondType.TRIPLE: "#", BondType.AROMATIC: ":"}


@dataclass
class _Atom:
    atype: AtomType
    aromatic: bool
    position: int


def _tokenize_atom(text: str, i: int) -> tuple[_Atom, int]:
    two = text[i : i + 2]
    if two in _TWO_CHAR:
        return _Atom(_TWO_CHAR[two], False, i), i + 2
    ch = text[i]
    if ch in _ORGANIC:
        return _Atom(AtomType[ch], False, i), i + 1
    if ch in _AROMATIC:
        return _Atom(AtomType[ch.upper()], True, i), i + 1
    raise UnsupportedAtom(f"unsupported or unknown symbol {ch!r}", i)


def parse(text: str, n_max: int = DEFAULT_N_MAX) -> MolecularGraph:
    """Parse a subset-grammar SMILES string into a padded molecular graph."""
    if text is None or text.strip() == "":
        raise EmptyInput("empty SMILES string", 0)
    text = text.strip()
    if not text.isascii():
        raise UnsupportedAtom("non-ASCII input", 0)

    atoms: list[_Atom] = []
    bonds: dict[tuple[int, int], BondType] = {}
    stack: list[tuple[int, int]] = []  # (atom index, '(' position)
    rings: dict[int, tuple[int, BondType | None, int]] = {}
    prev: int | None = None
    pending: BondType | None = None
    pending_pos = 0

    def add_bond(i: int, j: int, bond: BondType | None, pos: int, arom_default: bool):
        if i == j:
            raise DanglingRingClosure("ring closure bonds an atom to itself", pos)
        key = (min(i, j), max(i, j))
        if key in bonds:
            raise DanglingRingClosure("duplicate bond between atoms", pos)
        if bond is None:
            bond = BondType.AROMATIC if arom_default else BondType.SINGLE
        bonds[key] = bond

    def close_ring(digit: int, pos: int):
        nonlocal pending
        if prev is None:
            raise DanglingRingClosure("ring digit before any atom", pos)
        if digit in rings:
            other, obond, _ = rings.pop(digit)
            bond = pending if pending is not None else obond
            arom = atoms[other].aromatic and atoms[prev].aromatic
            add_bond(other, prev, bond, pos, arom)
        else:
            rings[digit] = (prev, pending, pos)
        pending = None

    i = 0
    while i < len(text):
        ch = text[i]
        if ch in _BOND_SYMBOLS:
            if pending is not None:
                raise DanglingBond("bond symbol after bond symbol", i)
            pending = _BOND_SYMBOLS[ch]
            pending_pos = i
            i += 1
        elif ch == "(":
            if prev is None:
                raise UnbalancedBranch("branch opened before any atom", i)
            if pending is not None:
                raise DanglingBond("bond symbol before branch open", i)
            stack.append((prev, i))
            i += 1
        elif ch == ")":
            if pending is not None:
                raise DanglingBond("bond symbol before branch close", pending_pos)
            if not stack:
                raise UnbalancedBranch("unmatched branch close", i)
            prev, _ = stack.pop()
            i += 1
        elif ch.isdigit():
            if ch == "0":
                raise UnsupportedAtom("ring digit 0 outside subset grammar", i)
            close_ring(int(ch), i)
            i += 1
        elif ch == "%":
            if i + 3 > len(text) or not text[i + 1 : i + 3].isdigit():
                raise DanglingRingClosure("% must be followed by two digits", i)
            close_ring(int(text[i + 1 : i + 3]), i)
            i += 3
        else:
            atom, nxt = _tokenize_atom(text, i)
            atoms.append(atom)
            idx = len(atoms) - 1
            if idx >= n_max:
                raise TooManyAtoms(f"more than n_max={n_max} heavy atoms", i)
            if prev is not None:
                arom = atoms[prev].aromatic and atom.aromatic
                add_bond(prev, idx, pending, i, arom)
            elif pending is not None:
                raise DanglingBond("bond symbol before the first atom", pending_pos)
            pending = None
            prev = idx
            i = nxt

    if pending is not None:
        raise DanglingBond("trailing bond symbol", pending_pos)
    if stack:
        raise UnbalancedBranch("unclosed branch", stack[-1][1])
    if rings:
        digit = next(iter(rings))
        raise DanglingRingClosure(f"ring closure {digit} never paired", rings[digit][2])
    if not atoms:
        raise EmptyInput("no atoms in input", 0)

    v = np.zeros((n_max, len(AtomType)), dtype=np.uint8)
    for k, atom in enumerate(atoms):
        v[k, atom.atype] = 1
    for k in range(len(atoms), n_max):
        v[k, AtomType.PAD] = 1
    a = np.zeros((n_max, n_max, len(BondType)), dtype=np.uint8)
    a[:, :, BondType.ZERO] = 1
    for (i0, j0), bt in bonds.items():
        a[i0, j0] = 0
        a[j0, i0] = 0
        a[i0, j0, bt] = 1
        a[j0, i0, bt] = 1
    return from_arrays(v, a)


def write(g: MolecularGraph, validate: bool = True) -> str:
    """Serialize a graph to SMILES; canonical start node, rank-ordered DFS.

    With validate=False, disconnected or valence-broken graphs are still
    serialized (components joined by '.'), which parse() will reject; callers
    use that for diagnostics only.
    """
    if validate and not is_valid(g):
        raise InvalidGraphError("write requires a valid graph")
    s = strip_padding(g)
    n = s.n_max
    if n == 0:
        return "*"
    order = canonical_order(s)
    rank = {node: r for r, node in enumerate(order)}
    codes = s.bond_codes()
    nbrs = {
        i: sorted(
            (j for j in range(n) if j != i and codes[i, j] != BondType.ZERO),
            key=rank.__getitem__,
        )
        for i in range(n)
    }

    visited: set[int] = set()
    pieces: list[str] = []

    def bond_sym(i: int, j: int) -> str:
        return _BOND_TO_SYMBOL.get(BondType(int(codes[i, j])), "")

    def component(root: int) -> str:
        tree: dict[int, list[int]] = {}
        back_edges: list[tuple[int, int]] = []
        preorder: dict[int, int] = {}
        seen_edges: set[tuple[int, int]] = set()

        def dfs(u: int):
            visited.add(u)
            preorder[u] = len(preorder)
            tree[u] = []
            for w in nbrs[u]:
                edge = (min(u, w), max(u, w))
                if edge in seen_edges:
                    continue
                seen_edges.add(edge)
                if w in visited:
                    back_edges.append((w, u))  # w seen earlier
                else:
                    tree[u].append(w)
                    dfs(w)

        dfs(root)

        # Ring digits: open at the earlier endpoint, close at the later one.
        # Digits grow per component (via %nn past 9); components close all
        # their digits so restarting at 1 is safe.
        opens: dict[int, list[tuple[int, int]]] = {}
        closes: dict[int, list[int]] = {}
        for d, (w, u) in enumerate(
            sorted(back_edges, key=lambda e: (preorder[e[0]], preorder[e[1]])), start=1
        ):
            opens.setdefault(w, []).append((u, d))
            closes.setdefault(u, []).append(d)

        def ring_token(d: int) -> str:
            return str(d) if d < 10 else f"%{d:02d}"

        def emit(u: int) -> str:
            out = [s.atom_type(u).symbol]
            for w, d in opens.get(u, []):
                out.append(bond_sym(u, w) + ring_token(d))
            for d in closes.get(u, []):
                out.append(ring_token(d))
            kids = tree[u]
            for w in kids[:-1]:
                out.append("(" + bond_sym(u, w) + emit(w) + ")")
            if kids:
                w = kids[-1]
                out.append(bond_sym(u, w) + emit(w))
            return "".join(out)

        return emit(root)

    for node in order:
        if node not in visited:
            pieces.append(component(node))
    return ".".join(pieces)


@dataclass
class SkipRecord:
    line_number: int
    reason: str
    raw: str

    def format(self) -> str:
        return f"{self.line_number}\t{self.reason}\t{self.raw}"


def load_dataset(
    path: str, column: str | None = None, n_max: int = DEFAULT_N_MAX
) -> tuple[list[MolecularGraph], list[SkipRecord]]:
    """Parse every record of a SMILES file; failures are skipped and logged.

    Accepts one-SMILES-per-line files or comma-separated files with a header
    row; the column is auto-detected as 'smiles' (case-insensitive) when not
    named explicitly.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        fh.seek(0)
        is_csv = column is not None or (
            "," in first and any(f.strip().lower() == "smiles" for f in first.split(","))
        )
        graphs: list[MolecularGraph] = []
        skips: list[SkipRecord] = []

        def try_parse(smi: str, line_no: int):
            try:
                graphs.append(parse(smi, n_max=n_max))
            except SmilesError as err:
                skips.append(SkipRecord(line_no, type(err).__name__, smi))

        if is_csv:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return [], []
            if column is not None:
                matches = [k for k, name in enumerate(header) if name.strip() == column]
            else:
                matches = [k for k, name in enumerate(header) if name.strip().lower() == "smiles"]
            if not matches:
                wanted = column if column is not None else "smiles"
                raise MissingColumn(f"no column {wanted!r} in {path}")
            col = matches[0]
            for row in reader:
                if not row:
                    continue
                raw = row[col].strip() if col < len(row) else ""
                try_parse(raw, reader.line_num)
        else:
            for line_no, line in enumerate(fh, start=1):
                raw = line.strip()
                if not raw:
                    continue
                try_parse(raw, line_no)
    return graphs, skips


def write_skip_log(skips: list[SkipRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in skips:
            fh.write(rec.format() + "\n")
