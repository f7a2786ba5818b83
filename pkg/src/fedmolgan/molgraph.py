"""Molecular graphs as fixed-size typed node/edge tensors.

A molecule is a node-label matrix V (one one-hot row per atom slot over the
10 atom types, padding included) plus an adjacency tensor A (one-hot over the
5 bond types for every ordered slot pair). Everything here is a pure function
on immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_N_MAX = 10

# Safety bound for the canonical-form permutation search; valence-plausible
# graphs of <= 10 atoms stay far below it.
_CANON_LEAF_CAP = 200_000


class AtomType(IntEnum):
    C = 0
    N = 1
    O = 2
    F = 3
    BR = 4
    P = 5
    S = 6
    CL = 7
    I = 8
    PAD = 9

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]


_SYMBOLS = {
    AtomType.C: "C",
    AtomType.N: "N",
    AtomType.O: "O",
    AtomType.F: "F",
    AtomType.BR: "Br",
    AtomType.P: "P",
    AtomType.S: "S",
    AtomType.CL: "Cl",
    AtomType.I: "I",
    AtomType.PAD: "*",
}

SYMBOL_TO_ATOM = {sym: at for at, sym in _SYMBOLS.items()}

# Allowed total valences per element, ascending. Implicit hydrogens are
# counted against the smallest feasible entry.
MAX_VALENCES: dict[AtomType, tuple[int, ...]] = {
    AtomType.C: (4,),
    AtomType.N: (3,),
    AtomType.O: (2,),
    AtomType.F: (1,),
    AtomType.BR: (1,),
    AtomType.CL: (1,),
    AtomType.I: (1,),
    AtomType.P: (3, 5),
    AtomType.S: (2, 4, 6),
}

NUM_ATOM_TYPES = len(AtomType)


class BondType(IntEnum):
    ZERO = 0
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def order_value(self) -> float:
        return _ORDER_X2[self] / 2.0

    @property
    def order_x2(self) -> int:
        """Bond order in half-units, so aromatic (1.5) stays integral."""
        return _ORDER_X2[self]


_ORDER_X2 = {
    BondType.ZERO: 0,
    BondType.SINGLE: 2,
    BondType.DOUBLE: 4,
    BondType.TRIPLE: 6,
    BondType.AROMATIC: 3,
}

NUM_BOND_TYPES = len(BondType)


class InvariantViolation(ValueError):
    """A node-label matrix / adjacency tensor pair breaks the graph contract."""


class InvalidGraphError(ValueError):
    """Operation requires a chemically valid graph."""


class GraphTooLarge(ValueError):
    """Graph exceeds the supported node budget."""


@dataclass(frozen=True)
class MolecularGraph:
    """One-hot node labels (N x B) and one-hot bond types (N x N x T)."""

    node_labels: np.ndarray
    adjacency: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.node_labels, dtype=np.uint8)
        a = np.ascontiguousarray(self.adjacency, dtype=np.uint8)
        v.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "node_labels", v)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_max(self) -> int:
        return self.node_labels.shape[0]

    @property
    def num_atom_types(self) -> int:
        return self.node_labels.shape[1]

    @property
    def num_bond_types(self) -> int:
        return self.adjacency.shape[2]

    def atom_type(self, i: int) -> AtomType:
        return AtomType(int(np.argmax(self.node_labels[i])))

    def atom_types(self) -> list[AtomType]:
        return [AtomType(j) for j in np.argmax(self.node_labels, axis=1)]

    def bond(self, i: int, j: int) -> BondType:
        return BondType(int(np.argmax(self.adjacency[i, j])))

    def bond_codes(self) -> np.ndarray:
        """N x N matrix of bond-type codes."""
        return np.argmax(self.adjacency, axis=2)

    def is_pad(self, i: int) -> bool:
        return bool(self.node_labels[i, AtomType.PAD])

    def pad_mask(self) -> np.ndarray:
        return self.node_labels[:, AtomType.PAD].astype(bool)

    def neighbors(self, i: int) -> list[int]:
        codes = np.argmax(self.adjacency[i], axis=1)
        return [j for j in range(self.n_max) if j != i and codes[j] != BondType.ZERO]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MolecularGraph):
            return NotImplemented
        return (
            self.node_labels.shape == other.node_labels.shape
            and np.array_equal(self.node_labels, other.node_labels)
            and np.array_equal(self.adjacency, other.adjacency)
        )

    __hash__ = None


def from_atoms(
    atoms: Sequence[AtomType],
    bonds: Mapping[tuple[int, int], BondType] | Iterable[tuple[int, int, BondType]] = (),
    n_max: int = DEFAULT_N_MAX,
) -> MolecularGraph:
    """Build a padded graph from an atom list and sparse bond spec."""
    if len(atoms) > n_max:
        raise GraphTooLarge(f"{len(atoms)} atoms exceed n_max={n_max}")
    v = np.zeros((n_max, NUM_ATOM_TYPES), dtype=np.uint8)
    for i in range(n_max):
        at = atoms[i] if i < len(atoms) else AtomType.PAD
        v[i, at] = 1
    a = np.zeros((n_max, n_max, NUM_BOND_TYPES), dtype=np.uint8)
    a[:, :, BondType.ZERO] = 1
    if isinstance(bonds, Mapping):
        bonds = [(i, j, bt) for (i, j), bt in bonds.items()]
    for i, j, bt in bonds:
        a[i, j] = 0
        a[j, i] = 0
        a[i, j, bt] = 1
        a[j, i, bt] = 1
    g = MolecularGraph(v, a)
    check_invariants(g)
    return g


def from_arrays(node_labels: np.ndarray, adjacency: np.ndarray, check: bool = True) -> MolecularGraph:
    g = MolecularGraph(node_labels, adjacency)
    if check:
        check_invariants(g)
    return g


def check_invariants(g: MolecularGraph) -> None:
    """Raise InvariantViolation unless (V, A) is a well-formed graph pair."""
    v, a = g.node_labels, g.adjacency
    n = g.n_max
    if v.ndim != 2 or a.ndim != 3 or a.shape[0] != n or a.shape[1] != n:
        raise InvariantViolation(f"shape mismatch: V {v.shape}, A {a.shape}")
    if not np.all(v.sum(axis=1) == 1):
        raise InvariantViolation("node label rows must be one-hot")
    if not np.all(a.sum(axis=2) == 1):
        raise InvariantViolation("bond entries must be one-hot over bond types")
    if not np.array_equal(a, a.transpose(1, 0, 2)):
        raise InvariantViolation("adjacency not symmetric in node indices")
    codes = g.bond_codes()
    if np.any(np.diagonal(codes) != BondType.ZERO):
        raise InvariantViolation("diagonal bonds must be ZERO")
    pad = g.pad_mask()
    if np.any(codes[pad, :] != BondType.ZERO) or np.any(codes[:, pad] != BondType.ZERO):
        raise InvariantViolation("edges incident to PAD nodes must be ZERO")


def strip_padding(g: MolecularGraph) -> MolecularGraph:
    """Induced subgraph on non-PAD nodes, renumbered contiguously. Idempotent."""
    keep = ~g.pad_mask()
    v = g.node_labels[keep]
    a = g.adjacency[np.ix_(keep, keep)]
    return MolecularGraph(v, a)


def all_pad(g: MolecularGraph) -> bool:
    return bool(g.pad_mask().all())


def _valence_sums_x2(g: MolecularGraph) -> np.ndarray:
    codes = g.bond_codes()
    orders = np.array([bt.order_x2 for bt in BondType], dtype=np.int64)
    return orders[codes].sum(axis=1)


def implicit_hydrogens(g: MolecularGraph) -> list[int] | None:
    """Per-atom implicit-H counts from the smallest feasible valence.

    Expects a padding-free graph; returns None when an atom has no feasible
    whole-hydrogen valence assignment.
    """
    sums = _valence_sums_x2(g)
    out = []
    for i, at in enumerate(g.atom_types()):
        s2 = int(sums[i])
        h = None
        for vmax in MAX_VALENCES[at]:
            rem = 2 * vmax - s2
            if rem >= 0 and rem % 2 == 0:
                h = rem // 2
                break
        if h is None:
            return None
        out.append(h)
    return out


def _connected(g: MolecularGraph) -> bool:
    n = g.n_max
    if n <= 1:
        return True
    codes = g.bond_codes()
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in range(n):
            if not seen[j] and j != i and codes[i, j] != BondType.ZERO:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def is_valid(g: MolecularGraph, require_connected: bool = True) -> bool:
    """Chemical validity: valences satisfiable, aromatic bonds paired, connected.

    All-PAD graphs are invalid; their rate is reported separately so generator
    degeneracy stays visible.
    """
    s = strip_padding(g)
    n = s.n_max
    if n == 0:
        return False
    if implicit_hydrogens(s) is None:
        return False
    codes = s.bond_codes()
    aromatic_deg = (codes == BondType.AROMATIC).sum(axis=1)
    if np.any((aromatic_deg > 0) & (aromatic_deg < 2)):
        return False
    if require_connected and not _connected(s):
        return False
    return True


def permuted(g: MolecularGraph, perm: Sequence[int]) -> MolecularGraph:
    """Relabel nodes: node i of the result is node perm[i] of the input."""
    p = np.asarray(perm)
    return MolecularGraph(g.node_labels[p], g.adjacency[np.ix_(p, p)])


def _refine(colors: list[int], nbrs: list[list[tuple[int, int]]]) -> list[int]:
    """Iterative color refinement over (bond type, neighbor color) multisets."""
    n = len(colors)
    while True:
        sigs = []
        for i in range(n):
            nb = tuple(sorted((bt, colors[j]) for bt, j in nbrs[i]))
            sigs.append((colors[i], nb))
        ranks = {s: r for r, s in enumerate(sorted(set(sigs)))}
        new = [ranks[s] for s in sigs]
        if new == colors:
            return colors
        colors = new


def _encode(order: Sequence[int], types: Sequence[int], codes: np.ndarray) -> bytes:
    n = len(order)
    out = bytearray([n])
    out.extend(types[v] for v in order)
    for i in range(n):
        for j in range(i + 1, n):
            out.append(int(codes[order[i], order[j]]))
    return bytes(out)


def canonical_order(g: MolecularGraph, max_nodes: int | None = None) -> list[int]:
    """Node order realizing the canonical form of the padding-stripped graph.

    Individualization-refinement: refine colors, branch exhaustively on the
    first non-singleton class, keep the lexicographically smallest encoding.
    """
    s = strip_padding(g)
    n = s.n_max
    limit = max_nodes if max_nodes is not None else max(g.n_max, DEFAULT_N_MAX)
    if n > limit:
        raise GraphTooLarge(f"{n} nodes exceed canonicalization limit {limit}")
    if n == 0:
        return []
    types = [int(t) for t in s.atom_types()]
    codes = s.bond_codes()
    nbrs = [
        [(int(codes[i, j]), j) for j in range(n) if j != i and codes[i, j] != BondType.ZERO]
        for i in range(n)
    ]

    best: list = [None, None]
    leaves = [0]

    def search(colors: list[int]) -> None:
        colors = _refine(colors, nbrs)
        classes: dict[int, list[int]] = {}
        for i, c in enumerate(colors):
            classes.setdefault(c, []).append(i)
        target = None
        for c in sorted(classes):
            if len(classes[c]) > 1:
                target = classes[c]
                break
        if target is None:
            leaves[0] += 1
            if leaves[0] > _CANON_LEAF_CAP:
                raise GraphTooLarge("canonicalization search exceeded leaf cap")
            order = sorted(range(n), key=lambda i: colors[i])
            enc = _encode(order, types, codes)
            if best[0] is None or enc < best[0]:
                best[0], best[1] = enc, order
            return
        for v in target:
            child = [2 * c + 1 for c in colors]
            child[v] = 2 * colors[v]
            search(child)

    search(_refine(list(types), nbrs))
    return best[1]


def canonical_key(g: MolecularGraph, max_nodes: int | None = None) -> bytes:
    """Byte string equal for exactly the type-preserving isomorphic graphs."""
    s = strip_padding(g)
    if s.n_max == 0:
        return b"\x00"
    order = canonical_order(g, max_nodes=max_nodes)
    return _encode(order, [int(t) for t in s.atom_types()], s.bond_codes())


_HILL_TAIL = ["Br", "Cl", "F", "I", "N", "O", "P", "S"]


def molecular_formula(g: MolecularGraph) -> str:
    """Formula label with implicit hydrogens, e.g. CH4, NH3, CH2O."""
    if not is_valid(g, require_connected=False):
        raise InvalidGraphError("molecular_formula requires a valid graph")
    s = strip_padding(g)
    hs = implicit_hydrogens(s)
    counts: dict[str, int] = {}
    for at in s.atom_types():
        counts[at.symbol] = counts.get(at.symbol, 0) + 1
    h_total = sum(hs)

    def part(sym: str, cnt: int) -> str:
        return f"{sym}{cnt}" if cnt > 1 else sym

    pieces = []
    if "C" in counts:
        pieces.append(part("C", counts["C"]))
        if h_total:
            pieces.append(part("H", h_total))
        for sym in _HILL_TAIL:
            if sym in counts:
                pieces.append(part(sym, counts[sym]))
    else:
        for sym in _HILL_TAIL:
            if sym in counts:
                pieces.append(part(sym, counts[sym]))
        if h_total:
            pieces.append(part("H", h_total))
    return "".join(pieces)
