"""Evaluation suite: validity, uniqueness, novelty, diversity, SNN, LogP.

Fingerprints are iterative-neighborhood (circular) hashes over a fixed
64-bit mixing function, so values are stable across platforms. All score
accumulations run in fixed index order, which keeps results independent of
any evaluation parallelism and lets brute-force oracles match exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .molgraph import (
    AtomType,
    BondType,
    InvalidGraphError,
    MolecularGraph,
    all_pad,
    canonical_key,
    implicit_hydrogens,
    is_valid,
    strip_padding,
)


class WidthMismatch(ValueError):
    pass


class EmptySet(ValueError):
    pass


class EmptyReference(ValueError):
    pass


_M64 = (1 << 64) - 1
_HASH_SEED = 0x2545F4914F6CDD1D


def _mix64(x: int) -> int:
    """splitmix64 finalizer; the single mixing primitive behind fingerprints."""
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return (x ^ (x >> 31)) & _M64


def _hash_ints(values) -> int:
    h = _HASH_SEED
    for v in values:
        h = _mix64(h ^ (int(v) & _M64))
    return h


@dataclass(frozen=True)
class Fingerprint:
    width: int
    radius: int
    packed: np.ndarray  # uint64 words, little-endian bit order within words

    def bit_count(self) -> int:
        return int(K.popcount_rows(self.packed[None, :])[0])


def fingerprint(g: MolecularGraph, radius: int = 2, width: int = 2048) -> Fingerprint:
    """Circular fingerprint: hashed neighborhoods out to `radius` bonds.

    Initial atom invariant = (element, degree, summed bond order in half
    units); each round hashes the sorted (bond type, neighbor invariant)
    list. Every invariant at every radius sets bit (hash mod width).
    """
    if width % 64 != 0 or width <= 0:
        raise ValueError("width must be a positive multiple of 64")
    if not is_valid(g, require_connected=False):
        raise InvalidGraphError("fingerprint requires a valid graph")
    s = strip_padding(g)
    n = s.n_max
    codes = s.bond_codes()
    nbrs = [
        [(int(codes[i, j]), j) for j in range(n) if j != i and codes[i, j] != BondType.ZERO]
        for i in range(n)
    ]
    orders = np.array([bt.order_x2 for bt in BondType], dtype=np.int64)
    inv = [
        _hash_ints((int(t), len(nbrs[i]), int(orders[codes[i]].sum())))
        for i, t in enumerate(s.atom_types())
    ]
    bits: set[int] = {h % width for h in inv}
    for r in range(1, radius + 1):
        nxt = []
        for i in range(n):
            env = sorted((bt, inv[j]) for bt, j in nbrs[i])
            h = _hash_ints([r, inv[i]] + [x for pair in env for x in pair])
            nxt.append(h)
            bits.add(h % width)
        inv = nxt
    packed = np.zeros(width // 64, dtype=np.uint64)
    for b in bits:
        packed[b >> 6] |= np.uint64(1) << np.uint64(b & 63)
    return Fingerprint(width=width, radius=radius, packed=packed)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; defined as 1.0 when both fingerprints are empty."""
    if a.width != b.width:
        raise WidthMismatch(f"{a.width} vs {b.width}")
    inter = int(K.pair_intersect_counts(a.packed[None, :], b.packed[None, :])[0, 0])
    union = a.bit_count() + b.bit_count() - inter
    return 1.0 if union == 0 else inter / union


def _pack_matrix(fps: list[Fingerprint]) -> np.ndarray:
    return np.stack([fp.packed for fp in fps])


def _tanimoto_matrix(fps_a: list[Fingerprint], fps_b: list[Fingerprint]) -> np.ndarray:
    pa, pb = _pack_matrix(fps_a), _pack_matrix(fps_b)
    inter = K.pair_intersect_counts(pa, pb).astype(np.float64)
    ca = K.popcount_rows(pa).astype(np.float64)
    cb = K.popcount_rows(pb).astype(np.float64)
    union = ca[:, None] + cb[None, :] - inter
    out = np.empty_like(inter)
    both_empty = union == 0
    out[both_empty] = 1.0
    out[~both_empty] = inter[~both_empty] / union[~both_empty]
    return out


def validity(generated: list[MolecularGraph], require_connected: bool = True) -> float:
    if not generated:
        return 0.0
    good = sum(1 for g in generated if is_valid(g, require_connected))
    return 100.0 * good / len(generated)


def valid_subset(generated: list[MolecularGraph], require_connected: bool = True):
    return [g for g in generated if is_valid(g, require_connected)]


def uniqueness(valid: list[MolecularGraph]) -> float:
    if not valid:
        return 0.0
    keys = {canonical_key(g) for g in valid}
    return 100.0 * len(keys) / len(valid)


def novelty(valid: list[MolecularGraph], reference_keys: set[bytes]) -> float:
    if not valid:
        return 0.0
    novel = sum(1 for g in valid if canonical_key(g) not in reference_keys)
    return 100.0 * novel / len(valid)


def _fps(valid, radius, width, fps=None):
    return fps if fps is not None else [fingerprint(g, radius, width) for g in valid]


def int_div(valid, p: int = 1, fps=None, radius: int = 2, width: int = 2048) -> float:
    """1 - (mean over ordered pairs, self-pairs included, of T^p)^(1/p)."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    fps = _fps(valid, radius, width, fps)
    n = len(fps)
    if n == 0:
        raise EmptySet("int_div needs at least one molecule")
    t = _tanimoto_matrix(fps, fps)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += t[i, j] ** p
    return 1.0 - (total / (n * n)) ** (1.0 / p)


def snn(
    valid,
    reference_fps: list[Fingerprint],
    sample_size: int = 1000,
    seed: int = 0,
    fps=None,
    radius: int = 2,
    width: int = 2048,
) -> float:
    """Mean over generated molecules of the max Tanimoto similarity to a
    seeded random reference subsample (the full set when smaller)."""
    if not reference_fps:
        raise EmptyReference("snn needs a non-empty reference")
    fps = _fps(valid, radius, width, fps)
    if not fps:
        raise EmptySet("snn needs at least one generated molecule")
    sample = subsample_reference(reference_fps, sample_size, seed)
    t = _tanimoto_matrix(fps, sample)
    total = 0.0
    for i in range(len(fps)):
        best = 0.0
        for j in range(t.shape[1]):
            if t[i, j] > best:
                best = t[i, j]
        total += best
    return total / len(fps)


def subsample_reference(reference_fps, sample_size: int, seed: int):
    if sample_size >= len(reference_fps):
        return list(reference_fps)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(reference_fps), size=sample_size, replace=False)
    return [reference_fps[int(i)] for i in sorted(idx)]


def asim(valid, reference_fps, sample_size: int = 1000, seed: int = 0, fps=None,
         radius: int = 2, width: int = 2048) -> float:
    """Average (not max) similarity to the reference subsample."""
    if not reference_fps:
        raise EmptyReference("asim needs a non-empty reference")
    fps = _fps(valid, radius, width, fps)
    if not fps:
        raise EmptySet("asim needs at least one generated molecule")
    sample = subsample_reference(reference_fps, sample_size, seed)
    t = _tanimoto_matrix(fps, sample)
    total = 0.0
    for i in range(len(fps)):
        row = 0.0
        for j in range(t.shape[1]):
            row += t[i, j]
        total += row / t.shape[1]
    return total / len(fps)


# ---------------------------------------------------------------------------
# LogP: reduced atom-contribution model
#
# Contribution = base(element, aromatic) + k_het * n_hetero_neighbors
#              + k_h * n_implicit_H, enumerated below into an explicit table
# keyed by (element symbol, aromatic flag, hetero neighbors [0-4], implicit H
# [0-4]). The values are a coarse, documented convention tuned to rank
# hydrophobic vs hydrophilic fragments sensibly; they are not a Crippen fit.

_LOGP_BASE = {
    ("C", False): 0.14, ("C", True): 0.30,
    ("N", False): -0.60, ("N", True): -0.10,
    ("O", False): -0.40, ("O", True): 0.10,
    ("F", False): 0.20, ("F", True): 0.20,
    ("Cl", False): 0.60, ("Cl", True): 0.60,
    ("Br", False): 0.85, ("Br", True): 0.85,
    ("I", False): 1.05, ("I", True): 1.05,
    ("P", False): 0.30, ("P", True): 0.30,
    ("S", False): 0.45, ("S", True): 0.55,
}
_LOGP_HETERO_ADJ = {"C": -0.18, "N": -0.05, "O": -0.05, "P": -0.05, "S": -0.05,
                    "F": 0.0, "Cl": 0.0, "Br": 0.0, "I": 0.0}
_LOGP_H_ADJ = {"C": 0.04, "N": -0.10, "O": -0.10, "P": 0.0, "S": -0.05,
               "F": 0.0, "Cl": 0.0, "Br": 0.0, "I": 0.0}

LOGP_CONTRIBUTIONS = {
    (elem, aromatic, het, h): round(
        _LOGP_BASE[(elem, aromatic)] + het * _LOGP_HETERO_ADJ[elem] + h * _LOGP_H_ADJ[elem], 6
    )
    for (elem, aromatic) in _LOGP_BASE
    for het in range(5)
    for h in range(5)
}

DEFAULT_LOGP_BOUNDS = (-2.12, 6.26)


def logp_raw(g: MolecularGraph) -> float:
    """Sum of per-atom contributions from the shipped table."""
    if not is_valid(g, require_connected=False):
        raise InvalidGraphError("logp requires a valid graph")
    s = strip_padding(g)
    hs = implicit_hydrogens(s)
    codes = s.bond_codes()
    types = s.atom_types()
    total = 0.0
    for i, at in enumerate(types):
        aromatic = bool((codes[i] == BondType.AROMATIC).any())
        hetero = sum(
            1
            for j in range(s.n_max)
            if j != i and codes[i, j] != BondType.ZERO and types[j] != AtomType.C
        )
        key = (at.symbol, aromatic, min(hetero, 4), min(hs[i], 4))
        total += LOGP_CONTRIBUTIONS[key]
    return total


def logp_normalized(g: MolecularGraph, bounds=DEFAULT_LOGP_BOUNDS) -> float:
    lo, hi = bounds
    raw = logp_raw(g)
    return min(1.0, max(0.0, (raw - lo) / (hi - lo)))


def logp(valid, bounds=DEFAULT_LOGP_BOUNDS) -> float:
    if not valid:
        raise EmptySet("logp needs at least one molecule")
    total = 0.0
    for g in valid:
        total += logp_normalized(g, bounds)
    return total / len(valid)


# ---------------------------------------------------------------------------
# composite evaluation


@dataclass
class EvalConfig:
    fp_radius: int = 2
    fp_width: int = 2048
    snn_sample_size: int = 1000
    snn_seed: int = 0
    logp_bounds: tuple = DEFAULT_LOGP_BOUNDS
    require_connected: bool = True


@dataclass
class ReferenceIndex:
    """Canonical keys + fingerprints of the existing (training) molecules."""

    keys: set
    fps: list
    size: int

    @classmethod
    def build(cls, graphs: list[MolecularGraph], radius: int = 2, width: int = 2048):
        keys = set()
        fps = []
        for g in graphs:
            if not is_valid(g, require_connected=False):
                continue
            keys.add(canonical_key(g))
            fps.append(fingerprint(g, radius, width))
        return cls(keys=keys, fps=fps, size=len(fps))


@dataclass
class MetricsReport:
    validity: float
    uniqueness: float
    novelty: float
    int_div_1: float | None
    int_div_2: float | None
    snn: float | None
    logp_normalized: float | None
    qed: None
    all_pad_fraction: float
    warnings: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "validity": self.validity,
            "uniqueness": self.uniqueness,
            "novelty": self.novelty,
            "int_div_1": self.int_div_1,
            "int_div_2": self.int_div_2,
            "snn": self.snn,
            "logp_normalized": self.logp_normalized,
            "qed": None,
            "all_pad_fraction": self.all_pad_fraction,
            "warnings": list(self.warnings),
            "metadata": dict(sorted(self.metadata.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        return cls(
            validity=d["validity"],
            uniqueness=d["uniqueness"],
            novelty=d["novelty"],
            int_div_1=d["int_div_1"],
            int_div_2=d["int_div_2"],
            snn=d["snn"],
            logp_normalized=d["logp_normalized"],
            qed=None,
            all_pad_fraction=d["all_pad_fraction"],
            warnings=list(d.get("warnings", [])),
            metadata=dict(d.get("metadata", {})),
        )


def evaluate(
    generated: list[MolecularGraph], reference: ReferenceIndex, cfg: EvalConfig | None = None
) -> MetricsReport:
    """Full report; everything except Validity is computed on the valid subset.

    QED is not computed (emitted as null); the all-PAD sample fraction is
    reported so generator collapse to pure padding stays visible.
    """
    cfg = cfg or EvalConfig()
    warnings: list[str] = []
    n = len(generated)
    if n == 0:
        warnings.append("empty generated set")
        return MetricsReport(0.0, 0.0, 0.0, None, None, None, None, None, 0.0, warnings)

    pad_frac = 100.0 * sum(1 for g in generated if all_pad(g)) / n
    valid = valid_subset(generated, cfg.require_connected)
    val = 100.0 * len(valid) / n
    if not valid:
        warnings.append("no valid molecules; set metrics undefined")
        return MetricsReport(val, 0.0, 0.0, None, None, None, None, None, pad_frac, warnings)

    fps = [fingerprint(g, cfg.fp_radius, cfg.fp_width) for g in valid]
    uniq = uniqueness(valid)
    nov = novelty(valid, reference.keys)
    div1 = int_div(valid, 1, fps=fps)
    div2 = int_div(valid, 2, fps=fps)
    if reference.fps:
        nn = snn(valid, reference.fps, cfg.snn_sample_size, cfg.snn_seed, fps=fps)
    else:
        nn = None
        warnings.append("empty reference; snn undefined")
    lp = logp(valid, cfg.logp_bounds)
    return MetricsReport(val, uniq, nov, div1, div2, nn, lp, None, pad_frac, warnings)


# ---------------------------------------------------------------------------
# table rendering (sweep output shares the layout of the result tables)

SWEEP_COLUMNS = (
    "Datasets",
    "Generator Dimension",
    "Discriminator Dimension",
    "Number of Clients",
    "QED",
    "Diversity",
    "Validity",
    "Uniqueness",
    "Novelty",
    "LogP",
    "Similarity",
)


def _fmt(value, spec: str) -> str:
    if value is None:
        return "-"
    return format(value, spec)


def sweep_row(dataset: str, gen_dims: str, disc_dims: str, clients: int, report: MetricsReport) -> dict:
    return {
        "Datasets": dataset,
        "Generator Dimension": gen_dims,
        "Discriminator Dimension": disc_dims,
        "Number of Clients": str(clients),
        "QED": "-",
        "Diversity": _fmt(report.int_div_1, ".2f"),
        "Validity": _fmt(report.validity, ".1f"),
        "Uniqueness": _fmt(report.uniqueness, ".1f"),
        "Novelty": _fmt(report.novelty, ".1f"),
        "LogP": _fmt(report.logp_normalized, ".2f"),
        "Similarity": _fmt(report.snn, ".4f"),
    }


def render_table(rows: list[dict], columns=SWEEP_COLUMNS) -> str:
    widths = {c: max(len(c), *(len(r.get(c, "")) for r in rows)) if rows else len(c) for c in columns}
    header = " | ".join(c.ljust(widths[c]) for c in columns)
    sep = "-+-".join("-" * widths[c] for c in columns)
    lines = [header, sep]
    for r in rows:
        lines.append(" | ".join(r.get(c, "").ljust(widths[c]) for c in columns))
    return "\n".join(lines) + "\n"
