import numpy as np
import pytest

from conftest import random_valid_graphs
from fedmolgan import metrics, smiles
from fedmolgan.metrics import EvalConfig, Fingerprint, ReferenceIndex
from fedmolgan.molgraph import InvalidGraphError, canonical_key, from_atoms, permuted, AtomType, BondType


def fp_from_bits(bits, width=64):
    packed = np.zeros(width // 64, dtype=np.uint64)
    for b in bits:
        packed[b >> 6] |= np.uint64(1) << np.uint64(b & 63)
    return Fingerprint(width=width, radius=2, packed=packed)


def fp_bits(fp: Fingerprint) -> set:
    bits = set()
    for w, word in enumerate(fp.packed.tolist()):
        base = 64 * w
        x = int(word)
        while x:
            low = x & -x
            bits.add(base + low.bit_length() - 1)
            x ^= low
    return bits


def brute_tanimoto_sets(sa: set, sb: set) -> float:
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def brute_tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    return brute_tanimoto_sets(fp_bits(a), fp_bits(b))


# ---------------------------------------------------------------------------
# fingerprints


def test_fingerprint_isomorphic_graphs_equal():
    g = smiles.parse("CC(C)O")
    perm = np.random.default_rng(0).permutation(g.n_max)
    assert np.array_equal(
        metrics.fingerprint(g).packed, metrics.fingerprint(permuted(g, perm)).packed
    )


def test_fingerprint_element_sensitivity():
    a = metrics.fingerprint(smiles.parse("C"))
    b = metrics.fingerprint(smiles.parse("N"))
    assert not np.array_equal(a.packed, b.packed)


def test_fingerprint_topology_sensitivity():
    # same formula, different topology; radius-1 invariants differ by hand:
    # C-C-O has atoms (C,deg1),(C,deg2),(O,deg1); C-O-C has (C,deg1),(O,deg2),(C,deg1)
    chain = smiles.parse("CCO")
    ether = smiles.parse("COC")
    hand_chain = sorted([("C", 1), ("C", 2), ("O", 1)])
    hand_ether = sorted([("C", 1), ("O", 2), ("C", 1)])
    assert hand_chain != hand_ether
    assert not np.array_equal(
        metrics.fingerprint(chain).packed, metrics.fingerprint(ether).packed
    )


def test_fingerprint_requires_valid():
    g = from_atoms(
        [AtomType.C] * 6,
        {(0, j): BondType.SINGLE for j in range(1, 6)},
        n_max=6,
    )
    with pytest.raises(InvalidGraphError):
        metrics.fingerprint(g)


def test_fingerprint_width_validation():
    with pytest.raises(ValueError):
        metrics.fingerprint(smiles.parse("C"), width=100)


# ---------------------------------------------------------------------------
# tanimoto


def test_tanimoto_identical():
    fp = fp_from_bits({1, 5, 9})
    assert metrics.tanimoto(fp, fp) == 1.0


def test_tanimoto_disjoint():
    assert metrics.tanimoto(fp_from_bits({1, 2}), fp_from_bits({3, 4})) == 0.0


def test_tanimoto_subset():
    assert metrics.tanimoto(fp_from_bits({1, 2}), fp_from_bits({1, 2, 3, 4})) == 0.5


def test_tanimoto_both_empty():
    assert metrics.tanimoto(fp_from_bits(set()), fp_from_bits(set())) == 1.0


def test_tanimoto_width_mismatch():
    with pytest.raises(metrics.WidthMismatch):
        metrics.tanimoto(fp_from_bits({1}, 64), fp_from_bits({1}, 128))


def test_tanimoto_matches_set_oracle(corpus_graphs):
    rng = np.random.default_rng(1)
    mols = random_valid_graphs(rng, 12, corpus_graphs)
    fps = [metrics.fingerprint(g, width=256) for g in mols]
    for i in range(len(fps)):
        for j in range(len(fps)):
            assert metrics.tanimoto(fps[i], fps[j]) == brute_tanimoto(fps[i], fps[j])


# ---------------------------------------------------------------------------
# set metrics


def test_validity_percentages(corpus_graphs):
    good = corpus_graphs[:7]
    bad = [from_atoms([], n_max=4) for _ in range(3)]
    assert metrics.validity(good + bad) == 70.0
    assert metrics.validity(good) == 100.0
    assert metrics.validity(bad) == 0.0
    assert metrics.validity([]) == 0.0


def test_uniqueness_values(corpus_graphs):
    a, b = corpus_graphs[0], corpus_graphs[1]
    assert metrics.uniqueness([a, a, a, a]) == 25.0
    assert metrics.uniqueness([a, b]) == 100.0
    aa = permuted(a, np.random.default_rng(0).permutation(a.n_max))
    assert round(metrics.uniqueness([a, aa, b]), 2) == 66.67


def test_novelty_values(corpus_graphs):
    a, b = corpus_graphs[0], corpus_graphs[1]
    assert metrics.novelty([a, b], set()) == 100.0
    ref = {canonical_key(a), canonical_key(b)}
    assert metrics.novelty([a, b], ref) == 0.0
    assert metrics.novelty([a, b], {canonical_key(a)}) == 50.0


def test_int_div_identical_molecules(corpus_graphs):
    g = corpus_graphs[0]
    assert metrics.int_div([g, g, g], 1) == 0.0


def test_int_div_hand_case_exact():
    # two molecules with pairwise T = 0 at p=1: 1 - (1+1+0+0)/4 = 0.5 exactly
    a, b = smiles.parse("CCO"), smiles.parse("c1ccccc1")
    fps = [metrics.fingerprint(a), metrics.fingerprint(b)]
    assert metrics.tanimoto(fps[0], fps[1]) == 0.0
    assert metrics.int_div([a, b], 1, fps=fps) == 0.5


def brute_int_div(fps, p):
    sets = [fp_bits(f) for f in fps]
    n = len(sets)
    total = 0.0
    for s1 in sets:
        for s2 in sets:
            total += brute_tanimoto_sets(s1, s2) ** p
    return 1.0 - (total / (n * n)) ** (1.0 / p)


def brute_snn(gen_fps, ref_fps):
    gen_sets = [fp_bits(f) for f in gen_fps]
    ref_sets = [fp_bits(f) for f in ref_fps]
    total = 0.0
    for sg in gen_sets:
        total += max(brute_tanimoto_sets(sg, sr) for sr in ref_sets)
    return total / len(gen_sets)


def test_int_div_matches_bruteforce_exactly(corpus_graphs):
    rng = np.random.default_rng(2)
    for trial in range(6):
        mols = random_valid_graphs(rng, int(rng.integers(2, 20)), corpus_graphs)
        fps = [metrics.fingerprint(g) for g in mols]
        for p in (1, 2):
            assert metrics.int_div(mols, p, fps=fps) == brute_int_div(fps, p)


def test_int_div_empty_set():
    with pytest.raises(metrics.EmptySet):
        metrics.int_div([], 1)


def test_int_div_copy_monotonicity(corpus_graphs):
    rng = np.random.default_rng(3)
    mols = random_valid_graphs(rng, 8, corpus_graphs)
    base = metrics.int_div(mols, 1)
    extended = metrics.int_div(mols + [mols[0]], 1)
    assert extended <= base + 1e-12


def test_snn_self_reference_is_one(corpus_graphs):
    mols = corpus_graphs[:6]
    ref = [metrics.fingerprint(g) for g in mols]
    assert metrics.snn(mols, ref) == 1.0


def test_snn_singleton_reference(corpus_graphs):
    mols = corpus_graphs[:5]
    ref = [metrics.fingerprint(corpus_graphs[7])]
    fps = [metrics.fingerprint(g) for g in mols]
    expected = sum(metrics.tanimoto(f, ref[0]) for f in fps) / len(fps)
    assert abs(metrics.snn(mols, ref) - expected) < 1e-12


def test_snn_matches_bruteforce_exactly(corpus_graphs):
    rng = np.random.default_rng(4)
    for trial in range(5):
        gen = random_valid_graphs(rng, int(rng.integers(2, 15)), corpus_graphs)
        ref = random_valid_graphs(rng, int(rng.integers(2, 15)), corpus_graphs)
        gen_fps = [metrics.fingerprint(g) for g in gen]
        ref_fps = [metrics.fingerprint(g) for g in ref]
        assert metrics.snn(gen, ref_fps, fps=gen_fps) == brute_snn(gen_fps, ref_fps)


def test_snn_empty_reference(corpus_graphs):
    with pytest.raises(metrics.EmptyReference):
        metrics.snn(corpus_graphs[:2], [])


def test_snn_subsample_seeded(corpus_graphs):
    mols = corpus_graphs[:10]
    ref = [metrics.fingerprint(g) for g in corpus_graphs[:50]]
    a = metrics.snn(mols, ref, sample_size=20, seed=5)
    b = metrics.snn(mols, ref, sample_size=20, seed=5)
    assert a == b


def test_asim_is_mean_not_max(corpus_graphs):
    gen = corpus_graphs[:4]
    ref_fps = [metrics.fingerprint(g) for g in corpus_graphs[4:10]]
    gen_fps = [metrics.fingerprint(g) for g in gen]
    expected = sum(
        sum(metrics.tanimoto(f, r) for r in ref_fps) / len(ref_fps) for f in gen_fps
    ) / len(gen_fps)
    assert abs(metrics.asim(gen, ref_fps, fps=gen_fps) - expected) < 1e-12
    assert metrics.asim(gen, ref_fps, fps=gen_fps) <= metrics.snn(gen, ref_fps, fps=gen_fps)


# ---------------------------------------------------------------------------
# logp


def test_logp_clip_endpoints():
    g = smiles.parse("CCO")
    raw = metrics.logp_raw(g)
    assert metrics.logp_normalized(g, bounds=(raw + 1.0, raw + 2.0)) == 0.0
    assert metrics.logp_normalized(g, bounds=(raw - 2.0, raw - 1.0)) == 1.0


def test_logp_hand_summed_ethanol():
    g = smiles.parse("CCO")
    # atoms: CH3 (0 hetero, 3 H), CH2 (1 hetero, 2 H), OH (0 hetero... C neighbor only, 1 H)
    t = metrics.LOGP_CONTRIBUTIONS
    expected = t[("C", False, 0, 3)] + t[("C", False, 1, 2)] + t[("O", False, 0, 1)]
    assert abs(metrics.logp_raw(g) - expected) < 1e-6


def test_logp_hand_summed_benzene():
    g = smiles.parse("c1ccccc1")
    t = metrics.LOGP_CONTRIBUTIONS
    assert abs(metrics.logp_raw(g) - 6 * t[("C", True, 0, 1)]) < 1e-6


def test_logp_mean_in_unit_interval(corpus_graphs):
    val = metrics.logp(corpus_graphs[:40])
    assert 0.0 <= val <= 1.0


def test_logp_invalid_graph():
    g = from_atoms(
        [AtomType.C, AtomType.C, AtomType.C, AtomType.C, AtomType.C, AtomType.C],
        {(0, j): BondType.SINGLE for j in range(1, 6)},
        n_max=6,
    )
    with pytest.raises(InvalidGraphError):
        metrics.logp_raw(g)


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_empty_set(corpus_graphs):
    ref = ReferenceIndex.build(corpus_graphs[:5])
    report = metrics.evaluate([], ref)
    assert report.validity == 0.0
    assert report.warnings
    assert report.qed is None


def test_evaluate_reference_equals_generated(corpus_graphs):
    mols = corpus_graphs[:8]
    ref = ReferenceIndex.build(mols)
    report = metrics.evaluate(mols, ref)
    assert report.novelty == 0.0
    assert report.snn == 1.0
    assert report.validity == 100.0


def test_evaluate_reports_all_pad_fraction(corpus_graphs):
    ref = ReferenceIndex.build(corpus_graphs[:5])
    pads = [from_atoms([], n_max=10) for _ in range(2)]
    report = metrics.evaluate(corpus_graphs[:6] + pads, ref)
    assert report.all_pad_fraction == 25.0
    assert report.validity == 75.0


def test_evaluate_deterministic(corpus_graphs):
    ref = ReferenceIndex.build(corpus_graphs[:30])
    cfg = EvalConfig(snn_sample_size=10, snn_seed=3)
    a = metrics.evaluate(corpus_graphs[30:45], ref, cfg)
    b = metrics.evaluate(corpus_graphs[30:45], ref, cfg)
    assert a.to_json() == b.to_json()


def test_report_json_roundtrip(corpus_graphs):
    ref = ReferenceIndex.build(corpus_graphs[:10])
    report = metrics.evaluate(corpus_graphs[:6], ref)
    report.metadata["seed"] = 1
    back = metrics.MetricsReport.from_json(report.to_json())
    assert back.to_json() == report.to_json()


def test_metric_permutation_invariance(corpus_graphs):
    rng = np.random.default_rng(6)
    mols = corpus_graphs[:6]
    shuffled = [permuted(g, rng.permutation(g.n_max)) for g in mols]
    ref = ReferenceIndex.build(corpus_graphs[6:20])
    a = metrics.evaluate(mols, ref)
    b = metrics.evaluate(shuffled, ref)
    assert a.to_json() == b.to_json()


def test_render_table_header_structure():
    table = metrics.render_table([])
    header = table.splitlines()[0]
    assert header == " | ".join(metrics.SWEEP_COLUMNS)
