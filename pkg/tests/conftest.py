import os

import numpy as np
import pytest

from fedmolgan import smiles

DATA_DIR = os.path.join(os.path.dirname(smiles.__file__), "data")
CORPUS_PATH = os.path.join(DATA_DIR, "esol_surrogate.csv")


@pytest.fixture(scope="session")
def corpus_path() -> str:
    return CORPUS_PATH


@pytest.fixture(scope="session")
def corpus():
    graphs, skips = smiles.load_dataset(CORPUS_PATH)
    return graphs, skips


@pytest.fixture(scope="session")
def corpus_graphs(corpus):
    return corpus[0]


def random_graph(rng: np.random.Generator, n_max: int = 6, pad_prob: float = 0.3):
    """Well-formed (not necessarily chemically valid) graph with random types."""
    from fedmolgan.molgraph import NUM_ATOM_TYPES, NUM_BOND_TYPES, AtomType, BondType, MolecularGraph

    types = [
        AtomType.PAD if rng.random() < pad_prob else AtomType(int(rng.integers(0, NUM_ATOM_TYPES - 1)))
        for _ in range(n_max)
    ]
    v = np.zeros((n_max, NUM_ATOM_TYPES), dtype=np.uint8)
    for i, t in enumerate(types):
        v[i, t] = 1
    a = np.zeros((n_max, n_max, NUM_BOND_TYPES), dtype=np.uint8)
    a[:, :, BondType.ZERO] = 1
    for i in range(n_max):
        for j in range(i + 1, n_max):
            if types[i] == AtomType.PAD or types[j] == AtomType.PAD:
                continue
            if rng.random() < 0.35:
                bt = BondType(int(rng.integers(1, NUM_BOND_TYPES)))
                a[i, j] = 0
                a[j, i] = 0
                a[i, j, bt] = 1
                a[j, i, bt] = 1
    return MolecularGraph(v, a)


def random_valid_graphs(rng: np.random.Generator, count: int, pool):
    """Sample of parsed corpus molecules (valid by parser contract)."""
    idx = rng.choice(len(pool), size=count, replace=True)
    return [pool[int(i)] for i in idx]
