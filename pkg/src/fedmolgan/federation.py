"""Federated training simulation: splits, partitions, rounds, FedAvg.

Clients are simulated in-process. Each client owns its model copies, Adam
state, and RNG stream; a round broadcasts the globals, trains every client
for E local epochs, and aggregates with (sample-weighted) FedAvg. Clients
read their data exclusively through DataStore.fetch with their own id, which
is the seam the privacy audit hooks into.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gan, metrics
from .autodiff import AdamState
from .gan import DiscriminatorModel, GeneratorModel, TrainOptions
from .molgraph import MolecularGraph, molecular_formula

logger = logging.getLogger(__name__)


class BadRatios(ValueError):
    pass


def split_dataset(graphs_or_count, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded shuffle then contiguous split into (train, validation, test)."""
    n = graphs_or_count if isinstance(graphs_or_count, int) else len(graphs_or_count)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios {ratios} must be three non-negatives summing to 1")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


def partition_iid(train_indices, labels, num_clients: int, seed: int = 0):
    """Deal each formula class round-robin; per-class counts differ by <= 1.

    The deal pointer carries across classes, so datasets dominated by
    singleton classes still spread evenly over the clients.
    """
    if num_clients < 1:
        raise ValueError("num_clients must be >= 1")
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[int]] = {}
    for idx in train_indices:
        by_class.setdefault(labels[idx], []).append(int(idx))
    shares: list[list[int]] = [[] for _ in range(num_clients)]
    cursor = 0
    for label in sorted(by_class):
        members = np.array(by_class[label])
        members = members[rng.permutation(len(members))]
        for idx in members:
            shares[cursor % num_clients].append(int(idx))
            cursor += 1
    return [np.array(sorted(s), dtype=np.int64) for s in shares]


def partition_noniid(train_indices, labels, num_clients: int, alpha: float = 0.5, seed: int = 0):
    """Dirichlet(alpha) class shares, multinomially assigned per class."""
    if num_clients < 1:
        raise ValueError("num_clients must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[int]] = {}
    for idx in train_indices:
        by_class.setdefault(labels[idx], []).append(int(idx))
    shares: list[list[int]] = [[] for _ in range(num_clients)]
    for label in sorted(by_class):
        members = np.array(by_class[label])
        members = members[rng.permutation(len(members))]
        props = rng.dirichlet(np.full(num_clients, alpha))
        counts = rng.multinomial(len(members), props)
        start = 0
        for client, cnt in enumerate(counts):
            shares[client].extend(int(i) for i in members[start : start + cnt])
            start += cnt
    return [np.array(sorted(s), dtype=np.int64) for s in shares]


def fedavg(models, weights=None):
    """Per-parameter weighted mean of identically-shaped models."""
    models = list(models)
    if not models:
        raise ValueError("fedavg needs at least one model")
    if weights is None:
        weights = [1.0] * len(models)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != len(models) or weights.sum() <= 0:
        raise ValueError("weights must align with models and sum to > 0")
    norm = weights / weights.sum()
    dicts = [dict(m.param_items()) for m in models]
    if any(set(d) != set(dicts[0]) for d in dicts[1:]):
        raise gan.ArchitectureMismatch("models expose different parameter sets")
    out = models[0].spawn()
    out_params = dict(out.param_items())
    for name, ref in dicts[0].items():
        acc = None
        for d, w in zip(dicts, norm):
            arr = d[name].data
            if arr.shape != ref.data.shape:
                raise gan.ArchitectureMismatch(f"{name}: {arr.shape} vs {ref.data.shape}")
            term = arr * arr.dtype.type(w)
            acc = term if acc is None else acc + term
        out_params[name].data[...] = acc
    return out


class DataStore:
    """Stacked graph tensors; clients fetch batches only through their own id."""

    def __init__(self, graphs: list[MolecularGraph], dtype=np.float32):
        self.v, self.a = gan.graphs_to_arrays(graphs, dtype=dtype)

    def fetch(self, client_id: int, indices) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(indices)
        return self.v[idx], self.a[idx]


@dataclass
class FederationConfig:
    num_clients: int = 1
    epochs_per_round: int = 1
    batch_size: int = 16
    rounds: int = 1
    partition: str = "iid"  # iid | noniid
    alpha: float = 0.5
    seed: int = 0
    split_ratios: tuple = (0.8, 0.1, 0.1)

    n_max: int = 10
    noise_dim: int = 16
    generator_dims: tuple = (32, 128)
    disc_conv_dims: tuple = (32, 64)
    disc_reduce_dim: int = 32
    disc_head_dims: tuple = (64, 1)
    dropout_gen: float = 0.0
    dropout_disc: float = 0.0

    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lr_decay_interval: int = 1000
    lr_decay_factor: float = 100.0
    gamma: float = 10.0
    eps_mode: str = "per_sample"
    eps_value: float = 0.5
    loss_form: str = "wgan"
    temperature: float = 1.0
    noise_resample_interval: int = 1

    fedavg_weighting: str = "samples"  # samples | uniform
    deterministic: bool = True
    require_connected: bool = True

    eval_interval: int = 0  # 0 = final evaluation only
    eval_samples: int = 256
    snn_sample_size: int = 1000
    fp_radius: int = 2
    fp_width: int = 2048
    checkpoint_interval: int = 0  # 0 = final checkpoint only

    plateau_window: int = 10
    plateau_threshold: float = 0.05

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.epochs_per_round < 1:
            raise ValueError("epochs_per_round must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.partition not in ("iid", "noniid"):
            raise ValueError(f"partition {self.partition!r}")
        if self.fedavg_weighting not in ("samples", "uniform"):
            raise ValueError(f"fedavg_weighting {self.fedavg_weighting!r}")


@dataclass
class ClientState:
    client_id: int
    indices: np.ndarray
    gen: GeneratorModel
    disc: DiscriminatorModel
    adam_gen: AdamState
    adam_disc: AdamState
    rng: np.random.Generator
    epochs_done: int = 0
    z_batch: np.ndarray | None = None

    @property
    def sample_count(self) -> int:
        return int(len(self.indices))


@dataclass
class FederationState:
    config: FederationConfig
    store: DataStore
    global_gen: GeneratorModel
    global_disc: DiscriminatorModel
    clients: list[ClientState]
    train_indices: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray
    round: int = 0
    gen_loss_history: list[float] = field(default_factory=list)
    disc_loss_history: list[float] = field(default_factory=list)
    round_records: list[dict] = field(default_factory=list)


def derive_rngs(seed: int, num_clients: int):
    """Deterministic RNG streams: model init, server, eval, then one per client."""
    children = np.random.SeedSequence(seed).spawn(3 + num_clients)
    return {
        "model": np.random.default_rng(children[0]),
        "server": np.random.default_rng(children[1]),
        "eval_seed": children[2],
        "clients": [np.random.default_rng(c) for c in children[3:]],
    }


def _adam(cfg: FederationConfig) -> AdamState:
    return AdamState(
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        lr_decay_interval=cfg.lr_decay_interval,
        lr_decay_factor=cfg.lr_decay_factor,
    )


def init_federation(graphs: list[MolecularGraph], cfg: FederationConfig) -> FederationState:
    rngs = derive_rngs(cfg.seed, cfg.num_clients)
    train_idx, val_idx, test_idx = split_dataset(len(graphs), cfg.split_ratios, cfg.seed)
    labels = {int(i): molecular_formula(graphs[int(i)]) for i in train_idx}
    if cfg.partition == "iid":
        shares = partition_iid(train_idx, labels, cfg.num_clients, cfg.seed)
    else:
        shares = partition_noniid(train_idx, labels, cfg.num_clients, cfg.alpha, cfg.seed)

    model_rng = rngs["model"]
    global_gen = GeneratorModel(
        cfg.generator_dims,
        model_rng,
        noise_dim=cfg.noise_dim,
        n_max=cfg.n_max,
        dropout_ratio=cfg.dropout_gen,
    )
    global_disc = DiscriminatorModel(
        cfg.disc_conv_dims,
        cfg.disc_reduce_dim,
        cfg.disc_head_dims,
        model_rng,
        dropout_ratio=cfg.dropout_disc,
    )
    clients = [
        ClientState(
            client_id=cid,
            indices=shares[cid],
            gen=global_gen.spawn(),
            disc=global_disc.spawn(),
            adam_gen=_adam(cfg),
            adam_disc=_adam(cfg),
            rng=rngs["clients"][cid],
        )
        for cid in range(cfg.num_clients)
    ]
    return FederationState(
        config=cfg,
        store=DataStore(graphs),
        global_gen=global_gen,
        global_disc=global_disc,
        clients=clients,
        train_indices=train_idx,
        val_indices=val_idx,
        test_indices=test_idx,
    )


def train_client_epochs(client: ClientState, store: DataStore, cfg: FederationConfig):
    """Run E local epochs on one client; returns the per-step loss trace."""
    opts = TrainOptions(
        gp=gan.GradientPenaltyConfig(gamma=cfg.gamma, eps_mode=cfg.eps_mode, eps_value=cfg.eps_value),
        loss_form=cfg.loss_form,
        temperature=cfg.temperature,
        adam_gen=client.adam_gen,
        adam_disc=client.adam_disc,
    )
    bs = cfg.batch_size
    num_batches = len(client.indices) // bs
    trace: list[tuple[float, float]] = []
    for _ in range(cfg.epochs_per_round):
        if client.epochs_done % cfg.noise_resample_interval == 0 or client.z_batch is None:
            client.z_batch = client.rng.standard_normal((bs, cfg.noise_dim)).astype(
                client.gen.dtype
            )
        order = client.rng.permutation(len(client.indices))
        batches = [
            store.fetch(client.client_id, client.indices[order[m * bs : (m + 1) * bs]])
            for m in range(num_batches)
        ]
        opts.z_batch = client.z_batch
        opts.epoch = client.epochs_done
        trace.extend(gan.local_epoch(client.gen, client.disc, batches, opts, client.rng))
        client.epochs_done += 1
    return trace


def run_round(state: FederationState) -> FederationState:
    """One global round: broadcast, local training, collect, aggregate."""
    cfg = state.config
    started = time.perf_counter()
    participating: list[ClientState] = []
    skipped: list[int] = []
    for client in state.clients:
        if len(client.indices) // cfg.batch_size == 0:
            skipped.append(client.client_id)
            continue
        client.gen.copy_from(state.global_gen)
        client.disc.copy_from(state.global_disc)
        participating.append(client)
    if skipped:
        logger.warning("round %d: clients %s have zero batches; skipped", state.round, skipped)
    if not participating:
        raise gan.EmptyDataset("no client has enough samples for a single batch")

    if cfg.deterministic or len(participating) == 1:
        traces = [train_client_epochs(c, state.store, cfg) for c in participating]
    else:
        with ThreadPoolExecutor(max_workers=min(8, len(participating))) as pool:
            traces = list(
                pool.map(lambda c: train_client_epochs(c, state.store, cfg), participating)
            )

    if cfg.fedavg_weighting == "samples":
        weights = [c.sample_count for c in participating]
    else:
        weights = [1.0] * len(participating)
    new_gen = fedavg([c.gen for c in participating], weights)
    new_disc = fedavg([c.disc for c in participating], weights)
    state.global_gen.copy_from(new_gen)
    state.global_disc.copy_from(new_disc)

    client_losses = [
        [float(np.mean([d for d, _ in tr])), float(np.mean([g for _, g in tr]))] for tr in traces
    ]
    disc_mean = float(np.mean([c[0] for c in client_losses]))
    gen_mean = float(np.mean([c[1] for c in client_losses]))
    state.disc_loss_history.append(disc_mean)
    state.gen_loss_history.append(gen_mean)
    state.round += 1
    state.round_records.append(
        {
            "round": state.round,
            "client_losses": client_losses,
            "global_gen_loss": gen_mean,
            "global_disc_loss": disc_mean,
            "wall_ms": (time.perf_counter() - started) * 1000.0,
        }
    )
    return state


def plateaued(values, window: int = 10, threshold: float = 0.05) -> bool:
    """True when consecutive deltas over the last `window` points stay under
    threshold * (max - min) of the whole curve."""
    if len(values) < window + 1:
        return False
    lo, hi = min(values), max(values)
    span = hi - lo
    if span == 0:
        return True
    tail = values[-window:]
    prev = values[-window - 1]
    for v in tail:
        if abs(v - prev) >= threshold * span:
            return False
        prev = v
    return True


def evaluation_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 0xE7A1, round_index)))


def evaluate_state(state: FederationState, reference: metrics.ReferenceIndex, round_index: int):
    """Generate eval_samples hard molecules from the global generator and score them."""
    cfg = state.config
    rng = evaluation_rng(cfg.seed, round_index)
    n = cfg.eval_samples
    graphs: list[MolecularGraph] = []
    bs = max(1, cfg.batch_size)
    remaining = n
    while remaining > 0:
        take = min(bs, remaining)
        z = rng.standard_normal((take, cfg.noise_dim)).astype(state.global_gen.dtype)
        v, a = gan.generate(
            state.global_gen, z, mode="hard", rng=rng, temperature=cfg.temperature
        )
        graphs.extend(gan.graphs_from_arrays(v.data, a.data))
        remaining -= take
    eval_cfg = metrics.EvalConfig(
        fp_radius=cfg.fp_radius,
        fp_width=cfg.fp_width,
        snn_sample_size=cfg.snn_sample_size,
        snn_seed=cfg.seed,
        require_connected=cfg.require_connected,
    )
    return metrics.evaluate(graphs, reference, eval_cfg)


class RunSink:
    """Receiver for training artifacts; file handling lives in the CLI."""

    def round_record(self, record: dict) -> None:
        pass

    def metrics_report(self, round_index: int, report, final: bool) -> None:
        pass

    def checkpoint(self, round_index: int, gen, disc, final: bool) -> None:
        pass


def run_training(cfg: FederationConfig, graphs: list[MolecularGraph], sink: RunSink | None = None):
    """Fixed budget of R rounds with periodic evaluation; returns state + reports."""
    state = init_federation(graphs, cfg)
    if cfg.rounds == 0:
        return state, []
    train_graphs = [graphs[int(i)] for i in state.train_indices]
    reference = metrics.ReferenceIndex.build(
        train_graphs, radius=cfg.fp_radius, width=cfg.fp_width
    )
    reports: list[tuple[int, metrics.MetricsReport]] = []
    for _ in range(cfg.rounds):
        run_round(state)
        if sink is not None:
            sink.round_record(state.round_records[-1])
        if cfg.eval_interval and state.round % cfg.eval_interval == 0 and state.round < cfg.rounds:
            report = evaluate_state(state, reference, state.round)
            reports.append((state.round, report))
            if sink is not None:
                sink.metrics_report(state.round, report, final=False)
        if (
            cfg.checkpoint_interval
            and state.round % cfg.checkpoint_interval == 0
            and state.round < cfg.rounds
            and sink is not None
        ):
            sink.checkpoint(state.round, state.global_gen, state.global_disc, final=False)
    final_report = evaluate_state(state, reference, state.round)
    reports.append((state.round, final_report))
    if sink is not None:
        sink.metrics_report(state.round, final_report, final=True)
        sink.checkpoint(state.round, state.global_gen, state.global_disc, final=True)
    return state, reports
