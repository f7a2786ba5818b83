"""Generator, relational-GCN discriminator, and the adversarial losses.

The generator is an MLP from a 16-dim noise vector to node-type and bond-type
logits; hard sampling uses straight-through Gumbel-softmax and enforces the
graph invariants (symmetry, ZERO diagonal, ZERO bonds at padding)
constructively. The discriminator runs two relational convolutions, a
per-node reduction, and a gated sum with a tanh-bounded scalar output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .molgraph import NUM_ATOM_TYPES, NUM_BOND_TYPES, AtomType, BondType, MolecularGraph, from_arrays


class EmptyDataset(ValueError):
    pass


class ArchitectureMismatch(ValueError):
    pass


def parse_disc_dims(text: str) -> tuple[list[int], int, list[int]]:
    """Parse a "[a,b],c,[d,1]" layer-width string."""
    m = re.fullmatch(r"\[(\d+),(\d+)\],(\d+),\[(\d+),(\d+)\]", text.replace(" ", ""))
    if not m:
        raise ValueError(f"discriminator dims {text!r} not in \"[a,b],c,[d,1]\" form")
    a, b, c, d, e = (int(x) for x in m.groups())
    if e != 1:
        raise ValueError(f"discriminator dims {text!r} must end in 1")
    return [a, b], c, [d, e]


def format_disc_dims(conv_dims, reduce_dim, head_dims) -> str:
    return f"[{conv_dims[0]},{conv_dims[1]}],{reduce_dim},[{head_dims[0]},{head_dims[1]}]"


class _ParamModel:
    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def _add(self, name: str, arr: np.ndarray) -> Tensor:
        t = ad.parameter(arr, dtype=arr.dtype)
        self._params[name] = t
        return t

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def param_items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, named: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            if name not in named:
                raise ArchitectureMismatch(f"missing parameter {name}")
            arr = np.asarray(named[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ArchitectureMismatch(f"{name}: {arr.shape} vs expected {t.data.shape}")
            t.data[...] = arr
        extra = set(named) - set(self._params)
        if extra:
            raise ArchitectureMismatch(f"unexpected parameters {sorted(extra)}")

    def copy_from(self, other: "_ParamModel") -> None:
        self.load_state({name: t.data for name, t in other._params.items()})


class GeneratorModel(_ParamModel):
    """MLP mapping noise to (node-type, bond-type) logit heads."""

    def __init__(
        self,
        layer_dims,
        rng,
        noise_dim: int = 16,
        n_max: int = 10,
        num_atom_types: int = NUM_ATOM_TYPES,
        num_bond_types: int = NUM_BOND_TYPES,
        dropout_ratio: float = 0.0,
        dtype=np.float32,
    ):
        super().__init__()
        self.layer_dims = list(layer_dims)
        self.noise_dim = noise_dim
        self.n_max = n_max
        self.num_atom_types = num_atom_types
        self.num_bond_types = num_bond_types
        self.dropout_ratio = dropout_ratio
        self.dtype = dtype
        fan_in = noise_dim
        for i, width in enumerate(self.layer_dims):
            self._add(f"fc{i}.w", ad.xavier_uniform(rng, fan_in, width, dtype=dtype))
            self._add(f"fc{i}.b", np.zeros(width, dtype=dtype))
            fan_in = width
        v_out = n_max * num_atom_types
        a_out = n_max * n_max * num_bond_types
        self._add("head_v.w", ad.xavier_uniform(rng, fan_in, v_out, dtype=dtype))
        self._add("head_v.b", np.zeros(v_out, dtype=dtype))
        self._add("head_a.w", ad.xavier_uniform(rng, fan_in, a_out, dtype=dtype))
        self._add("head_a.b", np.zeros(a_out, dtype=dtype))

    def spawn(self) -> "GeneratorModel":
        clone = GeneratorModel(
            self.layer_dims,
            np.random.default_rng(0),
            noise_dim=self.noise_dim,
            n_max=self.n_max,
            num_atom_types=self.num_atom_types,
            num_bond_types=self.num_bond_types,
            dropout_ratio=self.dropout_ratio,
            dtype=self.dtype,
        )
        clone.copy_from(self)
        return clone


class DiscriminatorModel(_ParamModel):
    """Two relational convolutions, a reduce layer, and gated parallel heads."""

    def __init__(
        self,
        conv_dims,
        reduce_dim: int,
        head_dims,
        rng,
        num_atom_types: int = NUM_ATOM_TYPES,
        num_bond_types: int = NUM_BOND_TYPES,
        dropout_ratio: float = 0.0,
        dtype=np.float32,
    ):
        super().__init__()
        if head_dims[-1] != 1:
            raise ValueError("discriminator head must end in a scalar")
        self.conv_dims = list(conv_dims)
        self.reduce_dim = reduce_dim
        self.head_dims = list(head_dims)
        self.num_atom_types = num_atom_types
        self.num_bond_types = num_bond_types
        self.dropout_ratio = dropout_ratio
        self.dtype = dtype
        b = num_atom_types
        fan_in = b  # initial node feature is the type one-hot
        for layer, width in enumerate(self.conv_dims):
            self._add(f"conv{layer}.fs.w", ad.xavier_uniform(rng, fan_in + b, width, dtype=dtype))
            self._add(f"conv{layer}.fs.b", np.zeros(width, dtype=dtype))
            for k in range(1, num_bond_types):
                lim_in = fan_in + b
                self._add(
                    f"conv{layer}.ft{k}.wh",
                    ad.xavier_uniform(rng, lim_in, width, shape=(fan_in, width), dtype=dtype),
                )
                self._add(
                    f"conv{layer}.ft{k}.wv",
                    ad.xavier_uniform(rng, lim_in, width, shape=(b, width), dtype=dtype),
                )
                self._add(f"conv{layer}.ft{k}.b", np.zeros(width, dtype=dtype))
            fan_in = width
        self._add("reduce.w", ad.xavier_uniform(rng, fan_in, reduce_dim, dtype=dtype))
        self._add("reduce.b", np.zeros(reduce_dim, dtype=dtype))
        head_in = reduce_dim + b
        width = self.head_dims[0]
        for name in ("g1", "g2"):
            self._add(f"{name}.w", ad.xavier_uniform(rng, head_in, width, dtype=dtype))
            self._add(f"{name}.b", np.zeros(width, dtype=dtype))
        self._add("out.w", ad.xavier_uniform(rng, width, 1, dtype=dtype))
        self._add("out.b", np.zeros(1, dtype=dtype))

    def spawn(self) -> "DiscriminatorModel":
        clone = DiscriminatorModel(
            self.conv_dims,
            self.reduce_dim,
            self.head_dims,
            np.random.default_rng(0),
            num_atom_types=self.num_atom_types,
            num_bond_types=self.num_bond_types,
            dropout_ratio=self.dropout_ratio,
            dtype=self.dtype,
        )
        clone.copy_from(self)
        return clone


def _dense(x3: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Apply a (in, out) affine map to the last axis of a (batch, N, in) tensor."""
    bsz, n, fin = x3.data.shape
    flat = ad.reshape(x3, (bsz * n, fin))
    out = ad.matmul(flat, w)
    if b is not None:
        out = ad.add_bias(out, b)
    return ad.reshape(out, (bsz, n, w.data.shape[1]))


def rgcn_layer(h: Tensor, v: Tensor, a: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One relational-convolution step.

    h'_i = f_s(h_i, v_i) + sum_{j,k} (a_ijk / max(|N_i|, 1)) f_t^k(h_j, v_i),
    followed by tanh; nodes without neighbors keep only the skip term.
    """
    bsz, n, _ = h.data.shape
    t = a.data.shape[3]
    width = params["fs.w"].data.shape[1]

    hv = ad.concat([h, v], axis=-1)
    skip = _dense(hv, params["fs.w"], params["fs.b"])

    nonzero = ad.slice_axis(a, 3, 1, t)
    deg = ad.sum_last(ad.reshape(nonzero, (bsz, n, n * (t - 1))))  # (b, n, 1)
    deg = ad.clip_min(deg, 1.0)
    deg_w = ad.tile_last(deg, width)

    msg = None
    for k in range(1, t):
        ak = ad.reshape(ad.slice_axis(a, 3, k, k + 1), (bsz, n, n))
        neigh = ad.bmm(ak, h)  # (b, n, F): sum_j a_ijk h_j
        rowsum = ad.sum_last(ak)  # (b, n, 1): sum_j a_ijk
        term = ad.add(
            _dense(neigh, params[f"ft{k}.wh"]),
            ad.mul(
                _dense(v, params[f"ft{k}.wv"], params[f"ft{k}.b"]),
                ad.tile_last(rowsum, width),
            ),
        )
        msg = term if msg is None else ad.add(msg, term)
    msg = ad.div(msg, deg_w)
    return ad.tanh(ad.add(skip, msg))


def _conv_params(model: DiscriminatorModel, layer: int) -> dict[str, Tensor]:
    prefix = f"conv{layer}."
    return {name[len(prefix) :]: t for name, t in model._params.items() if name.startswith(prefix)}


def discriminate(
    model: DiscriminatorModel,
    v: Tensor,
    a: Tensor,
    training: bool = False,
    rng=None,
) -> Tensor:
    """Score a batch of (V, A) pairs; output one tanh-bounded scalar per graph."""
    if not isinstance(v, Tensor):
        v = ad.constant(np.asarray(v, dtype=model.dtype))
    if not isinstance(a, Tensor):
        a = ad.constant(np.asarray(a, dtype=model.dtype))
    bsz, n, _ = v.data.shape
    ratio = model.dropout_ratio

    h = v
    for layer in range(len(model.conv_dims)):
        h = rgcn_layer(h, v, a, _conv_params(model, layer))
        h = ad.dropout(h, ratio, rng, training)
    h = ad.tanh(_dense(h, model._params["reduce.w"], model._params["reduce.b"]))

    hv = ad.concat([h, v], axis=-1)
    g1 = ad.sigmoid(_dense(hv, model._params["g1.w"], model._params["g1.b"]))
    g1 = ad.dropout(g1, ratio, rng, training)
    g2 = ad.tanh(_dense(hv, model._params["g2.w"], model._params["g2.b"]))
    g2 = ad.dropout(g2, ratio, rng, training)
    gated = ad.mul(g1, g2)  # (b, n, width)

    ones = ad.constant(np.ones((bsz, 1, n), dtype=v.data.dtype))
    pooled = ad.reshape(ad.bmm(ones, gated), (bsz, model.head_dims[0]))
    out = ad.tanh(ad.add_bias(ad.matmul(pooled, model._params["out.w"]), model._params["out.b"]))
    return ad.reshape(out, (bsz,))


def _upper_mask(bsz: int, n: int, t: int, dtype) -> np.ndarray:
    m = np.triu(np.ones((n, n), dtype=dtype), k=1)[None, :, :, None]
    return np.ascontiguousarray(np.broadcast_to(m, (bsz, n, n, t)))


def _diag_zero_onehot(bsz: int, n: int, t: int, dtype) -> np.ndarray:
    z = np.zeros((n, n, t), dtype=dtype)
    idx = np.arange(n)
    z[idx, idx, BondType.ZERO] = 1
    return np.ascontiguousarray(np.broadcast_to(z[None], (bsz, n, n, t)))


def _zero_onehot(bsz: int, n: int, t: int, dtype) -> np.ndarray:
    z = np.zeros((bsz, n, n, t), dtype=dtype)
    z[:, :, :, BondType.ZERO] = 1
    return z


def generate(
    model: GeneratorModel,
    z: Tensor,
    mode: str = "soft",
    rng=None,
    temperature: float = 1.0,
    training: bool = False,
) -> tuple[Tensor, Tensor]:
    """Run the generator on a noise batch.

    Soft mode returns softmax-normalized type/bond distributions; hard mode
    returns straight-through one-hot samples that satisfy the graph
    invariants by construction.
    """
    if not isinstance(z, Tensor):
        z = ad.constant(np.asarray(z, dtype=model.dtype))
    if z.data.ndim != 2 or z.data.shape[1] != model.noise_dim:
        raise ad.ShapeMismatch(f"noise shape {z.data.shape} vs (batch, {model.noise_dim})")
    bsz = z.data.shape[0]
    n, b, t = model.n_max, model.num_atom_types, model.num_bond_types

    h = z
    for i in range(len(model.layer_dims)):
        h = ad.tanh(ad.add_bias(ad.matmul(h, model._params[f"fc{i}.w"]), model._params[f"fc{i}.b"]))
    h = ad.dropout(h, model.dropout_ratio, rng, training)

    v_logits = ad.reshape(
        ad.add_bias(ad.matmul(h, model._params["head_v.w"]), model._params["head_v.b"]), (bsz, n, b)
    )
    a_logits = ad.reshape(
        ad.add_bias(ad.matmul(h, model._params["head_a.w"]), model._params["head_a.b"]), (bsz, n, n, t)
    )
    a_logits = ad.scale(ad.add(a_logits, ad.permute_axes(a_logits, (0, 2, 1, 3))), 0.5)

    if mode == "soft":
        return ad.softmax(v_logits), ad.softmax(a_logits)
    if mode != "hard":
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")

    dtype = model.dtype
    v_hard = ad.gumbel_softmax_sample(v_logits, temperature, True, rng)
    a_samp = ad.gumbel_softmax_sample(a_logits, temperature, True, rng)

    upper = ad.constant(_upper_mask(bsz, n, t, dtype))
    a_up = ad.mul(a_samp, upper)
    a_sym = ad.add(a_up, ad.permute_axes(a_up, (0, 2, 1, 3)))
    a_sym = ad.add(a_sym, ad.constant(_diag_zero_onehot(bsz, n, t, dtype)))

    pad_col = ad.slice_axis(v_hard, 2, AtomType.PAD, AtomType.PAD + 1)  # (b, n, 1)
    keep = ad.add_scalar(ad.scale(pad_col, -1.0), 1.0)
    pair = ad.bmm(keep, ad.transpose_last2(keep))  # (b, n, n)
    pair_t = ad.tile_last(ad.reshape(pair, (bsz, n, n, 1)), t)
    dropped = ad.add_scalar(ad.scale(pair_t, -1.0), 1.0)
    a_hard = ad.add(
        ad.mul(a_sym, pair_t), ad.mul(ad.constant(_zero_onehot(bsz, n, t, dtype)), dropped)
    )
    return v_hard, a_hard


def graphs_from_arrays(v: np.ndarray, a: np.ndarray) -> list[MolecularGraph]:
    """Discrete batch tensors -> graph objects (argmax re-one-hotted)."""
    out = []
    for vi, ai in zip(v, a):
        vv = np.zeros(vi.shape, dtype=np.uint8)
        vv[np.arange(vi.shape[0]), vi.argmax(axis=-1)] = 1
        aa = np.zeros(ai.shape, dtype=np.uint8)
        flatidx = ai.reshape(-1, ai.shape[-1]).argmax(axis=-1)
        aa.reshape(-1, ai.shape[-1])[np.arange(flatidx.size), flatidx] = 1
        out.append(from_arrays(vv, aa, check=False))
    return out


def graphs_to_arrays(graphs, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    v = np.stack([g.node_labels for g in graphs]).astype(dtype)
    a = np.stack([g.adjacency for g in graphs]).astype(dtype)
    return v, a


# ---------------------------------------------------------------------------
# losses


def generator_loss(d_outputs: Tensor, form: str = "wgan") -> Tensor:
    if form == "wgan":
        return ad.scale(ad.mean_all(d_outputs), -1.0)
    if form == "log":
        shifted = ad.scale(ad.add_scalar(d_outputs, 1.0), 0.5)
        return ad.scale(ad.mean_all(ad.log(shifted)), -1.0)
    raise ValueError(f"unknown loss form {form!r}")


def discriminator_loss(
    d_gen: Tensor, d_exist: Tensor, penalty: Tensor, gamma: float = 10.0, form: str = "wgan"
) -> Tensor:
    gp = ad.scale(penalty, gamma)
    if form == "wgan":
        return ad.add(ad.sub(ad.mean_all(d_gen), ad.mean_all(d_exist)), gp)
    if form == "log":
        lg = ad.log(ad.scale(ad.add_scalar(d_gen, 1.0), 0.5))
        le = ad.log(ad.scale(ad.add_scalar(d_exist, 1.0), 0.5))
        return ad.add(ad.sub(ad.mean_all(le), ad.mean_all(lg)), gp)
    raise ValueError(f"unknown loss form {form!r}")


@dataclass
class GradientPenaltyConfig:
    gamma: float = 10.0
    eps_mode: str = "per_sample"  # or "fixed"
    eps_value: float = 0.5

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.eps_mode not in ("per_sample", "fixed"):
            raise ValueError(f"eps_mode {self.eps_mode!r}")
        if self.eps_mode == "fixed" and not (0.0 <= self.eps_value <= 1.0):
            raise ValueError("fixed eps must lie in [0, 1]")


def gradient_penalty(
    model: DiscriminatorModel,
    v_exist: Tensor,
    a_exist: Tensor,
    v_gen: Tensor,
    a_gen: Tensor,
    cfg: GradientPenaltyConfig,
    rng,
    training: bool = False,
) -> Tensor:
    """Mean squared deviation of the interpolate gradient norm from 1."""
    bsz = v_exist.data.shape[0]
    dtype = v_exist.data.dtype
    if cfg.eps_mode == "per_sample":
        eps = rng.random(bsz).astype(dtype)
    else:
        eps = np.full(bsz, cfg.eps_value, dtype=dtype)
    ev = np.ascontiguousarray(np.broadcast_to(eps[:, None, None], v_exist.data.shape)).astype(dtype)
    ea = np.ascontiguousarray(np.broadcast_to(eps[:, None, None, None], a_exist.data.shape)).astype(dtype)

    # Interpolates enter as leaf tensors: the penalty regularizes the critic,
    # so no gradient needs to flow back through the generated samples.
    omega_v = Tensor(ev * v_exist.data + (1.0 - ev) * v_gen.data, requires_grad=True)
    omega_a = Tensor(ea * a_exist.data + (1.0 - ea) * a_gen.data, requires_grad=True)
    if isinstance(model, DiscriminatorModel):
        d = discriminate(model, omega_v, omega_a, training=training, rng=rng)
    else:  # any callable critic (testing seam)
        d = model(omega_v, omega_a)
    total = ad.sum_all(d)
    gv, ga = ad.backward(total, [omega_v, omega_a], create_graph=True)
    sq = ad.add(
        ad.sum_last(ad.reshape(ad.square(gv), (bsz, -1))),
        ad.sum_last(ad.reshape(ad.square(ga), (bsz, -1))),
    )
    norm = ad.sqrt(ad.add_scalar(sq, 1e-12))
    pen = ad.mean_all(ad.square(ad.add_scalar(norm, -1.0)))
    return pen


def models_to_arrays(gen: GeneratorModel, disc: DiscriminatorModel) -> dict[str, np.ndarray]:
    named: dict[str, np.ndarray] = {
        "meta/n_max": np.array([gen.n_max], dtype=np.float32),
        "meta/num_atom_types": np.array([gen.num_atom_types], dtype=np.float32),
        "meta/num_bond_types": np.array([gen.num_bond_types], dtype=np.float32),
        "meta/noise_dim": np.array([gen.noise_dim], dtype=np.float32),
        "meta/gen_dims": np.array(gen.layer_dims, dtype=np.float32),
        "meta/gen_dropout": np.array([gen.dropout_ratio], dtype=np.float32),
        "meta/disc_conv_dims": np.array(disc.conv_dims, dtype=np.float32),
        "meta/disc_reduce_dim": np.array([disc.reduce_dim], dtype=np.float32),
        "meta/disc_head_dims": np.array(disc.head_dims, dtype=np.float32),
        "meta/disc_dropout": np.array([disc.dropout_ratio], dtype=np.float32),
    }
    for name, t in gen.param_items():
        named[f"gen/{name}"] = t.data
    for name, t in disc.param_items():
        named[f"disc/{name}"] = t.data
    return named


def save_models(path: str, gen: GeneratorModel, disc: DiscriminatorModel) -> None:
    from . import checkpoint

    checkpoint.save_arrays(path, models_to_arrays(gen, disc))


def models_from_arrays(named: dict[str, np.ndarray], dtype=np.float32):
    """Rebuild (generator, discriminator) from a checkpoint record dict."""

    def meta(key):
        if f"meta/{key}" not in named:
            raise ArchitectureMismatch(f"checkpoint lacks meta/{key}")
        return named[f"meta/{key}"]

    rng = np.random.default_rng(0)
    gen = GeneratorModel(
        [int(x) for x in meta("gen_dims")],
        rng,
        noise_dim=int(meta("noise_dim")[0]),
        n_max=int(meta("n_max")[0]),
        num_atom_types=int(meta("num_atom_types")[0]),
        num_bond_types=int(meta("num_bond_types")[0]),
        dropout_ratio=float(meta("gen_dropout")[0]),
        dtype=dtype,
    )
    disc = DiscriminatorModel(
        [int(x) for x in meta("disc_conv_dims")],
        int(meta("disc_reduce_dim")[0]),
        [int(x) for x in meta("disc_head_dims")],
        rng,
        num_atom_types=int(meta("num_atom_types")[0]),
        num_bond_types=int(meta("num_bond_types")[0]),
        dropout_ratio=float(meta("disc_dropout")[0]),
        dtype=dtype,
    )
    gen.load_state({k[len("gen/") :]: v for k, v in named.items() if k.startswith("gen/")})
    disc.load_state({k[len("disc/") :]: v for k, v in named.items() if k.startswith("disc/")})
    return gen, disc


def load_models(path: str, dtype=np.float32):
    from . import checkpoint

    return models_from_arrays(checkpoint.load_arrays(path), dtype=dtype)


@dataclass
class TrainOptions:
    """Knobs consumed by one local training epoch."""

    gp: GradientPenaltyConfig = field(default_factory=GradientPenaltyConfig)
    loss_form: str = "wgan"
    temperature: float = 1.0
    adam_gen: ad.AdamState = field(default_factory=ad.AdamState)
    adam_disc: ad.AdamState = field(default_factory=ad.AdamState)
    epoch: int = 0
    z_batch: np.ndarray | None = None


def local_epoch(
    gen: GeneratorModel,
    disc: DiscriminatorModel,
    batches,
    opts: TrainOptions,
    rng,
) -> list[tuple[float, float]]:
    """One pass over the local batches: per batch one discriminator Adam step on
    the penalized critic loss, then one generator Adam step on fresh
    discriminator outputs. Returns (disc_loss, gen_loss) per step."""
    batches = list(batches)
    if not batches:
        raise EmptyDataset("no batches to train on")
    trace: list[tuple[float, float]] = []
    gen_params = gen.parameters()
    disc_params = disc.parameters()
    for v_ex_arr, a_ex_arr in batches:
        bsz = v_ex_arr.shape[0]
        if opts.z_batch is not None:
            z = np.asarray(opts.z_batch, dtype=gen.dtype)
        else:
            z = rng.standard_normal((bsz, gen.noise_dim)).astype(gen.dtype)
        with ad.Tape():
            v_gen, a_gen = generate(
                gen, ad.constant(z), mode="hard", rng=rng, temperature=opts.temperature, training=True
            )
            v_ex = ad.constant(np.asarray(v_ex_arr, dtype=gen.dtype))
            a_ex = ad.constant(np.asarray(a_ex_arr, dtype=gen.dtype))

            d_gen = discriminate(disc, v_gen.detach(), a_gen.detach(), training=True, rng=rng)
            d_ex = discriminate(disc, v_ex, a_ex, training=True, rng=rng)
            pen = gradient_penalty(
                disc, v_ex, a_ex, v_gen.detach(), a_gen.detach(), opts.gp, rng, training=True
            )
            d_loss = discriminator_loss(d_gen, d_ex, pen, gamma=opts.gp.gamma, form=opts.loss_form)
            d_grads = ad.backward(d_loss, disc_params)
            ad.adam_step(opts.adam_disc, disc_params, d_grads, epoch=opts.epoch)

            d_gen_fresh = discriminate(disc, v_gen, a_gen, training=True, rng=rng)
            g_loss = generator_loss(d_gen_fresh, form=opts.loss_form)
            g_grads = ad.backward(g_loss, gen_params)
            ad.adam_step(opts.adam_gen, gen_params, g_grads, epoch=opts.epoch)
        trace.append((d_loss.item(), g_loss.item()))
    return trace
