"""Command-line entry point: train, eval, sweep, dump-samples.

Exit codes: 0 success, 1 runtime error, 2 config error, 3 dataset/artifact
error. Output files are written atomically (temp + rename); the round log is
the only append-mode artifact.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checkpoint, federation, gan, metrics, smiles
from .molgraph import is_valid
from .config import (
    ConfigError,
    ExperimentConfig,
    MultipleSweepAxes,
    load_config,
    serialize_config,
    sweep_points,
)

OUT_ROOT_ENV = "FEDMOLGAN_OUT"

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3


class DatasetError(Exception):
    pass


def atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _default_out(subdir: str, explicit: str = "") -> str:
    if explicit:
        return explicit
    root = os.environ.get(OUT_ROOT_ENV, "runs")
    return os.path.join(root, subdir)


def _load_graphs(cfg: ExperimentConfig):
    if not cfg.dataset:
        raise DatasetError("config is missing a dataset path")
    try:
        graphs, skips = smiles.load_dataset(
            cfg.dataset, column=cfg.dataset_column or None, n_max=cfg.n_max
        )
    except FileNotFoundError as err:
        raise DatasetError(f"dataset file not found: {err}") from err
    except smiles.MissingColumn as err:
        raise DatasetError(str(err)) from err
    if not graphs:
        raise DatasetError(f"no parsable records in {cfg.dataset}")
    return graphs, skips


class FileSink(federation.RunSink):
    """Writes round logs, periodic reports, and checkpoints into the run dir."""

    def __init__(self, run_dir: str, metadata: dict):
        self.run_dir = run_dir
        self.metadata = metadata
        self.log_path = os.path.join(run_dir, "rounds.log")
        if os.path.exists(self.log_path):
            os.remove(self.log_path)

    def round_record(self, record: dict) -> None:
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")

    def metrics_report(self, round_index: int, report, final: bool) -> None:
        report.metadata.update(self.metadata)
        report.metadata["round"] = round_index
        name = "report_final.json" if final else f"report_round_{round_index:04d}.json"
        atomic_write_text(os.path.join(self.run_dir, name), report.to_json())
        if final:
            row = metrics.sweep_row(
                self.metadata.get("dataset_name", "dataset"),
                self.metadata.get("generator_dims", ""),
                self.metadata.get("discriminator_dims", ""),
                self.metadata.get("num_clients", 0),
                report,
            )
            atomic_write_text(
                os.path.join(self.run_dir, "report_final.txt"), metrics.render_table([row])
            )

    def checkpoint(self, round_index: int, gen_model, disc_model, final: bool) -> None:
        name = "ckpt_final.bin" if final else f"ckpt_round_{round_index:04d}.bin"
        gan.save_models(os.path.join(self.run_dir, name), gen_model, disc_model)


def _run_metadata(cfg: ExperimentConfig) -> dict:
    return {
        "dataset": cfg.dataset,
        "dataset_name": cfg.label(),
        "generator_dims": cfg.generator_dims,
        "discriminator_dims": cfg.discriminator_dims,
        "num_clients": cfg.num_clients,
        "partition": cfg.partition,
        "dropout_gen": cfg.dropout_gen,
        "dropout_disc": cfg.dropout_disc,
        "seed": cfg.seed,
    }


def run_experiment(cfg: ExperimentConfig, run_dir: str):
    """Train per config, writing all artifacts into run_dir."""
    os.makedirs(run_dir, exist_ok=True)
    graphs, skips = _load_graphs(cfg)
    atomic_write_text(
        os.path.join(run_dir, "skips.log"), "".join(rec.format() + "\n" for rec in skips)
    )
    atomic_write_text(os.path.join(run_dir, "effective.cfg"), serialize_config(cfg))
    sink = FileSink(run_dir, _run_metadata(cfg))
    fed_cfg = cfg.to_federation_config()
    state, reports = federation.run_training(fed_cfg, graphs, sink)
    if reports:
        final = reports[-1][1]
        final.metadata["gen_plateaued"] = federation.plateaued(
            state.gen_loss_history, fed_cfg.plateau_window, fed_cfg.plateau_threshold
        )
        final.metadata["disc_plateaued"] = federation.plateaued(
            state.disc_loss_history, fed_cfg.plateau_window, fed_cfg.plateau_threshold
        )
        atomic_write_text(os.path.join(run_dir, "report_final.json"), final.to_json())
    gen_series = "".join(
        f"{i + 1}\t{v!r}\n" for i, v in enumerate(state.gen_loss_history)
    )
    disc_series = "".join(
        f"{i + 1}\t{v!r}\n" for i, v in enumerate(state.disc_loss_history)
    )
    atomic_write_text(os.path.join(run_dir, "loss_gen.tsv"), gen_series)
    atomic_write_text(os.path.join(run_dir, "loss_disc.tsv"), disc_series)
    return state, reports


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    run_dir = _default_out("train", args.out or cfg.out_dir)
    run_experiment(cfg, run_dir)
    print(f"run artifacts in {run_dir}")
    return 0


def _apply_overrides(cfg: ExperimentConfig, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "deterministic", False):
        cfg.deterministic = True
    cfg.validate()


def _eval_report(ckpt_path: str, dataset: str, column: str, n_samples: int, seed: int,
                 cfg: ExperimentConfig):
    try:
        named = checkpoint.load_arrays(ckpt_path)
        gen_model, _ = gan.models_from_arrays(named)
    except FileNotFoundError as err:
        raise DatasetError(f"checkpoint not found: {err}") from err
    cfg.dataset = dataset
    cfg.dataset_column = column
    cfg.n_max = gen_model.n_max
    graphs, _ = _load_graphs(cfg)
    train_idx, _, _ = federation.split_dataset(len(graphs), cfg.split_ratio_tuple(), seed)
    reference = metrics.ReferenceIndex.build(
        [graphs[int(i)] for i in train_idx], radius=cfg.fp_radius, width=cfg.fp_width
    )
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE7A1, 0)))
    sampled: list = []
    remaining = n_samples
    while remaining > 0:
        take = min(cfg.batch_size, remaining)
        z = rng.standard_normal((take, gen_model.noise_dim)).astype(gen_model.dtype)
        v, a = gan.generate(gen_model, z, mode="hard", rng=rng, temperature=cfg.temperature)
        sampled.extend(gan.graphs_from_arrays(v.data, a.data))
        remaining -= take
    eval_cfg = metrics.EvalConfig(
        fp_radius=cfg.fp_radius,
        fp_width=cfg.fp_width,
        snn_sample_size=cfg.snn_sample_size,
        snn_seed=seed,
        require_connected=cfg.require_connected,
    )
    report = metrics.evaluate(sampled, reference, eval_cfg)
    report.metadata.update(
        {
            "checkpoint": ckpt_path,
            "dataset": dataset,
            "n_samples": n_samples,
            "seed": seed,
        }
    )
    return gen_model, report


def cmd_eval(args) -> int:
    cfg = ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    gen_model, report = _eval_report(
        args.checkpoint, args.dataset, args.column or "", args.n_samples, cfg.seed, cfg
    )
    row = metrics.sweep_row(
        os.path.splitext(os.path.basename(args.dataset))[0],
        ",".join(str(d) for d in gen_model.layer_dims),
        "-",
        1,
        report,
    )
    sys.stdout.write(metrics.render_table([row]))
    sys.stdout.write(report.to_json())
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        atomic_write_text(args.out, report.to_json())
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    points = sweep_points(cfg)
    run_dir = _default_out("sweep", args.out or cfg.out_dir)
    os.makedirs(run_dir, exist_ok=True)
    rows = []
    extra_dropout = cfg.sweep_axis == "dropout"
    for value, sub in points:
        sub_dir = os.path.join(run_dir, f"{cfg.sweep_axis}_{value.replace('/', '_')}")
        _, reports = run_experiment(sub, sub_dir)
        final = reports[-1][1]
        row = metrics.sweep_row(
            sub.label(), sub.generator_dims, sub.discriminator_dims, sub.num_clients, final
        )
        if extra_dropout:
            row["Dropout"] = value
        rows.append(row)
    columns = metrics.SWEEP_COLUMNS + (("Dropout",) if extra_dropout else ())
    table = metrics.render_table(rows, columns)
    atomic_write_text(os.path.join(run_dir, "sweep.txt"), table)
    atomic_write_text(
        os.path.join(run_dir, "sweep.json"),
        json.dumps([{k: r.get(k, "") for k in columns} for r in rows], indent=2) + "\n",
    )
    sys.stdout.write(table)
    print(f"sweep artifacts in {run_dir}")
    return 0


def cmd_dump_samples(args) -> int:
    try:
        named = checkpoint.load_arrays(args.checkpoint)
        gen_model, _ = gan.models_from_arrays(named)
    except FileNotFoundError as err:
        raise DatasetError(f"checkpoint not found: {err}") from err
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD0A7)))
    lines = []
    remaining = args.n
    while remaining > 0:
        take = min(16, remaining)
        z = rng.standard_normal((take, gen_model.noise_dim)).astype(gen_model.dtype)
        v, a = gan.generate(gen_model, z, mode="hard", rng=rng)
        for g in gan.graphs_from_arrays(v.data, a.data):
            if is_valid(g):
                lines.append(smiles.write(g))
            else:
                lines.append(smiles.write(g, validate=False) + " # invalid")
        remaining -= take
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedmolgan",
        description="Federated adversarial training simulator for small molecular graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run federated training per a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--deterministic", action="store_true")
    p_train.add_argument("--out", default="")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint against a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--column", default="")
    p_eval.add_argument("--n-samples", type=int, default=256)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default="")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="run one sweep axis and emit a combined table")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--deterministic", action="store_true")
    p_sweep.add_argument("--out", default="")
    p_sweep.set_defaults(func=cmd_sweep)

    p_dump = sub.add_parser("dump-samples", help="write generated molecules as SMILES")
    p_dump.add_argument("--checkpoint", required=True)
    p_dump.add_argument("--n", type=int, default=10)
    p_dump.add_argument("--seed", type=int, default=None)
    p_dump.add_argument("--out", default="")
    p_dump.set_defaults(func=cmd_dump_samples)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MultipleSweepAxes) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, checkpoint.CorruptCheckpoint, gan.ArchitectureMismatch) as err:
        print(f"dataset error: {err}", file=sys.stderr)
        return EXIT_DATASET
    except Exception as err:  # noqa: BLE001 - single diagnostic line, typed exit code
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
