import json
import os

import numpy as np
import pytest

from conftest import CORPUS_PATH
from fedmolgan import checkpoint, cli, gan, smiles
from fedmolgan.config import (
    ConfigError,
    MultipleSweepAxes,
    load_config,
    parse_config_text,
    serialize_config,
    sweep_points,
)

TINY = f"""
config_version = 1
dataset = {CORPUS_PATH}
dataset_name = esol
n_max = 10
noise_dim = 4
generator_dims = 8
discriminator_dims = [5,6],5,[6,1]
num_clients = 2
epochs_per_round = 1
batch_size = 4
rounds = 2
eval_samples = 8
seed = 7
deterministic = true
"""


def write_cfg(tmp_path, text=TINY, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_defaults_and_overrides():
    cfg = parse_config_text(TINY)
    assert cfg.num_clients == 2
    assert cfg.batch_size == 4
    assert cfg.gamma == 10.0  # default
    assert cfg.deterministic is True


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("config_version = 1\nbatch_sized = 16\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("config_version = 1\nseed = 1\nseed = 2\n")


def test_missing_version_rejected():
    with pytest.raises(ConfigError, match="config_version"):
        parse_config_text("seed = 1\n")


def test_bad_value_types():
    with pytest.raises(ConfigError):
        parse_config_text("config_version = 1\nbatch_size = sixteen\n")
    with pytest.raises(ConfigError):
        parse_config_text("config_version = 1\ndeterministic = maybe\n")


def test_range_validation():
    with pytest.raises(ConfigError):
        parse_config_text("config_version = 1\ndropout_gen = 1.0\n")
    with pytest.raises(ConfigError):
        parse_config_text("config_version = 1\ndiscriminator_dims = [1,2],3\n")


def test_presets_fill_defaults():
    cfg = parse_config_text("config_version = 1\npreset = qm9\n")
    assert cfg.generator_dims == "64,128,256"
    assert cfg.discriminator_dims == "[256,512],256,[512,1]"
    assert cfg.noise_resample_interval == 100
    esol = parse_config_text("config_version = 1\npreset = esol\n")
    assert esol.noise_resample_interval == 1000
    assert esol.batch_size == 16 and esol.gamma == 10.0
    assert esol.lr == 1e-4 and esol.beta1 == 0.5 and esol.beta2 == 0.999


def test_preset_explicit_key_wins():
    cfg = parse_config_text("config_version = 1\npreset = esol\nnoise_resample_interval = 5\n")
    assert cfg.noise_resample_interval == 5


def test_serialize_roundtrip():
    cfg = parse_config_text(TINY)
    text = serialize_config(cfg)
    again = parse_config_text(text)
    assert serialize_config(again) == text
    assert again == cfg


def test_sweep_points_dropout():
    cfg = parse_config_text(TINY + "sweep_axis = dropout\nsweep_values = 0.25;0.5;0.75\n")
    points = sweep_points(cfg)
    assert [v for v, _ in points] == ["0.25", "0.5", "0.75"]
    assert all(sub.dropout_gen == sub.dropout_disc == float(v) for v, sub in points)


def test_sweep_points_rejects_single_value():
    cfg = parse_config_text(TINY + "sweep_axis = num_clients\nsweep_values = 4\n")
    with pytest.raises(MultipleSweepAxes):
        sweep_points(cfg)


def test_sweep_points_requires_axis():
    cfg = parse_config_text(TINY)
    with pytest.raises(MultipleSweepAxes):
        sweep_points(cfg)


# ---------------------------------------------------------------------------
# CLI


def test_cmd_train_writes_artifacts(tmp_path):
    cfg_path = write_cfg(tmp_path)
    out = str(tmp_path / "run")
    assert cli.main(["train", "--config", cfg_path, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "effective.cfg"))
    assert os.path.exists(os.path.join(out, "report_final.json"))
    assert os.path.exists(os.path.join(out, "report_final.txt"))
    assert os.path.exists(os.path.join(out, "ckpt_final.bin"))
    rounds = open(os.path.join(out, "rounds.log")).read().splitlines()
    assert len(rounds) == 2
    rec = json.loads(rounds[0])
    assert set(rec) == {"round", "client_losses", "global_gen_loss", "global_disc_loss", "wall_ms"}
    report = json.loads(open(os.path.join(out, "report_final.json")).read())
    assert report["qed"] is None
    assert "all_pad_fraction" in report
    # effective config reproduces the run settings on reload
    eff = load_config(os.path.join(out, "effective.cfg"))
    assert eff.rounds == 2 and eff.seed == 7


def test_cmd_train_missing_dataset_exit3(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, TINY.replace(CORPUS_PATH, "/nope/missing.csv"))
    assert cli.main(["train", "--config", cfg_path, "--out", str(tmp_path / "r")]) == 3
    assert "/nope/missing.csv" in capsys.readouterr().err


def test_cmd_train_bad_config_exit2(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, "config_version = 1\nwat = 1\n")
    assert cli.main(["train", "--config", cfg_path]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_cmd_train_deterministic_reports_byte_identical(tmp_path):
    cfg_path = write_cfg(tmp_path)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert cli.main(["train", "--config", cfg_path, "--seed", "7", "--deterministic", "--out", out1]) == 0
    assert cli.main(["train", "--config", cfg_path, "--seed", "7", "--deterministic", "--out", out2]) == 0
    for name in ("report_final.json", "report_final.txt", "loss_gen.tsv", "loss_disc.tsv", "effective.cfg"):
        b1 = open(os.path.join(out1, name), "rb").read()
        b2 = open(os.path.join(out2, name), "rb").read()
        assert b1 == b2, name


@pytest.fixture()
def trained_ckpt(tmp_path):
    cfg_path = write_cfg(tmp_path)
    out = str(tmp_path / "trained")
    assert cli.main(["train", "--config", cfg_path, "--out", out]) == 0
    return os.path.join(out, "ckpt_final.bin")


def test_cmd_eval_runs_and_is_deterministic(tmp_path, trained_ckpt, capsys):
    args = ["eval", "--checkpoint", trained_ckpt, "--dataset", CORPUS_PATH,
            "--n-samples", "16", "--seed", "3"]
    assert cli.main(args) == 0
    out1 = capsys.readouterr().out
    assert cli.main(args) == 0
    out2 = capsys.readouterr().out
    assert out1 == out2
    assert "Validity" in out1


def test_cmd_eval_zero_samples_warns(tmp_path, trained_ckpt, capsys):
    assert cli.main(["eval", "--checkpoint", trained_ckpt, "--dataset", CORPUS_PATH,
                     "--n-samples", "0"]) == 0
    assert "empty generated set" in capsys.readouterr().out


def test_cmd_eval_corrupt_checkpoint_exit3(tmp_path, trained_ckpt, capsys):
    blob = open(trained_ckpt, "rb").read()
    bad = str(tmp_path / "bad.bin")
    open(bad, "wb").write(blob[:-10])
    assert cli.main(["eval", "--checkpoint", bad, "--dataset", CORPUS_PATH]) == 3
    assert "CRC" in capsys.readouterr().err or True


def test_cmd_dump_samples(tmp_path, trained_ckpt):
    out = str(tmp_path / "samples.smi")
    assert cli.main(["dump-samples", "--checkpoint", trained_ckpt, "--n", "10",
                     "--seed", "1", "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert len(lines) == 10
    for line in lines:
        if not line.endswith("# invalid"):
            smiles.parse(line.strip())
    out2 = str(tmp_path / "samples2.smi")
    assert cli.main(["dump-samples", "--checkpoint", trained_ckpt, "--n", "10",
                     "--seed", "1", "--out", out2]) == 0
    assert open(out).read() == open(out2).read()


def test_cmd_sweep_writes_combined_table(tmp_path):
    cfg_path = write_cfg(
        tmp_path,
        TINY.replace("rounds = 2", "rounds = 1") + "sweep_axis = num_clients\nsweep_values = 1;2\n",
    )
    out = str(tmp_path / "sweep")
    assert cli.main(["sweep", "--config", cfg_path, "--out", out]) == 0
    table = open(os.path.join(out, "sweep.txt")).read()
    lines = table.splitlines()
    assert lines[0] == " | ".join(
        ["Datasets", "Generator Dimension", "Discriminator Dimension", "Number of Clients",
         "QED", "Diversity", "Validity", "Uniqueness", "Novelty", "LogP", "Similarity"]
    )
    assert len(lines) == 4  # header + separator + 2 rows
    rows = json.loads(open(os.path.join(out, "sweep.json")).read())
    assert [r["Number of Clients"] for r in rows] == ["1", "2"]


def test_cmd_sweep_single_value_exit2(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, TINY + "sweep_axis = dropout\nsweep_values = 0.5\n")
    assert cli.main(["sweep", "--config", cfg_path, "--out", str(tmp_path / "s")]) == 2


def test_cmd_sweep_dropout_has_extra_column(tmp_path):
    cfg_path = write_cfg(
        tmp_path,
        TINY.replace("rounds = 2", "rounds = 1") + "sweep_axis = dropout\nsweep_values = 0.25;0.5\n",
    )
    out = str(tmp_path / "sweepd")
    assert cli.main(["sweep", "--config", cfg_path, "--out", out]) == 0
    header = open(os.path.join(out, "sweep.txt")).read().splitlines()[0]
    assert header.endswith("Dropout")


def test_cmd_train_interval_checkpoints_and_reports(tmp_path):
    cfg_path = write_cfg(
        tmp_path,
        TINY + "checkpoint_interval = 1\neval_interval = 1\n",
    )
    out = str(tmp_path / "run")
    assert cli.main(["train", "--config", cfg_path, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "ckpt_round_0001.bin"))
    assert os.path.exists(os.path.join(out, "report_round_0001.json"))
    assert os.path.exists(os.path.join(out, "ckpt_final.bin"))
    interim = checkpoint.load_arrays(os.path.join(out, "ckpt_round_0001.bin"))
    gen_model, _ = gan.models_from_arrays(interim)
    assert gen_model.layer_dims == [8]


def test_atomic_write(tmp_path):
    target = tmp_path / "file.txt"
    cli.atomic_write_text(str(target), "hello\n")
    assert target.read_text() == "hello\n"
    assert not os.path.exists(str(target) + ".tmp")
