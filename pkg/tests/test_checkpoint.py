import numpy as np
import pytest

from fedmolgan import checkpoint, gan


def test_array_roundtrip(tmp_path):
    path = str(tmp_path / "x.bin")
    named = {
        "a": np.arange(6, dtype=np.float32).reshape(2, 3),
        "b/with/slash": np.array([1.5], dtype=np.float32),
        "scalar": np.float32(2.0),
    }
    checkpoint.save_arrays(path, named)
    back = checkpoint.load_arrays(path)
    assert list(back) == list(named)
    for key in named:
        assert np.array_equal(back[key], np.asarray(named[key], dtype=np.float32))


def test_header_magic(tmp_path):
    path = str(tmp_path / "x.bin")
    checkpoint.save_arrays(path, {"a": np.zeros(3, dtype=np.float32)})
    blob = open(path, "rb").read()
    assert blob.startswith(b"GGFCKPT v1\n")


def test_crc_corruption_detected(tmp_path):
    path = str(tmp_path / "x.bin")
    checkpoint.save_arrays(path, {"a": np.arange(8, dtype=np.float32)})
    blob = bytearray(open(path, "rb").read())
    blob[len(blob) // 2] ^= 0xFF
    open(path, "wb").write(blob)
    with pytest.raises(checkpoint.CorruptCheckpoint):
        checkpoint.load_arrays(path)


def test_truncation_detected(tmp_path):
    path = str(tmp_path / "x.bin")
    checkpoint.save_arrays(path, {"a": np.arange(8, dtype=np.float32)})
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[: len(blob) - 9])
    with pytest.raises(checkpoint.CorruptCheckpoint):
        checkpoint.load_arrays(path)


def test_rejects_tab_in_name(tmp_path):
    with pytest.raises(ValueError):
        checkpoint.save_arrays(str(tmp_path / "x.bin"), {"a\tb": np.zeros(1, dtype=np.float32)})


def test_model_roundtrip_with_architecture_inference(tmp_path):
    rng = np.random.default_rng(0)
    gen = gan.GeneratorModel([8, 12], rng, noise_dim=4, n_max=6, dropout_ratio=0.25)
    disc = gan.DiscriminatorModel([5, 6], 5, [6, 1], rng, dropout_ratio=0.5)
    path = str(tmp_path / "m.bin")
    gan.save_models(path, gen, disc)
    gen2, disc2 = gan.load_models(path)
    assert gen2.layer_dims == [8, 12]
    assert gen2.noise_dim == 4 and gen2.n_max == 6
    assert gen2.dropout_ratio == 0.25
    assert disc2.conv_dims == [5, 6] and disc2.reduce_dim == 5 and disc2.head_dims == [6, 1]
    for (_, a), (_, b) in zip(gen.param_items(), gen2.param_items()):
        assert np.array_equal(a.data, b.data)
    for (_, a), (_, b) in zip(disc.param_items(), disc2.param_items()):
        assert np.array_equal(a.data, b.data)


def test_models_from_arrays_missing_meta():
    with pytest.raises(gan.ArchitectureMismatch):
        gan.models_from_arrays({"gen/fc0.w": np.zeros((2, 2), dtype=np.float32)})
