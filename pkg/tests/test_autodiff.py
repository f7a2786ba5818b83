import numpy as np
import pytest

from fedmolgan import autodiff as ad


def tensor_rel_error(fd: np.ndarray, an: np.ndarray) -> float:
    """Per-tensor relative error: worst entry against the tensor's own scale."""
    scale = max(np.abs(fd).max(), np.abs(an).max(), 1e-12)
    return float(np.abs(fd - an).max() / scale)


def finite_diff(loss_fn, params, h):
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros_like(flat, dtype=np.float64)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp = loss_fn()
            flat[j] = orig - h
            lm = loss_fn()
            flat[j] = orig
            g[j] = (lp - lm) / (2 * h)
        grads.append(g.reshape(p.data.shape))
    return grads


def test_tanh_at_zero():
    assert ad.tanh(ad.constant([0.0])).data[0] == 0.0


def test_softmax_uniform():
    out = ad.softmax(ad.constant([[0.0, 0.0, 0.0]])).data
    assert np.allclose(out, 1 / 3, atol=1e-7)
    assert abs(out.sum() - 1) < 1e-6


def test_matmul_identity():
    x = np.random.default_rng(0).standard_normal((4, 4)).astype(np.float32)
    out = ad.matmul(ad.constant(np.eye(4, dtype=np.float32)), ad.constant(x))
    assert np.allclose(out.data, x)


def test_shape_mismatch_message_has_both_shapes():
    with pytest.raises(ad.ShapeMismatch) as err:
        ad.add(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((3, 2))))
    assert "(2, 3)" in str(err.value) and "(3, 2)" in str(err.value)


def test_matmul_shape_error():
    with pytest.raises(ad.ShapeMismatch):
        ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 3))))


def test_backward_simple_square():
    with ad.Tape():
        x = ad.parameter([3.0])
        (g,) = ad.backward(ad.sum_all(ad.square(x)), [x])
    assert np.allclose(g.data, [6.0])


def test_backward_tanh_gradient_at_zero():
    with ad.Tape():
        x = ad.parameter([0.0])
        (g,) = ad.backward(ad.sum_all(ad.tanh(x)), [x])
    assert np.allclose(g.data, [1.0])


def test_backward_requires_scalar():
    with ad.Tape():
        x = ad.parameter([1.0, 2.0])
        y = ad.square(x)
        with pytest.raises(ad.NonScalarOutput):
            ad.backward(y, [x])


def test_backward_unused_leaf_gets_zeros():
    with ad.Tape():
        x = ad.parameter([1.0])
        z = ad.parameter([2.0])
        (gx, gz) = ad.backward(ad.sum_all(ad.square(x)), [x, z])
    assert np.allclose(gz.data, [0.0])


def _small_mlp(rng, dtype):
    w1 = ad.parameter(ad.xavier_uniform(rng, 5, 7, dtype=dtype), dtype=dtype)
    b1 = ad.parameter(np.zeros(7, dtype=dtype), dtype=dtype)
    w2 = ad.parameter(ad.xavier_uniform(rng, 7, 6, dtype=dtype), dtype=dtype)
    b2 = ad.parameter(np.zeros(6, dtype=dtype), dtype=dtype)
    w3 = ad.parameter(ad.xavier_uniform(rng, 6, 1, dtype=dtype), dtype=dtype)
    x = ad.constant(rng.standard_normal((4, 5)).astype(dtype))
    params = [w1, b1, w2, b2, w3]

    def loss():
        h = ad.tanh(ad.add_bias(ad.matmul(x, w1), b1))
        h = ad.sigmoid(ad.add_bias(ad.matmul(h, w2), b2))
        out = ad.matmul(h, w3)
        return ad.mean_all(ad.square(out))

    return params, loss


@pytest.mark.parametrize("dtype,h,tol", [(np.float64, 1e-5, 1e-7), (np.float32, 1e-2, 1e-3)])
def test_three_layer_net_gradcheck(dtype, h, tol):
    rng = np.random.default_rng(42)
    params, loss = _small_mlp(rng, dtype)
    with ad.Tape():
        grads = ad.backward(loss(), params)

    def loss_value():
        with ad.Tape():
            return loss().item()

    fd = finite_diff(loss_value, params, h)
    worst = max(
        tensor_rel_error(f, g.data.astype(np.float64)) for f, g in zip(fd, grads)
    )
    assert worst < tol


def test_second_order_penalty_matches_finite_differences():
    # parameter gradients of gamma*(||grad_x D(x)|| - 1)^2 via double backprop
    rng = np.random.default_rng(3)
    w = ad.parameter(rng.standard_normal((6, 1)), dtype=np.float64)
    x0 = ad.constant(rng.standard_normal((2, 6)))
    gamma = 10.0

    def penalty():
        x = ad.add(x0, ad.scale(x0, 0.0))  # non-leaf copy to differentiate against
        d = ad.sum_all(ad.tanh(ad.matmul(x, w)))
        (gx,) = ad.backward(d, [x], create_graph=True)
        norm = ad.sqrt(ad.add_scalar(ad.sum_last(ad.square(ad.reshape(gx, (1, -1)))), 1e-12))
        return ad.scale(ad.square(ad.add_scalar(norm, -1.0)), gamma)

    with ad.Tape():
        (gw,) = ad.backward(ad.sum_all(penalty()), [w])

    def value():
        with ad.Tape():
            return ad.sum_all(penalty()).item()

    fd = finite_diff(value, [w], 1e-5)
    assert tensor_rel_error(fd[0], gw.data) < 1e-7


def test_l2_norm_value_and_gradient():
    with ad.Tape():
        x = ad.parameter([3.0, 4.0], dtype=np.float64)
        n = ad.l2_norm(x)
        assert abs(n.item() - 5.0) < 1e-12
        (g,) = ad.backward(n, [x])
    assert np.allclose(g.data, [0.6, 0.8])


def test_concat_slice_pad_gradients():
    with ad.Tape():
        a = ad.parameter([[1.0, 2.0]], dtype=np.float64)
        b = ad.parameter([[3.0, 4.0, 5.0]], dtype=np.float64)
        joined = ad.concat([a, b], axis=1)
        assert joined.data.tolist() == [[1.0, 2.0, 3.0, 4.0, 5.0]]
        mid = ad.slice_axis(joined, 1, 1, 4)
        (ga, gb) = ad.backward(ad.sum_all(mid), [a, b])
    assert ga.data.tolist() == [[0.0, 1.0]]
    assert gb.data.tolist() == [[1.0, 1.0, 0.0]]


def test_ops_without_tape_do_not_record():
    x = ad.parameter([1.0])
    y = ad.square(x)
    assert y.node is None


def test_no_grad_blocks_recording():
    with ad.Tape() as tape:
        x = ad.parameter([1.0])
        with ad.no_grad():
            ad.square(x)
        assert not tape.nodes


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_keeps_params():
    p = ad.parameter([1.0, -2.0])
    state = ad.AdamState(lr=0.1)
    ad.adam_step(state, [p], [ad.constant([0.0, 0.0])])
    assert np.allclose(p.data, [1.0, -2.0])


def test_adam_first_step_magnitude_is_lr():
    for g in ([0.5, -3.0], [100.0, -0.25]):
        p = ad.parameter([0.0, 0.0])
        state = ad.AdamState(lr=1e-3)
        ad.adam_step(state, [p], [ad.constant(g)])
        assert np.allclose(np.abs(p.data), 1e-3, rtol=1e-4)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(9)
        p = ad.parameter(rng.standard_normal(8).astype(np.float32))
        state = ad.AdamState(lr=1e-2)
        for _ in range(25):
            g = ad.constant(rng.standard_normal(8).astype(np.float32))
            ad.adam_step(state, [p], [g])
        return p.data.tobytes()

    assert run() == run()


def test_adam_shape_mismatch():
    p = ad.parameter([1.0, 2.0])
    with pytest.raises(ad.ShapeMismatch):
        ad.adam_step(ad.AdamState(), [p], [ad.constant([1.0, 2.0, 3.0])])


def test_adam_lr_decay_schedule():
    state = ad.AdamState(lr=1e-4, lr_decay_interval=1000, lr_decay_factor=100.0)
    assert state.lr_at_epoch(0) == 1e-4
    assert state.lr_at_epoch(999) == 1e-4
    assert np.isclose(state.lr_at_epoch(1000), 1e-6)
    assert np.isclose(state.lr_at_epoch(2500), 1e-8)


# ---------------------------------------------------------------------------
# sampling


def test_gumbel_extreme_logits_pick_argmax():
    rng = np.random.default_rng(0)
    logits = ad.constant(np.tile(np.array([[10.0, -10.0]], dtype=np.float32), (2000, 1)))
    out = ad.gumbel_softmax_sample(logits, 0.7, True, rng)
    # analytic argmax probability is 1/(1+e^-20) ~ 1 - 2e-9
    assert (out.data[:, 0] == 1).mean() >= 0.999


def test_gumbel_high_temperature_near_uniform():
    rng = np.random.default_rng(1)
    logits = ad.constant(np.tile(np.array([[2.0, -1.0, 0.5]], dtype=np.float32), (10_000, 1)))
    out = ad.gumbel_softmax_sample(logits, 100.0, False, rng)
    assert np.abs(out.data.mean(axis=0) - 1 / 3).max() < 0.05


def test_gumbel_hard_rows_one_hot():
    rng = np.random.default_rng(2)
    logits = ad.constant(rng.standard_normal((64, 5)).astype(np.float32))
    out = ad.gumbel_softmax_sample(logits, 1.0, True, rng)
    assert np.array_equal(out.data.sum(axis=-1), np.ones(64, dtype=np.float32))
    assert set(np.unique(out.data)) <= {0.0, 1.0}


def test_gumbel_rejects_bad_temperature():
    with pytest.raises(ad.NonPositiveTemperature):
        ad.gumbel_softmax_sample(ad.constant([[0.0, 1.0]]), 0.0, True, np.random.default_rng(0))


def test_gumbel_straight_through_gradient_equals_soft():
    rng_seed = 13
    logits_arr = np.random.default_rng(3).standard_normal((4, 6))
    w = np.random.default_rng(4).standard_normal((4, 6))
    grads = []
    for hard in (True, False):
        with ad.Tape():
            logits = ad.parameter(logits_arr, dtype=np.float64)
            sample = ad.gumbel_softmax_sample(logits, 0.8, hard, np.random.default_rng(rng_seed))
            (g,) = ad.backward(ad.sum_all(ad.mul(sample, ad.constant(w))), [logits])
            grads.append(g.data)
    assert np.allclose(grads[0], grads[1])


def test_categorical_degenerate_row():
    rng = np.random.default_rng(0)
    probs = ad.constant(np.tile(np.array([[1.0, 0.0, 0.0]], dtype=np.float32), (500, 1)))
    out = ad.categorical_sample(probs, rng)
    assert np.all(out.data[:, 0] == 1)


def test_categorical_frequency_convergence():
    rng = np.random.default_rng(7)
    probs = ad.constant(np.tile(np.array([[0.5, 0.5]], dtype=np.float32), (100_000, 1)))
    out = ad.categorical_sample(probs, rng)
    assert abs(out.data[:, 0].mean() - 0.5) < 0.01


def test_categorical_rows_one_hot():
    rng = np.random.default_rng(8)
    p = rng.random((32, 4))
    p /= p.sum(axis=1, keepdims=True)
    out = ad.categorical_sample(ad.constant(p.astype(np.float32)), rng)
    assert np.array_equal(out.data.sum(axis=-1), np.ones(32, dtype=np.float32))


def test_categorical_rejects_non_distribution():
    with pytest.raises(ad.NotADistribution):
        ad.categorical_sample(ad.constant([[0.7, 0.7]]), np.random.default_rng(0))


def test_dropout_eval_mode_identity():
    x = ad.constant(np.ones((8, 8), dtype=np.float32))
    assert ad.dropout(x, 0.5, training=False) is x


def test_dropout_train_mode_masks_and_scales():
    rng = np.random.default_rng(5)
    x = ad.constant(np.ones((200, 200), dtype=np.float32))
    out = ad.dropout(x, 0.25, rng=rng, training=True)
    zeros = (out.data == 0).mean()
    kept = out.data[out.data != 0]
    assert abs(zeros - 0.25) < 0.02
    assert np.allclose(kept, 1 / 0.75, atol=1e-6)


def test_dropout_explicit_mask():
    x = ad.constant(np.ones(4, dtype=np.float32))
    out = ad.dropout(x, 0.5, training=True, mask=np.array([1, 0, 1, 0], dtype=np.float32))
    assert np.allclose(out.data, [2.0, 0.0, 2.0, 0.0])


def test_debug_checks_flag_raises_on_nonfinite(monkeypatch):
    monkeypatch.setattr(ad, "DEBUG_CHECKS", True)
    with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
        ad.log(ad.constant([-1.0]))
