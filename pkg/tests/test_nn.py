import numpy as np
import pytest

from equihg import tensor as T
from equihg.model import ModelConfig, build_model
from equihg.nn import (
    AdamState,
    CheckpointError,
    Linear,
    Mlp,
    adam_step,
    load_checkpoint,
    mae_metric,
    mse_loss,
    save_checkpoint,
)
from equihg.tensor import Tensor, grad_check


def _param(value, grad):
    p = Tensor(np.asarray(value, dtype=float), requires_grad=True)
    p.grad = np.asarray(grad, dtype=float)
    return p


# ---------------------------------------------------------------- init


def test_linear_init_bound_and_zero_bias():
    for seed in range(20):
        lin = Linear(4, 4, np.random.default_rng(seed))
        assert np.all(np.abs(lin.weight.data) <= 0.5)
        np.testing.assert_array_equal(lin.bias.data, np.zeros(4))


def test_linear_init_uses_fan_in():
    lin = Linear(256, 8, np.random.default_rng(0))
    assert lin.weight.shape == (8, 256)
    assert np.abs(lin.weight.data).max() <= 1 / 16
    assert np.abs(lin.weight.data).max() > 0.9 / 16


def test_init_is_deterministic_in_seed():
    a = build_model(ModelConfig(hidden=16, seed=3)).parameters()
    b = build_model(ModelConfig(hidden=16, seed=3)).parameters()
    c = build_model(ModelConfig(hidden=16, seed=4)).parameters()
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert any(not np.array_equal(a[k].data, c[k].data) for k in a)


def test_linear_rejects_empty_dims():
    with pytest.raises(ValueError):
        Linear(0, 3, np.random.default_rng(0))


def test_mlp_dims_chain_and_no_final_activation():
    mlp = Mlp([3, 5, 2], np.random.default_rng(0), "relu")
    assert [(l.fan_in, l.fan_out) for l in mlp.layers] == [(3, 5), (5, 2)]
    x = Tensor(np.random.default_rng(1).normal(size=(7, 3)))
    out = mlp(x).data
    assert out.shape == (7, 2)
    # a final ReLU would make every output non-negative; a linear last layer does not
    assert (out < 0).any()


@pytest.mark.parametrize("activation", ["silu", "relu"])
def test_mlp_grad_check_20_points(activation):
    mlp = Mlp([3, 6, 6, 2], np.random.default_rng(0), activation)
    rng = np.random.default_rng(1)
    worst = max(grad_check(lambda x: T.sum(T.square(mlp(x))), Tensor(rng.normal(size=(4, 3))), 1e-5) for _ in range(20))
    assert worst <= 1e-6


def test_mlp_parameter_grad_check():
    mlp = Mlp([3, 4, 1], np.random.default_rng(2))
    x = Tensor(np.random.default_rng(3).normal(size=(5, 3)))
    params = list(mlp.parameters().values())
    assert grad_check(lambda _: T.sum(T.silu(mlp(x))), params, 1e-5) <= 1e-6


def test_named_parameters_recurse_into_lists():
    mlp = Mlp([2, 3, 1], np.random.default_rng(0))
    assert list(mlp.parameters()) == ["layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"]
    assert mlp.num_parameters() == 2 * 3 + 3 + 3 + 1


# ---------------------------------------------------------------- losses


def test_mse_examples():
    assert mse_loss([1.0, 2.0], [1.0, 2.0]).item() == 0.0
    assert mse_loss([0.0], [2.0]).item() == 4.0


def test_mse_gradient():
    pred = Tensor([3.0], requires_grad=True)
    T.backward(mse_loss(pred, Tensor([1.0])))
    assert pred.grad[0] == 4.0


def test_mse_nonnegative_and_zero_iff_equal():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.integers(-5, 5, size=6).astype(float)
        b = rng.integers(-5, 5, size=6).astype(float)
        value = mse_loss(a, b).item()
        assert value >= 0
        assert (value == 0) == np.array_equal(a, b)


def test_mse_length_mismatch():
    with pytest.raises(ValueError):
        mse_loss([1.0, 2.0], [1.0])


def test_mae_examples():
    assert mae_metric([1, 3], [2, 1]) == 1.5
    assert mae_metric([4.0, 5.0], [4.0, 5.0]) == 0.0
    assert mae_metric([-1, -3], [-2, -1]) == mae_metric([1, 3], [2, 1])
    with pytest.raises(ValueError):
        mae_metric([1, 2], [1])


# ---------------------------------------------------------------- Adam


def test_adam_first_step_example():
    w = _param([1.0], [2.0])
    adam_step({"w": w}, AdamState(lr=1e-4))
    assert w.data[0] == pytest.approx(1 - 1e-4 * (2 / (2 + 1e-8)), abs=1e-15)


def test_adam_matches_direct_recurrence():
    rng = np.random.default_rng(0)
    w0 = rng.normal(size=5)
    grads = rng.normal(size=(6, 5))
    w = Tensor(w0.copy(), requires_grad=True)
    state = AdamState(lr=1e-3)
    m = np.zeros(5)
    v = np.zeros(5)
    ref = w0.copy()
    for t, g in enumerate(grads, start=1):
        w.grad = g
        adam_step({"w": w}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(w.data, ref, rtol=0, atol=1e-15)
    assert state.t == 6


def test_adam_zero_grad_leaves_weight():
    w = _param([1.5], [0.0])
    adam_step({"w": w}, AdamState())
    assert w.data[0] == 1.5


def test_adam_moves_only_parameters_with_gradient():
    a = _param([1.0], [0.5])
    b = _param([2.0], [0.0])
    adam_step({"a": a, "b": b}, AdamState())
    assert a.data[0] != 1.0
    assert b.data[0] == 2.0


def test_adam_lr_zero_is_identity():
    rng = np.random.default_rng(1)
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    before = w.data.copy()
    state = AdamState(lr=0.0)
    for _ in range(5):
        w.grad = rng.normal(size=(3, 3))
        adam_step({"w": w}, state)
    assert np.array_equal(w.data, before)


def test_adam_rejects_non_finite_gradient_without_updating():
    a = _param([1.0], [1.0])
    b = _param([1.0], [np.nan])
    state = AdamState()
    with pytest.raises(FloatingPointError, match="b"):
        adam_step({"a": a, "b": b}, state)
    assert a.data[0] == 1.0 and state.t == 0 and not state.m


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a.weight": Tensor(rng.normal(size=(3, 4))), "b": Tensor(rng.normal(size=2)), "s": Tensor(np.array(np.pi))}
    state = AdamState(lr=3e-4, t=7, m={"b": rng.normal(size=2)}, v={"b": rng.random(2)})
    path = save_checkpoint(tmp_path / "x.eqhg", params, {"kind": "test", "n": 1}, state)
    meta, arrays, back = load_checkpoint(path)
    assert meta == {"kind": "test", "n": 1}
    assert arrays.keys() == params.keys()
    for k in params:
        assert arrays[k].shape == params[k].shape
        assert np.array_equal(arrays[k], params[k].data)
    assert (back.t, back.lr) == (7, 3e-4)
    assert np.array_equal(back.m["b"], state.m["b"]) and np.array_equal(back.v["b"], state.v["b"])


def test_checkpoint_rejects_foreign_and_truncated_files(tmp_path):
    bad = tmp_path / "bad.eqhg"
    bad.write_bytes(b"NOPE")
    with pytest.raises(CheckpointError, match="not an EQHG1"):
        load_checkpoint(bad)
    good = save_checkpoint(tmp_path / "g.eqhg", {"w": Tensor(np.ones(4))})
    bad.write_bytes(good.read_bytes()[:-5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(bad)
