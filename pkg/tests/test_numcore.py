import numpy as np
import pytest

from oracles import central_difference
from rephrasekit import numcore as nt
from rephrasekit.kernels import get_backend
from rephrasekit.numcore import (
    Adam,
    AdamState,
    CheckpointError,
    GradientError,
    OptimError,
    Parameter,
    ShapeError,
    Tensor,
    adam_step,
    clip_global_norm,
    config_hash,
    grad_check,
    load_checkpoint,
    save_checkpoint,
)
from rephrasekit.numcore.tensor import _record, no_grad


def _param(name, shape, seed):
    rng = np.random.default_rng(seed)
    return Parameter(rng.normal(size=shape) * 0.5, name=name)


def _numeric_check(build_loss, params, tol=5e-6):
    """Compare backward grads against central differences on every coord."""
    loss = build_loss()
    loss.backward()
    analytic = {p.name: p.grad.copy() for p in params}
    for p in params:
        p.grad = None

    def f(_):
        with no_grad():
            return float(build_loss().data)

    for p in params:
        num = central_difference(f, p.data, eps=1e-6)
        got = analytic[p.name]
        assert np.allclose(got, num, atol=tol, rtol=1e-4), (
            p.name, np.abs(got - num).max())


# -- op gradients -------------------------------------------------------------


def test_arith_broadcast_grads():
    a = _param("a", (2, 3), 0)
    b = _param("b", (3,), 1)
    c = _param("c", (2, 1), 2)

    def loss():
        return ((a + b) * c + a / 2.0 - b * 3.0).sum() + (a**2.0).sum()

    _numeric_check(loss, [a, b, c])


def test_matmul_grads_batched_and_shared_weight():
    x = _param("x", (2, 3, 4), 3)
    w = _param("w", (4, 5), 4)
    y = _param("y", (2, 5, 2), 5)

    def loss():
        return nt.matmul(nt.matmul(x, w), y).sum()

    _numeric_check(loss, [x, w, y])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        nt.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_activation_and_reduction_grads():
    x = _param("x", (3, 4), 6)

    def loss():
        h = nt.tanh(nt.sigmoid(x)) + nt.relu(x) + nt.exp(x * 0.1)
        return nt.mean(h * h) + nt.logsumexp(x, axis=-1).sum() + nt.softmax(
            x, axis=-1
        ).sum()

    _numeric_check(loss, [x])


def test_shape_op_grads():
    x = _param("x", (2, 6), 7)

    def loss():
        r = nt.reshape(x, (3, 4))
        t = nt.transpose(r, (1, 0))
        c = nt.concat([t, t], axis=0)
        n = nt.narrow(c, axis=0, start=1, length=5)
        return (n * n).sum()

    _numeric_check(loss, [x])


def test_embedding_gather_scatter_grads():
    emb = _param("emb", (7, 4), 8)
    base = _param("base", (3, 5), 9)
    upd = _param("upd", (3, 2), 10)
    ids = np.array([[1, 3], [0, 0], [4, 2]])
    g_ids = np.array([1, 0, 4])

    def loss():
        e = nt.embedding(emb, np.array([[0, 2, 2], [5, 1, 6]]))
        s = nt.scatter_add_last(base, ids, upd)
        g = nt.gather_last(s, g_ids)
        return (e * e).sum() + (s * s).sum() + g.sum()

    _numeric_check(loss, [emb, base, upd])


def test_cross_entropy_matches_manual_log_softmax():
    logits = _param("l", (2, 3, 5), 11)
    ids = np.array([[0, 4, 2], [1, 1, 3]])

    def loss():
        return nt.cross_entropy(logits, ids).sum()

    _numeric_check(loss, [logits])
    ce = nt.cross_entropy(logits, ids).data
    manual = -np.log(
        np.take_along_axis(
            np.exp(logits.data)
            / np.exp(logits.data).sum(-1, keepdims=True),
            ids[..., None],
            axis=-1,
        )[..., 0]
    )
    assert np.allclose(ce, manual, atol=1e-12)


def test_log_floor_clamps_and_zeroes_gradient():
    x = Parameter(np.array([0.5, 0.0]), name="x")
    y = nt.log(x)
    assert y.data[1] == pytest.approx(np.log(1e-30))
    y.sum().backward()
    assert x.grad[0] == pytest.approx(2.0)
    assert x.grad[1] == 0.0


@pytest.mark.parametrize("backend", ["numpy", "compiled"])
def test_lstm_gates_grads_both_backends(backend, monkeypatch):
    import rephrasekit.numcore.tensor as tmod

    mod = get_backend(backend)
    monkeypatch.setattr(tmod.kernels, "lstm_gates_forward", mod.lstm_gates_forward)
    monkeypatch.setattr(tmod.kernels, "lstm_gates_backward", mod.lstm_gates_backward)
    pre = _param("pre", (3, 8), 12)
    c0 = _param("c0", (3, 2), 13)

    def loss():
        h, c = nt.lstm_gates(pre, c0)
        return (h * h).sum() + (c * nt.sigmoid(c)).sum()

    _numeric_check(loss, [pre, c0])


def test_lstm_gates_backends_bitwise_agree():
    rng = np.random.default_rng(0)
    pre = rng.normal(size=(4, 16))
    c0 = rng.normal(size=(4, 4))
    outs = {}
    for name in ("numpy", "compiled"):
        mod = get_backend(name)
        h, c, gates = mod.lstm_gates_forward(pre, c0)
        dpre, dc = mod.lstm_gates_backward(
            np.ones_like(c0), np.ones_like(c0) * 0.5, gates, c0, c
        )
        outs[name] = (h, c, gates, dpre, dc)
    for a, b in zip(outs["numpy"], outs["compiled"]):
        assert np.allclose(a, b, atol=1e-12)


def test_dropout_grad_with_frozen_mask():
    x = _param("x", (4, 4), 14)

    class FixedRng:
        def __init__(self):
            self._rng = None

        def random(self, shape):
            return np.random.default_rng(99).random(shape)

    rng = FixedRng()

    def loss():
        return (nt.dropout(x, 0.5, rng) ** 2.0).sum()

    _numeric_check(loss, [x])


# -- graph mechanics -----------------------------------------------------------


def test_diamond_graph_accumulates_grads():
    x = Parameter(np.array([2.0]), name="x")
    s = x * x        # reused twice below
    loss = (s + s).sum()
    loss.backward()
    assert x.grad[0] == pytest.approx(8.0)


def test_multi_output_node_partial_use():
    pre = _param("pre", (2, 8), 15)
    c0 = _param("c0", (2, 2), 16)
    h, c = nt.lstm_gates(pre, c0)
    h.sum().backward()  # c unused; its grad contribution is zero
    assert pre.grad is not None and c0.grad is not None


def test_no_grad_suppresses_tape():
    x = Parameter(np.ones(3), name="x")
    with no_grad():
        y = x * 2.0
    assert y.node is None
    assert not y.requires_grad
    y.sum().backward()
    assert x.grad is None


def test_backward_requires_scalar_and_finite():
    x = Parameter(np.ones((2, 2)), name="x")
    with pytest.raises(GradientError):
        (x * 2.0).backward()
    y = Parameter(np.array([np.inf]), name="y")
    with pytest.raises(GradientError):
        (y * 2.0).sum().backward()


def test_grad_accumulates_across_backward_calls():
    x = Parameter(np.array([3.0]), name="x")
    (x * 2.0).sum().backward()
    (x * 2.0).sum().backward()
    assert x.grad[0] == pytest.approx(4.0)


# -- optimizer ------------------------------------------------------------------


def test_adam_first_step_hand_value():
    p = Parameter(np.zeros(3), name="p")
    p.grad = np.ones(3)
    state = AdamState(lr=0.1)
    adam_step([p], state)
    # bias-corrected first step moves by lr * g / (|g| + eps-ish)
    want = -0.1 * 1.0 / (1.0 + 1e-8)
    assert np.allclose(p.data, want, atol=1e-12)
    assert state.step == 1


def test_adam_decoupled_weight_decay():
    p = Parameter(np.full(2, 10.0), name="p")
    p.grad = np.zeros(2)
    state = AdamState(lr=0.1, weight_decay=0.01)
    adam_step([p], state)
    assert np.allclose(p.data, 10.0 - 0.1 * 0.01 * 10.0)


def test_adam_wrapper_clears_grads_and_rejects_duplicates():
    p = Parameter(np.zeros(2), name="p")
    opt = Adam([p], lr=0.1)
    p.grad = np.ones(2)
    opt.step()
    assert p.grad is None
    q = Parameter(np.zeros(2), name="p")
    with pytest.raises(OptimError):
        Adam([p, q], lr=0.1)


def test_adam_nonfinite_grad_names_parameter():
    p = Parameter(np.zeros(2), name="enc.w")
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(OptimError, match="enc.w"):
        adam_step([p], AdamState(lr=0.1))


def test_clip_global_norm():
    a = Parameter(np.zeros(1), name="a")
    b = Parameter(np.zeros(1), name="b")
    a.grad, b.grad = np.array([3.0]), np.array([4.0])
    norm = clip_global_norm([a, b], 1.0)
    assert norm == pytest.approx(5.0)
    assert a.grad[0] == pytest.approx(0.6)
    assert b.grad[0] == pytest.approx(0.8)
    norm2 = clip_global_norm([a, b], 10.0)
    assert norm2 == pytest.approx(1.0)
    assert a.grad[0] == pytest.approx(0.6)  # under the cap: untouched


# -- grad_check -----------------------------------------------------------------


def test_grad_check_passes_clean_function():
    w = _param("w", (3, 3), 17)
    b = _param("b", (3,), 18)

    def loss():
        return (nt.tanh(nt.matmul(w, w) + b) ** 2.0).sum()

    err = grad_check(loss, [w, b], seed=0)
    assert err < 1e-6


def test_grad_check_detects_planted_backward_bug():
    w = _param("w", (3,), 19)

    def buggy_double(t):
        out = t.data * 2.0

        def backward(g):
            return g * 3.0  # wrong: claims d/dx(2x) = 3

        return _record("buggy_double", [t], [out], backward)

    def loss():
        return buggy_double(w).sum()

    err = grad_check(loss, [w], seed=0)
    assert err > 1e-2


def test_grad_check_rejects_nonfinite():
    w = Parameter(np.array([1e308]), name="w")

    def loss():
        return (w * w).sum() * 1e308

    with np.errstate(over="ignore"), pytest.raises(GradientError):
        grad_check(loss, [w], seed=0)


# -- checkpoints ------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "m.rkcp"
    tensors = {
        "w": np.arange(6, dtype=np.float64).reshape(2, 3),
        "ids": np.array([1, 2, 3], dtype=np.int64),
    }
    config = {"arch": "toy", "width": 3}
    extra = {"note": "hello"}
    save_checkpoint(path, tensors, config, extra)
    back, manifest = load_checkpoint(path)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])
        assert back[k].dtype == tensors[k].dtype
    assert manifest["config"] == config
    assert manifest["extra"] == extra
    assert manifest["config_hash"] == config_hash(config)


def test_config_hash_is_key_order_invariant():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "m.rkcp"
    save_checkpoint(path, {"w": np.ones(2)}, {"arch": "toy"}, {})
    blob = path.read_bytes()
    (tmp_path / "bad_magic.rkcp").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad_magic.rkcp")
    (tmp_path / "trunc.rkcp").write_bytes(blob[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "trunc.rkcp")
