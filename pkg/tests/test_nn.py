import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fginfer.layout import Segments
from fginfer.nn import autodiff as ad
from fginfer.nn.gradcheck import gradcheck
from fginfer.nn.layers import MLP, GRUCell, graph_norm, gru_cell, mlp_forward
from fginfer.nn.optim import Adam, adam_step
from fginfer.nn.params import ParamStore

TOL = 1e-4


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.Tensor(0.0)).item() == 0.5


def test_logsumexp_derivative():
    x = ad.Tensor(np.array([0.0, 0.0]), requires_grad=True)
    ad.sum(ad.segment_logsumexp(x, Segments(np.zeros(2, dtype=np.int64), 1))).backward()
    assert x.grad[0] == pytest.approx(0.5)


def test_backward_accumulates_shared_nodes():
    x = ad.Tensor(np.array(3.0), requires_grad=True)
    y = x * x + x
    y.backward()
    assert x.grad == pytest.approx(7.0)


def test_no_grad_builds_no_tape():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.exp(x) * 2
    assert not y.requires_grad


def test_deep_chain_does_not_recurse():
    x = ad.Tensor(np.array(1.0), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 0.0
    y.backward()
    assert x.grad == 1.0


SEG = Segments(np.array([2, 0, 1, 0, 2, 2]), 3)

# name -> (input shapes, function of the parameter tensors)
OPS = {
    "add": ([(3, 2), (2,)], lambda a, b: a + b),
    "sub": ([(3, 2), (3, 1)], lambda a, b: a - b),
    "mul": ([(3, 2), (3, 2)], lambda a, b: a * b),
    "div": ([(3, 2), (3, 2)], lambda a, b: a / (ad.exp(b) + 1.0)),
    "neg": ([(4,)], lambda a: -a),
    "exp": ([(4,)], ad.exp),
    "log": ([(4,)], lambda a: ad.log(ad.exp(a) + 0.5)),
    "sqrt": ([(4,)], lambda a: ad.sqrt(a * a + 1.0)),
    "abs": ([(4,)], ad.abs),
    "sigmoid": ([(4,)], ad.sigmoid),
    "tanh": ([(4,)], ad.tanh),
    "relu": ([(4,)], ad.relu),
    "leaky_relu": ([(4,)], ad.leaky_relu),
    "matmul": ([(3, 4), (4, 2)], ad.matmul),
    "matmul_vec_left": ([(4,), (4, 2)], ad.matmul),
    "matmul_vec_right": ([(3, 4), (4,)], ad.matmul),
    "reshape": ([(2, 3)], lambda a: ad.reshape(a, (3, 2)) * np.arange(6.0).reshape(3, 2)),
    "index": ([(4, 3)], lambda a: a[1:3, ::2]),
    "concat": ([(2, 3), (1, 3)], lambda a, b: ad.concat([a, b], axis=0)),
    "stack_columns": ([(4,), (4,)], lambda a, b: ad.stack_columns([a, b])),
    "sum": ([(3, 4)], lambda a: ad.sum(a, axis=1)),
    "mean": ([(3, 4)], lambda a: ad.mean(a, axis=0)),
    "softmax": ([(3, 4)], lambda a: ad.softmax(a, axis=1)),
    "log_softmax": ([(3, 4)], lambda a: ad.log_softmax(a, axis=1)),
    "logsumexp_except": ([(2, 3, 2)], lambda a: ad.logsumexp_except(a, 1)),
    "max_except": ([(2, 3, 2)], lambda a: ad.max_except(a, 2)),
    "tensor_sum": ([(2,), (3,), (2,)], lambda a, b, c: ad.tensor_sum([a, b, c])),
    "gather": ([(3,)], lambda a: ad.gather(a, np.array([0, 2, 2, 1, 0]))),
    "segment_sum": ([(6,)], lambda a: ad.segment_sum(a, SEG)),
    "segment_logsumexp": ([(6,)], lambda a: ad.segment_logsumexp(a, SEG)),
    "segment_max": ([(6,)], lambda a: ad.segment_max(a, SEG)),
}


@pytest.mark.parametrize("name", sorted(OPS))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_op_gradients(name, seed):
    shapes, fn = OPS[name]
    rng = np.random.default_rng(seed)
    store = ParamStore()
    ts = [store.add(f"p{k}", rng.standard_normal(s)) for k, s in enumerate(shapes)]
    probe = rng.standard_normal(np.shape(fn(*ts).data))

    def f(_):
        return ad.sum(fn(*ts) * probe)

    err, info = gradcheck(f, store, seed=seed, return_details=True)
    assert err < TOL
    assert info["checked"] > 0


def test_gradcheck_linear_is_exact():
    store = ParamStore()
    w = store.add("w", np.array([1.0, -2.0, 0.5]))
    c = np.array([3.0, 1.0, -1.0])
    assert gradcheck(lambda _: ad.sum(w * c), store) < 1e-10


def test_gradcheck_catches_a_wrong_gradient():
    store = ParamStore()
    w = store.add("w", np.array([0.3, 0.7]))

    def broken(_):
        # detach one factor so the recorded gradient is half the true one
        return ad.sum(w * ad.Tensor(w.data))
    assert gradcheck(broken, store) > 0.1


def test_mlp_zero_and_identity():
    store = ParamStore()
    mlp = MLP(store, "m", [3, 8, 2])
    assert np.array_equal(mlp(np.random.default_rng(0).standard_normal((5, 3))).data, np.zeros((5, 2)))
    store2 = ParamStore()
    ident = MLP(store2, "id", [3, 3], activation="linear")
    store2["id.W0"].data = np.eye(3)
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(ident(x).data, x)
    np.testing.assert_array_equal(mlp_forward(store2, "id", x, [3, 3], "linear").data, x)


def test_mlp_rejects_bad_configuration():
    with pytest.raises(ValueError):
        MLP(ParamStore(), "m", [3])
    with pytest.raises(ValueError):
        MLP(ParamStore(), "m", [3, 2], activation="swish")
    with pytest.raises(ValueError):
        MLP(ParamStore(), "m", [3, 2])(np.zeros((1, 4)))


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("norm", [False, True])
def test_mlp_gradients(seed, norm):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    mlp = MLP(store, "m", [4, 6, 6, 2], activation="tanh", graph_norm=norm, rng=rng)
    x = rng.standard_normal((7, 4))
    groups = Segments(np.array([0, 0, 1, 1, 1, 0, 1]), 2)
    probe = rng.standard_normal((7, 2))
    assert gradcheck(lambda _: ad.sum(mlp(x, groups) * probe), store) < TOL


def test_gru_zero_params_and_saturation():
    store = ParamStore()
    cell = GRUCell(store, "g", 2, 3)
    out = cell(np.zeros((4, 3)), np.ones((4, 2)))
    assert np.array_equal(out.data, np.zeros((4, 3)))
    # with the update gate saturated open, the hidden state passes through unchanged
    store["g.b_in"].data[3:6] = 50.0
    h = np.random.default_rng(0).standard_normal((4, 3))
    np.testing.assert_allclose(cell(h, np.ones((4, 2))).data, h, atol=1e-12)
    np.testing.assert_allclose(gru_cell(store, "g", h, np.ones((4, 2))).data, h, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gru_gradients(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    cell = GRUCell(store, "g", 3, 4, rng=rng)
    h, x = rng.standard_normal((5, 4)), rng.standard_normal((5, 3))
    probe = rng.standard_normal((5, 4))
    assert gradcheck(lambda _: ad.sum(cell(cell(h, x), x) * probe), store) < TOL


def test_graph_norm_examples():
    np.testing.assert_array_equal(graph_norm(np.full((4, 2), 3.0)).data, np.zeros((4, 2)))
    np.testing.assert_array_equal(graph_norm(np.array([[1.0, -2.0]])).data, np.zeros((1, 2)))
    x = np.random.default_rng(0).standard_normal((6, 3))
    groups = Segments(np.array([0, 0, 0, 1, 1, 1]), 2)
    out = graph_norm(x, groups).data
    np.testing.assert_allclose(out[:3].mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(out[3:].std(axis=0), 1, atol=1e-3)
    with pytest.raises(ValueError):
        graph_norm(np.zeros(3))


def test_adam_zero_gradient_leaves_params():
    store = ParamStore()
    w = store.add("w", np.array([1.0, 2.0]))
    store.zero_grad()
    w.grad = np.zeros(2)
    adam_step(store, lr=0.1)
    np.testing.assert_array_equal(w.data, [1.0, 2.0])


def test_adam_first_step_has_size_lr():
    store = ParamStore()
    w = store.add("w", np.array([1.0, -1.0]))
    w.grad = np.array([5.0, -0.01])
    Adam(store, lr=0.01).step()
    np.testing.assert_allclose(w.data, [0.99, -0.99], rtol=1e-6)


def test_adam_minimises_quadratic():
    store = ParamStore()
    w = store.add("w", np.array([1.0]))
    opt = Adam(store, lr=0.1)
    for _ in range(200):
        store.zero_grad()
        ad.sum(w * w).backward()
        opt.step()
    assert abs(w.data[0]) < 0.1


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    store = ParamStore()
    MLP(store, "m", [3, 4, 1], rng=rng)
    store.save(tmp_path / "c.json", "net/")
    doc = json.loads((tmp_path / "c.json").read_text())
    assert set(doc) == {"net/m.W0", "net/m.b0", "net/m.W1", "net/m.b1"}
    assert doc["net/m.W0"]["shape"] == [3, 4]
    other = ParamStore()
    MLP(other, "m", [3, 4, 1])
    other.load(tmp_path / "c.json", "net/")
    np.testing.assert_array_equal(other.flat(), store.flat())
    wrong = ParamStore()
    MLP(wrong, "m", [3, 5, 1])
    with pytest.raises(ValueError):
        wrong.load(tmp_path / "c.json", "net/")
    with pytest.raises(ValueError):
        other.load(tmp_path / "c.json", "other/")


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_softmax_sums_to_one(xs):
    p = ad.softmax(ad.Tensor(np.array(xs)), axis=0).data
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)
