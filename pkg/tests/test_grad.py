import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbfollow import SetVec, build_kb, follow_reified, reify
from kbfollow.autodiff import (
    ModelParams,
    Tape,
    adam_step,
    backward,
    follow_backward,
    load_checkpoint,
    make_follower,
    save_checkpoint,
    sgd_step,
)
from kbfollow.errors import NonScalarLoss, ShapeMismatch, StrategyUnavailable
from kbfollow.shard import partition_reified
from kbfollow.tasks.grid import GridSpec, gen_grid
from kbfollow.tasks.models import ChainModel, Vocab
from kbfollow.tasks.questions import gen_chain_questions

import kbutil

GRID4 = gen_grid(GridSpec(4))
RKB4 = reify(GRID4)


# ---------------------------------------------------------------- follow adjoints


def _check_reified(X, R, rkb, G, tol=1e-4):
    dX, dR = follow_backward("reified", X, R, rkb, G)

    def loss():
        return float((follow_reified(X, R, rkb) * G).sum())

    assert kbutil.rel_err(dX, kbutil.central_diff(loss, X)).max() < tol
    assert kbutil.rel_err(dR, kbutil.central_diff(loss, R)).max() < tol


def test_reified_finite_differences_grid():
    rng = np.random.default_rng(0)
    X, R = rng.random((2, 16)), rng.random((2, 4))
    _check_reified(X, R, RKB4, rng.standard_normal((2, 16)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reified_finite_differences_random_kb(seed):
    rng = np.random.default_rng(seed)
    kb = kbutil.random_kb(rng, max_entities=20, max_relations=4)
    rkb = reify(kb)
    b = int(rng.integers(1, 4))
    X, R = rng.random((b, rkb.n_entities)), rng.random((b, rkb.n_relations))
    _check_reified(X, R, rkb, rng.standard_normal((b, rkb.n_entities)))


def test_all_strategies_share_adjoints():
    rng = np.random.default_rng(1)
    cell, group = GRID4.type("cell"), GRID4.type("rel:cell->cell")
    X, R, G = rng.random((3, 16)), rng.random((3, 4)), rng.standard_normal((3, 16))
    ref = follow_backward("reified", X, R, RKB4, G)  # grid: global space == cell space
    late = follow_backward("late", SetVec(cell, X), SetVec(group, R), GRID4, G)
    sharded = follow_backward("reified-sharded", X, R, partition_reified(RKB4, 3), G)
    for got in (late, sharded):
        assert np.abs(got[0] - ref[0]).max() < 1e-12 and np.abs(got[1] - ref[1]).max() < 1e-12
    for i in range(3):
        dx, dr = follow_backward("naive", SetVec(cell, X[i]), SetVec(group, R[i]), GRID4, G[i])
        assert np.abs(dx - ref[0][i]).max() < 1e-12 and np.abs(dr - ref[1][i]).max() < 1e-12


def test_zero_adjoint():
    dX, dR = follow_backward("reified", np.ones((2, 16)), np.ones((2, 4)), RKB4, np.zeros((2, 16)))
    assert not dX.any() and not dR.any()


def test_single_triple_hand_derivative():
    kb = build_kb([("c", 2)], [("r", "c", "c")], [("c0", "r", "c1", 0.75)])
    rkb = reify(kb)
    dX, dR = follow_backward("reified", np.array([[1.0, 0.0]]), np.array([[1.0]]), rkb, np.array([[0.0, 1.0]]))
    assert dX.tolist() == [[0.75, 0.0]] and dR.tolist() == [[0.75]]


def test_backward_errors():
    with pytest.raises(ShapeMismatch):
        follow_backward("reified", np.ones((2, 16)), np.ones((2, 4)), RKB4, np.ones((2, 15)))
    cell, group = GRID4.type("cell"), GRID4.type("rel:cell->cell")
    with pytest.raises(StrategyUnavailable):
        follow_backward("naive", SetVec(cell, np.ones((2, 16))), SetVec(group, np.ones((2, 4))), GRID4,
                        np.ones((2, 16)))
    with pytest.raises(StrategyUnavailable):
        follow_backward("telepathy", None, None, None, None)


@pytest.mark.parametrize("strategy", ["reified", "late", "reified-sharded"])
def test_tape_follow_matches_forward(strategy):
    rng = np.random.default_rng(2)
    follower = make_follower(strategy, RKB4, shards=2)
    X, R = rng.random((2, 16)), rng.random((2, 4))
    tape = Tape()
    y = tape.follow(tape.constant(X), tape.constant(R), follower)
    assert np.abs(y.value - follow_reified(X, R, RKB4)).max() < 1e-12


# ---------------------------------------------------------------- tape ops


def _param_fd(build, params, h=1e-6, tol=1e-5):
    """Compare tape gradients of ``build(tape) -> scalar node`` with central differences."""
    tape = Tape()
    grads = backward(tape, build(tape))

    def f():
        t = Tape()
        return float(build(t).value)

    for name in params.names():
        num = kbutil.central_diff(f, params[name], h)
        assert kbutil.rel_err(grads[name], num).max() < tol, name


def _params(rng, **shapes):
    p = ModelParams(np.float64)
    for name, shape in shapes.items():
        p.add(name, rng.standard_normal(shape) * 0.5)
    return p


def test_elementwise_and_matmul_gradients():
    rng = np.random.default_rng(3)
    p = _params(rng, a=(3, 4), b=(3, 4), w=(4, 2), bias=(2,))

    def build(t):
        a, b = t.param(p, "a"), t.param(p, "b")
        z = t.mul(t.sigmoid(a), t.tanh(b))
        z = t.add(t.sub(z, t.scale(a, 0.3)), t.one_minus(b))
        z = t.linear(z, t.param(p, "w"), t.param(p, "bias"))
        return t.sum(t.mul(t.softmax(z), t.columns(t.matmul(a, t.param(p, "w")), 0, 2)))

    _param_fd(build, p)


def test_embed_pool_xent_gradients():
    rng = np.random.default_rng(4)
    p = _params(rng, table=(6, 3), w=(3, 5))
    ids = np.array([[1, 2, 0], [3, 3, 5]])
    mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
    target = np.array([[0.5, 0.5, 0, 0, 0], [0, 0, 0, 0, 1.0]])

    def build(t):
        pooled = t.mean_pool(t.embed(t.param(p, "table"), ids), mask)
        loss, _ = t.softmax_xent(t.linear(pooled, t.param(p, "w")), target)
        return loss

    _param_fd(build, p)


def test_lstm_gradients_with_mask():
    rng = np.random.default_rng(5)
    H, n_in = 3, 2
    p = _params(rng, x=(2, n_in), s=(2, 2 * H), w=(n_in + H, 4 * H), b=(4 * H,), g=(2, 2 * H))

    def build(t):
        s = t.lstm_cell(t.param(p, "x"), t.param(p, "s"), t.param(p, "w"), t.param(p, "b"), np.array([1.0, 0.0]))
        s = t.lstm_cell(t.param(p, "x"), s, t.param(p, "w"), t.param(p, "b"))
        return t.sum(t.mul(s, t.param(p, "g")))

    _param_fd(build, p)


def test_follow_op_gradients_through_tape():
    rng = np.random.default_rng(6)
    p = _params(rng, x=(2, 16), r=(2, 4))
    follower = make_follower("reified", RKB4)

    def build(t):
        y = t.follow(t.param(p, "x"), t.param(p, "r"), follower)
        y = t.follow(y, t.param(p, "r"), follower)
        loss, _ = t.softmax_xent(y, np.full((2, 16), 1 / 16))
        return loss

    _param_fd(build, p)


def test_softmax_uniform_xent_is_log_n():
    n = 7
    tape = Tape()
    target = np.zeros((1, n))
    target[0, 3] = 1
    loss, probs = tape.softmax_xent(tape.constant(np.zeros((1, n))), target)
    assert np.allclose(probs, 1 / n) and abs(float(loss.value) - math.log(n)) < 1e-12


def test_softmax_large_logits_are_stable():
    tape = Tape()
    loss, probs = tape.softmax_xent(tape.constant(np.array([[1000.0, 0.0]])), np.array([[1.0, 0.0]]))
    assert np.isfinite(float(loss.value)) and probs[0, 0] == 1.0


def test_lstm_zero_weights_hand_computation():
    tape = Tape()
    state = tape.constant(np.array([[0.3, 1.0]]))  # h, c with H = 1
    out = tape.lstm_cell(tape.constant(np.array([[2.0]])), state, tape.constant(np.zeros((2, 4))),
                         tape.constant(np.zeros(4))).value
    # all gates sigmoid(0) = 0.5, candidate tanh(0) = 0
    c = 0.5 * 1.0 + 0.5 * 0.0
    assert np.allclose(out, [[0.5 * math.tanh(c), c]], rtol=0, atol=1e-15)


def test_linear_identity():
    tape = Tape()
    x = np.random.default_rng(7).random((3, 4))
    y = tape.linear(tape.constant(x), tape.constant(np.eye(4)), tape.constant(np.zeros(4)))
    assert np.array_equal(y.value, x)


def test_sum_of_params_has_unit_gradients():
    p = _params(np.random.default_rng(8), a=(2, 3), b=(4,))
    tape = Tape()
    grads = backward(tape, tape.add(tape.sum(tape.param(p, "a")), tape.sum(tape.param(p, "b"))))
    assert all(np.array_equal(g, np.ones_like(g)) for g in grads.values())


def test_adjoints_accumulate_over_branches():
    p = _params(np.random.default_rng(9), a=(3,), w=(3,))

    def grads(double):
        tape = Tape()
        y = tape.mul(tape.param(p, "a"), tape.param(p, "w"))
        z = tape.add(y, y) if double else y
        return backward(tape, tape.sum(z))

    one, two = grads(False), grads(True)
    for name in ("a", "w"):
        assert np.array_equal(two[name], 2 * one[name])


def test_backward_visits_in_reverse_order():
    tape = Tape()
    a = tape.constant(1.0)
    nodes = [a]
    for _ in range(5):
        nodes.append(tape.scale(nodes[-1], 2.0))
    assert [n.id for n in tape.nodes] == list(range(6))
    assert all(p.id < n.id for n in tape.nodes for p in n.parents)


def test_non_scalar_loss():
    tape = Tape()
    with pytest.raises(NonScalarLoss):
        tape.backward(tape.constant(np.ones(3)))


# ---------------------------------------------------------------- optimisers and checkpoints


def test_adam_quadratic_bowl():
    # minimum 1.5 away from the start; each Adam step moves at most ~lr
    p = ModelParams(np.float64)
    p.add("x", np.zeros(3))
    target = np.array([1.0, -0.5, 1.5])
    for _ in range(100):
        p.zero_grad()
        p.grads["x"] += 2 * (p["x"] - target)
        adam_step(p, 0.1)
    assert np.abs(p["x"] - target).max() < 1e-2


def test_adam_matches_reference_optimizer():
    torch = pytest.importorskip("torch")
    x0, target = np.array([0.0, 5.0, -2.0]), np.array([3.0, -1.0, 0.5])
    p = ModelParams(np.float64)
    p.add("x", x0.copy())
    xt = torch.tensor(x0.copy(), requires_grad=True)
    opt = torch.optim.Adam([xt], lr=0.1)
    for _ in range(50):
        p.zero_grad()
        p.grads["x"] += 2 * (p["x"] - target)
        adam_step(p, 0.1)
        opt.zero_grad()
        ((xt - torch.tensor(target)) ** 2).sum().backward()
        opt.step()
    assert np.abs(p["x"] - xt.detach().numpy()).max() < 1e-12


def test_sgd_step():
    p = ModelParams(np.float64)
    p.add("x", np.array([1.0]))
    p.grads["x"] += 2.0
    sgd_step(p, 0.25)
    assert p["x"].tolist() == [0.5]


def test_adam_clip_bounds_update_norm():
    p = ModelParams(np.float64)
    p.add("x", np.zeros(4))
    p.grads["x"] += 1e6
    adam_step(p, 0.1, clip=1.0)
    assert np.all(np.abs(p["x"]) <= 0.1 + 1e-12)


def _chain(dtype=np.float64, seed=0, hops=2):
    spec = GridSpec(4)
    kb = gen_grid(spec)
    qs = gen_chain_questions(spec, 6, hop_range=(1, hops), seed=seed)
    vocab = Vocab([t for q in gen_chain_questions(spec, 200, seed=99) for t in q.tokens])
    model = ChainModel(vocab, reify(kb), emb_dim=6, hidden=5, max_hops=hops, seed=seed, dtype=dtype)
    cell_index = {n: i for i, n in enumerate(kb.type("cell").names)}
    return model, model.make_batch(qs, cell_index)


def test_whole_model_gradient_check():
    model, batch = _chain()
    errs = kbutil.model_grad_check(model, batch, n_samples=20)
    assert max(e[-1] for e in errs) < 1e-3, errs


def test_determinism():
    results = []
    for _ in range(2):
        model, batch = _chain()
        tape = Tape()
        loss, probs = model.loss(tape, batch)
        results.append((float(loss.value), probs, backward(tape, loss)))
    (l1, p1, g1), (l2, p2, g2) = results
    assert l1 == l2 and np.array_equal(p1, p2)
    assert all(np.array_equal(g1[k], g2[k]) for k in g1)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_checkpoint_round_trip_is_bit_exact(tmp_path, dtype):
    model, _ = _chain(dtype=dtype)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model.params, path, meta=model.meta())
    params, meta = load_checkpoint(path)
    assert meta == model.meta()
    assert params.names() == model.params.names()
    for name in params.names():
        assert params[name].dtype == np.dtype(dtype)
        assert params[name].tobytes() == model.params[name].tobytes()
    save_checkpoint(params, tmp_path / "again.ckpt", meta=meta)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
