import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kbfollow import reify
from kbfollow.autodiff import Tape
from kbfollow.errors import ConfigError, MissingGroupTag, UnknownQueryRelation, UnknownToken
from kbfollow.tasks.grid import GridSpec, cell_name, gen_grid, step
from kbfollow.tasks.models import (
    ChainModel,
    FixedHopModel,
    KbcModel,
    TemplateQaModel,
    Vocab,
    answer_targets,
    stop_mixture,
)
from kbfollow.tasks.questions import (
    ANCHORS,
    anchor_cell,
    gen_chain_questions,
    load_questions,
    parse_question,
    save_questions,
    walk,
)
from kbfollow.tasks.synthetic import (
    CVT_GROUPS,
    FAMILY_QUERIES,
    KbcExample,
    gen_cvt_kb,
    gen_cvt_questions,
    gen_family_kb,
    gen_kbc_examples,
    gen_movie_kb,
    gen_movie_questions,
    global_index,
    traverse,
)
from kbfollow.tasks.training import TrainConfig, evaluate, hits_at, train

# ---------------------------------------------------------------- grid and questions


def test_grid_sizes():
    kb2 = gen_grid(GridSpec(2))
    assert (kb2.n_entities, kb2.n_triples) == (4, 8)
    kb10 = gen_grid(GridSpec(10))
    assert (kb10.n_entities, kb10.n_triples) == (100, 360)


@pytest.mark.parametrize("n", [2, 3, 5, 10])
def test_grid_triples_match_adjacency_enumeration(n):
    kb = gen_grid(GridSpec(n))
    adjacent = {(a, b) for a in range(n * n) for b in range(n * n)
                if abs(a // n - b // n) + abs(a % n - b % n) == 1}
    assert set(zip(kb.subj.tolist(), kb.obj.tolist())) == adjacent
    assert kb.n_triples == 4 * n * (n - 1)


def test_grid_many_relations():
    kb = gen_grid(GridSpec(10, 1000))
    assert kb.n_relations == 1000 and kb.n_triples == 360
    counts = np.bincount(kb.rel, minlength=1000)
    assert (counts == 0).sum() == 640 and counts.max() == 1


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(1)
    with pytest.raises(ValueError):
        GridSpec(4, 0)


def test_questions_deterministic():
    a = gen_chain_questions(GridSpec(10), 2, seed=5)
    b = gen_chain_questions(GridSpec(10), 2, seed=5)
    assert [q.to_json() for q in a] == [q.to_json() for q in b]


def test_one_hop_answers_are_neighbours():
    kb = gen_grid(GridSpec(10))
    cell = kb.type("cell")
    pairs = set(zip(kb.subj.tolist(), kb.obj.tolist()))
    for q in gen_chain_questions(GridSpec(10), 200, hop_range=(1, 1), seed=1):
        assert (cell.index(q.start), cell.index(q.answer)) in pairs


def test_center_left_down_right():
    tokens = "from center left go down then right".split()
    start, dirs = parse_question(tokens, 10)
    assert start == (5, 0) and dirs == ["south", "east"]
    assert walk(10, start, dirs) == (6, 1)


@given(st.integers(0, 10_000))
def test_question_answers_follow_walk(seed):
    spec = GridSpec(10)
    for q in gen_chain_questions(spec, 5, seed=seed):
        start, dirs = parse_question(q.tokens, 10)
        assert cell_name(*start) == q.start and dirs == q.directions
        assert cell_name(*walk(10, start, dirs)) == q.answer
        assert 1 <= q.hops <= 10


def test_anchors():
    assert anchor_cell(10, "center") == (5, 5)
    assert anchor_cell(10, "top right") == (0, 9)
    assert anchor_cell(10, "bottom center") == (9, 5)
    assert len(ANCHORS) == 9
    assert step(10, (0, 0), "north") is None


def test_question_file_round_trip(tmp_path):
    qs = gen_chain_questions(GridSpec(10), 20, seed=3)
    save_questions(qs, tmp_path / "q.jsonl")
    back = load_questions(tmp_path / "q.jsonl")
    assert [q.to_json() for q in back] == [q.to_json() for q in qs]
    assert [q.directions for q in back] == [q.directions for q in qs]


def test_hop_distribution_is_roughly_uniform():
    hops = np.array([q.hops for q in gen_chain_questions(GridSpec(10), 5000, seed=0)])
    counts = np.bincount(hops, minlength=11)[1:]
    assert counts.min() > 400 and counts.max() < 600


# ---------------------------------------------------------------- chain model

GRID = gen_grid(GridSpec(10))
RKB = reify(GRID)
CELL_INDEX = {n: i for i, n in enumerate(GRID.type("cell").names)}
VOCAB = Vocab([t for q in gen_chain_questions(GridSpec(10), 500, seed=0) for t in q.tokens])


def chain_batch(model, n=8, seed=0, hop_range=(1, 10)):
    return model.make_batch(gen_chain_questions(GridSpec(10), n, hop_range, seed=seed), CELL_INDEX)


def test_untrained_chain_outputs_distribution():
    model = ChainModel(VOCAB, RKB, hidden=16, emb_dim=8)
    probs = model.predict(chain_batch(model))
    assert (probs >= 0).all() and np.abs(probs.sum(axis=1) - 1).max() < 1e-6


def test_first_batch_loss_near_log_100():
    model = ChainModel(VOCAB, RKB)
    tape = Tape()
    loss, _ = model.loss(tape, chain_batch(model, n=32))
    assert abs(float(loss.value) - math.log(100)) < 0.5


def test_hand_set_chain_follows_east():
    model = ChainModel(VOCAB, RKB, hidden=8, emb_dim=4, dtype=np.float64)
    p = model.params
    for name in ("start_w", "stop_w", "rel_w"):
        p[name] = np.zeros_like(p[name])
    start = np.zeros(100)
    start[CELL_INDEX["c0_0"]] = 60.0  # softmax -> one-hot on c0_0
    p["start_b"] = start
    p["stop_b"] = np.array([60.0])  # p^1 = 1
    east = np.zeros(RKB.n_relations)
    east[RKB.relation_ids.index(GRID.relation("east").id)] = 1.0
    p["rel_b"] = east
    trace = {}
    batch = chain_batch(model, n=3)
    tape = Tape()
    model.logits(tape, batch, trace)
    probs = model.predict(batch)
    assert (probs.argmax(axis=1) == CELL_INDEX["c0_1"]).all()
    assert np.allclose(trace["coef"][0], 1.0)


def test_trained_chain_one_hop():
    spec = GridSpec(10)
    tr = gen_chain_questions(spec, 3000, hop_range=(1, 1), seed=11)
    te = gen_chain_questions(spec, 300, hop_range=(1, 1), seed=12)
    model = ChainModel(Vocab([t for q in tr for t in q.tokens]), RKB, hidden=32, emb_dim=16, max_hops=3)
    train(model, tr, TrainConfig(epochs=3, batch_size=32, lr=0.01), batch_kwargs={"cell_index": CELL_INDEX})
    probs = model.predict(model.make_batch(te, CELL_INDEX))
    assert np.mean(probs.argmax(axis=1) == [CELL_INDEX[q.answer] for q in te]) >= 0.95


def test_chain_mixture_coefficients_in_model():
    model = ChainModel(VOCAB, RKB, hidden=8, emb_dim=4)
    trace = {}
    model.logits(Tape(), chain_batch(model), trace)
    coefs = np.stack(trace["coef"])  # (T, b, 1)
    assert (coefs >= 0).all() and np.allclose(coefs.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(coefs, stop_mixture(np.stack(trace["stop"])))


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12))
def test_stop_mixture_sums_to_at_most_one(ps):
    c = stop_mixture(np.array(ps))
    assert (c >= 0).all() and c.sum() <= 1 + 1e-12
    forced = stop_mixture(np.array(ps[:-1] + [1.0]))
    assert abs(forced.sum() - 1) < 1e-12


def test_unknown_token():
    with pytest.raises(UnknownToken):
        VOCAB.encode(["from", "nowhere"])


def test_answer_targets_uniform_over_answers():
    t = answer_targets([{0, 2}, {1}], 3)
    assert t.tolist() == [[0.5, 0, 0.5], [0, 1, 0]]


# ---------------------------------------------------------------- template QA

CVT_KB, CVT_GROUPS_TAGGED = gen_cvt_kb(seed=0)


def test_cvt_groups_and_two_hop_answers():
    assert CVT_GROUPS_TAGGED == CVT_GROUPS
    tr, te = gen_cvt_questions(CVT_KB, 200, seed=1, test_fraction=0.25)
    assert len(te) == 50 and len(tr) == 150
    for e in tr + te:
        assert set(e.answers) == traverse(CVT_KB, e.entities, e.path)
        if e.hops == 2:
            assert e.path[0] in CVT_GROUPS["E->CVT"] and e.path[1] in CVT_GROUPS["CVT->E"]


def test_template_requires_groups():
    vocab = Vocab(["who"])
    with pytest.raises(MissingGroupTag):
        TemplateQaModel(vocab, CVT_KB, {"E->E": ["directed_by"], "E->CVT": ["release_event"]})


def _template_model():
    tr = gen_cvt_questions(CVT_KB, 100, seed=2)
    return TemplateQaModel(Vocab([t for e in tr for t in e.tokens]), CVT_KB, CVT_GROUPS_TAGGED,
                           dtype=np.float64), tr


def test_template_hand_set_two_hop_support():
    model, qs = _template_model()
    qs = [q for q in qs if q.path == ("release_event", "release_region")][:5]
    batch = model.make_batch(qs)
    tape = Tape()
    b = len(qs)

    def onehot(group, name):
        v = np.zeros((b, len(model.groups[group])))
        if name:
            v[:, model.groups[group].index(name)] = 1.0
        return tape.constant(v)

    rs = {"E->E": onehot("E->E", None), "E->CVT": onehot("E->CVT", "release_event"),
          "CVT->E": onehot("CVT->E", "release_region")}
    y = model.logits(tape, batch, relations=rs).value
    for i, q in enumerate(qs):
        assert set(np.flatnonzero(y[i]).tolist()) == traverse(CVT_KB, q.entities, q.path)


def test_template_empty_entity_set_gives_uniform():
    model, qs = _template_model()
    batch = model.make_batch(qs[:4])
    batch.inputs["x"][:] = 0.0
    probs = model.predict(batch)
    assert np.allclose(probs, 1.0 / CVT_KB.n_entities)


def test_template_outputs_distribution():
    model, qs = _template_model()
    probs = model.predict(model.make_batch(qs[:10]))
    assert (probs >= 0).all() and np.abs(probs.sum(axis=1) - 1).max() < 1e-6


# ---------------------------------------------------------------- fixed hop

MOVIE_KB = gen_movie_kb(seed=0)
MOVIE_RKB = reify(MOVIE_KB)


def test_movie_questions_ground_truth():
    for k in (1, 2, 3):
        for q in gen_movie_questions(MOVIE_KB, k, 20, seed=k):
            truth = traverse(MOVIE_KB, q.entities, q.path) - set(q.entities)
            assert set(q.answers) == truth and len(q.path) == k


def _fixed(k):
    qs = gen_movie_questions(MOVIE_KB, k, 50, seed=0)
    return FixedHopModel(Vocab([t for q in qs for t in q.tokens]), MOVIE_RKB, k, dtype=np.float64), qs


def test_fixed_hop_hand_set_support():
    model, qs = _fixed(2)
    qs = qs[:6]
    batch = model.make_batch(qs)
    tape = Tape()
    rels = []
    for t in range(2):
        v = np.zeros((len(qs), MOVIE_RKB.n_relations))
        for i, q in enumerate(qs):
            v[i, MOVIE_RKB.relation_ids.index(MOVIE_KB.relation(q.path[t]).id)] = 1.0
        rels.append(tape.constant(v))
    y = model.logits(tape, batch, relations=rels).value
    for i, q in enumerate(qs):
        assert set(np.flatnonzero(y[i]).tolist()) == traverse(MOVIE_KB, q.entities, q.path)


def test_fixed_hop_empty_start_is_uniform():
    model, qs = _fixed(3)
    batch = model.make_batch(qs[:3])
    batch.inputs["x"][:] = 0.0
    assert np.allclose(model.predict(batch), 1.0 / MOVIE_RKB.n_entities)


def test_fixed_hop_trained_one_hop():
    tr, te = gen_movie_questions(MOVIE_KB, 1, 1500, seed=1, test_fraction=0.2)
    model = FixedHopModel(Vocab([t for q in tr for t in q.tokens]), MOVIE_RKB, 1)
    train(model, tr, TrainConfig(epochs=4, batch_size=10, lr=0.01))
    assert evaluate(model, te)["hits1"] >= 0.95


# ---------------------------------------------------------------- KB completion

FAMILY = gen_family_kb(seed=0)
FAMILY_RKB = reify(FAMILY)


def test_family_examples_are_joins():
    tr, te = gen_kbc_examples(FAMILY, seed=0)
    assert not {e.start for e in tr} & {e.start for e in te}
    names = FAMILY.type("person").names
    for e in tr[:50] + te[:50]:
        assert set(e.answers) == traverse(FAMILY, [e.start], FAMILY_QUERIES[e.query])
        assert 0 <= e.start < len(names)


def test_kbc_residual_with_zero_relations():
    model = KbcModel(list(FAMILY_QUERIES), FAMILY_RKB, chains=2, steps=3)
    ex = [KbcExample("grandparent", global_index(FAMILY, "person", "p20"), [0])]
    batch = model.make_batch(ex)
    tape = Tape()
    zero = tape.constant(np.zeros((1, FAMILY_RKB.n_relations)))
    outs = model.chain_outputs(tape, batch, relations=[[zero] * 3, [zero] * 3])
    for o in outs:
        assert np.array_equal(o.value, batch.inputs["x"])


def test_kbc_unknown_query():
    model = KbcModel(list(FAMILY_QUERIES), FAMILY_RKB)
    with pytest.raises(UnknownQueryRelation):
        model.query_ids(["cousin"])


def test_kbc_copy_relation_one_step():
    tr, te = gen_kbc_examples(FAMILY, {"parent_copy": ("parent",)}, seed=0)
    model = KbcModel(["parent_copy"], FAMILY_RKB, chains=1, steps=1)
    train(model, tr, TrainConfig(epochs=20, batch_size=10, lr=0.01))
    assert evaluate(model, te)["hits1"] >= 0.95


def test_kbc_outputs_distribution():
    tr, _ = gen_kbc_examples(FAMILY, seed=0)
    model = KbcModel(list(FAMILY_QUERIES), FAMILY_RKB, chains=3, steps=2)
    probs = model.predict(model.make_batch(tr[:20]))
    assert (probs >= 0).all() and np.abs(probs.sum(axis=1) - 1).max() < 1e-6


# ---------------------------------------------------------------- training loop


def test_training_loss_decreases_and_hits_dominate(tmp_path):
    spec = GridSpec(10)
    qs = gen_chain_questions(spec, 1500, hop_range=(1, 2), seed=4)
    model = ChainModel(Vocab([t for q in qs for t in q.tokens]), RKB, hidden=32, emb_dim=16, max_hops=2)
    log = tmp_path / "metrics.jsonl"
    hist = train(model, qs, TrainConfig(epochs=4, batch_size=32, lr=0.01, log_path=str(log)),
                 batch_kwargs={"cell_index": CELL_INDEX})
    losses = [h["loss"] for h in hist]
    assert all(b <= a * 1.05 for a, b in zip(losses, losses[1:]))
    assert all(h["hits10"] >= h["hits1"] for h in hist)
    assert len(log.read_text().splitlines()) == 4


def test_hits_at():
    probs = np.array([[0.1, 0.5, 0.4], [0.3, 0.3, 0.4]])
    h = hits_at(probs, [{2}, {0}], ks=(1, 2))
    assert h[1].tolist() == [False, False] and h[2].tolist() == [True, True]


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochs": 0})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"optimiser": "adam"})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"optimizer": "lbfgs"})


def test_generators_deterministic():
    a, ga = gen_cvt_kb(seed=3)
    b, gb = gen_cvt_kb(seed=3)
    assert a == b and ga == gb
    assert gen_family_kb(seed=2) == gen_family_kb(seed=2)
    assert gen_movie_kb(seed=1) == gen_movie_kb(seed=1)
    qa = gen_cvt_questions(a, 30, seed=9)
    qb = gen_cvt_questions(b, 30, seed=9)
    assert [(q.tokens, q.answers) for q in qa] == [(q.tokens, q.answers) for q in qb]
