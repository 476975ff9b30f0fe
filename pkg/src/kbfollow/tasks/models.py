"""Neural models built from relation-set following.

Every model works in the global entity space of a reified KB and exposes
the same surface to the trainer: ``make_batch(examples)``,
``logits(tape, batch)`` and ``meta()`` for checkpoints. Relation-set
vectors come from linear projections by default (``rel_activation``
switches to a softmax over relations).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import ModelParams, Tape, make_follower
from ..errors import MissingGroupTag, UnknownQueryRelation, UnknownToken
from ..follow import ReifiedKb

PAD = "<pad>"


class Vocab:
    def __init__(self, tokens):
        self.tokens = [PAD] + sorted(set(tokens) - {PAD})
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def encode(self, tokens):
        try:
            return [self.index[t] for t in tokens]
        except KeyError as e:
            raise UnknownToken(f"token {e.args[0]!r} is not in the vocabulary") from None

    def encode_batch(self, seqs, reverse=False):
        """Right-padded id matrix and 0/1 mask."""
        length = max(len(s) for s in seqs)
        ids = np.zeros((len(seqs), length), dtype=np.int64)
        mask = np.zeros((len(seqs), length))
        for i, s in enumerate(seqs):
            enc = self.encode(s[::-1] if reverse else s)
            ids[i, :len(enc)] = enc
            mask[i, :len(enc)] = 1.0
        return ids, mask


@dataclass
class Batch:
    inputs: dict
    targets: np.ndarray  # (b, N_E) answer distributions
    answers: list = field(default_factory=list)  # per-row sets of answer indices

    def __len__(self):
        return self.targets.shape[0]


def answer_targets(answer_sets, n):
    t = np.zeros((len(answer_sets), n))
    for i, ans in enumerate(answer_sets):
        ans = sorted(ans)
        t[i, ans] = 1.0 / len(ans)
    return t


def one_hot_rows(indices, n):
    x = np.zeros((len(indices), n))
    for i, idx in enumerate(indices):
        for j in np.atleast_1d(idx):
            x[i, j] = 1.0
    return x


class _Model:
    kind = ""

    def _relations(self, tape, h, w_name, b_name):
        r = tape.linear(h, tape.param(self.params, w_name), tape.param(self.params, b_name))
        if self.rel_activation == "softmax":
            r = tape.softmax(r)
        return r

    def loss(self, tape: Tape, batch: Batch):
        return tape.softmax_xent(self.logits(tape, batch), batch.targets)

    def predict(self, batch: Batch) -> np.ndarray:
        tape = Tape()
        _, probs = self.loss(tape, batch)
        return probs


# ---------------------------------------------------------------- chain QA

class ChainModel(_Model):
    """LSTM encoder-decoder emitting a variable-length relation chain.

    The decoder state starts at the encoder's final state. At step t it reads
    the previous relation vector, emits a stop probability and the next
    relation vector from the previous hidden state, and follows one hop.
    The answer mixes every step's entity set by its stop weight
    ``p_t * prod_{t'<t}(1 - p_t')``; the last step stops with probability 1.
    """

    kind = "chain"

    def __init__(self, vocab: Vocab, rkb: ReifiedKb, *, emb_dim=32, hidden=64, max_hops=10,
                 strategy="reified", rel_activation="linear", reverse_input=True, seed=0,
                 dtype=np.float32, params=None, shards=1):
        self.vocab = vocab
        self.rkb = rkb
        self.emb_dim, self.hidden, self.max_hops = emb_dim, hidden, max_hops
        self.strategy, self.rel_activation = strategy, rel_activation
        self.reverse_input = reverse_input
        self.seed = seed
        self.follower = make_follower(strategy, rkb, shards=shards)
        n_e, n_r, H = rkb.n_entities, rkb.n_relations, hidden
        if params is None:
            rng = np.random.default_rng(seed)
            params = ModelParams(dtype)
            params.uniform("embed", (len(vocab), emb_dim), 0.1, rng)
            params.uniform("enc_w", (emb_dim + H, 4 * H), 0.1, rng)
            params.zeros("enc_b", (4 * H,))
            params.uniform("dec_w", (n_r + H, 4 * H), 0.1, rng)
            params.zeros("dec_b", (4 * H,))
            params.glorot("start_w", (H, n_e), rng)
            params.zeros("start_b", (n_e,))
            params.glorot("stop_w", (H, 1), rng)
            params.zeros("stop_b", (1,))
            params.glorot("rel_w", (H, n_r), rng)
            params.zeros("rel_b", (n_r,))
        self.params = params

    def meta(self):
        return {"kind": self.kind, "vocab": self.vocab.tokens[1:], "emb_dim": self.emb_dim,
                "hidden": self.hidden, "max_hops": self.max_hops, "strategy": self.strategy,
                "rel_activation": self.rel_activation, "reverse_input": self.reverse_input}

    def make_batch(self, questions, cell_index) -> Batch:
        ids, mask = self.vocab.encode_batch([q.tokens for q in questions], reverse=self.reverse_input)
        answers = [{cell_index[q.answer]} for q in questions]
        return Batch({"ids": ids, "mask": mask}, answer_targets(answers, self.rkb.n_entities), answers)

    def encode(self, tape, ids, mask):
        p = self.params
        H = self.hidden
        state = tape.constant(np.zeros((ids.shape[0], 2 * H)))
        emb, w, b = tape.param(p, "embed"), tape.param(p, "enc_w"), tape.param(p, "enc_b")
        for pos in range(ids.shape[1]):
            state = tape.lstm_cell(tape.embed(emb, ids[:, pos]), state, w, b, mask[:, pos])
        return state

    def logits(self, tape, batch, trace=None):
        p = self.params
        H = self.hidden
        state = self.encode(tape, batch.inputs["ids"], batch.inputs["mask"])
        h = tape.columns(state, 0, H)
        x = tape.softmax(tape.linear(h, tape.param(p, "start_w"), tape.param(p, "start_b")))
        b = h.shape[0]
        r_prev = tape.constant(np.zeros((b, self.rkb.n_relations)))
        dec_w, dec_b = tape.param(p, "dec_w"), tape.param(p, "dec_b")
        mix = remain = None
        if trace is not None:
            trace["x"] = [x.value]
        for t in range(1, self.max_hops + 1):
            if t < self.max_hops:
                stop = tape.sigmoid(tape.linear(h, tape.param(p, "stop_w"), tape.param(p, "stop_b")))
            else:
                stop = tape.constant(np.ones((b, 1)))
            r = self._relations(tape, h, "rel_w", "rel_b")
            state = tape.lstm_cell(r_prev, state, dec_w, dec_b)
            x = tape.follow(x, r, self.follower)
            coef = stop if remain is None else tape.mul(stop, remain)
            term = tape.mul(coef, x)
            mix = term if mix is None else tape.add(mix, term)
            remain = tape.one_minus(stop) if remain is None else tape.mul(remain, tape.one_minus(stop))
            if trace is not None:
                trace.setdefault("stop", []).append(stop.value)
                trace.setdefault("coef", []).append(coef.value)
                trace.setdefault("r", []).append(r.value)
                trace["x"].append(x.value)
            h = tape.columns(state, 0, H)
            r_prev = r
        return mix


def stop_mixture(stops):
    """Weights ``p_t * prod_{t'<t}(1 - p_t')`` for a (T, ...) array of stop probabilities.

    Plain numpy mirror of the coefficients :meth:`ChainModel.logits` builds on the tape.
    """
    stops = np.asarray(stops, dtype=np.float64)
    remain = np.cumprod(np.concatenate([np.ones_like(stops[:1]), 1.0 - stops[:-1]]), axis=0)
    return stops * remain


# ---------------------------------------------------------------- bag-of-words encoders

class _PooledQuestionModel(_Model):
    def _pooled(self, tape, batch):
        emb = tape.embed(tape.param(self.params, "embed"), batch.inputs["ids"])
        return tape.mean_pool(emb, batch.inputs["mask"])


class TemplateQaModel(_PooledQuestionModel):
    """Mixture of a 1-hop template and a 2-hop template through hub (CVT) entities.

    ``groups`` maps "E->E", "E->CVT" and "CVT->E" to lists of relation ids.
    """

    kind = "template"
    GROUPS = ("E->E", "E->CVT", "CVT->E")

    def __init__(self, vocab: Vocab, kb, groups, *, emb_dim=32, strategy="reified",
                 rel_activation="linear", use_one_hop=True, use_two_hop=True, seed=0,
                 dtype=np.float32, params=None):
        from ..follow import reify

        missing = [g for g in self.GROUPS if not groups.get(g)]
        if missing:
            raise MissingGroupTag(f"relation groups not tagged: {missing}")
        self.vocab, self.kb, self.groups = vocab, kb, {g: list(groups[g]) for g in self.GROUPS}
        self.emb_dim, self.strategy, self.rel_activation = emb_dim, strategy, rel_activation
        self.use_one_hop, self.use_two_hop = use_one_hop, use_two_hop
        self.n_entities = kb.n_entities
        self.followers = {g: make_follower(strategy, reify(kb, self.groups[g])) for g in self.GROUPS}
        if params is None:
            rng = np.random.default_rng(seed)
            params = ModelParams(dtype)
            params.uniform("embed", (len(vocab), emb_dim), 0.1, rng)
            for g in self.GROUPS:
                params.glorot(f"w[{g}]", (emb_dim, len(self.groups[g])), rng)
                params.zeros(f"b[{g}]", (len(self.groups[g]),))
        self.params = params

    def meta(self):
        return {"kind": self.kind, "vocab": self.vocab.tokens[1:], "emb_dim": self.emb_dim,
                "strategy": self.strategy, "rel_activation": self.rel_activation, "groups": self.groups}

    def make_batch(self, examples) -> Batch:
        ids, mask = self.vocab.encode_batch([e.tokens for e in examples])
        x = one_hot_rows([e.entities for e in examples], self.n_entities)
        answers = [set(e.answers) for e in examples]
        return Batch({"ids": ids, "mask": mask, "x": x}, answer_targets(answers, self.n_entities), answers)

    def relation_sets(self, tape, batch):
        q = self._pooled(tape, batch)
        return {g: self._relations(tape, q, f"w[{g}]", f"b[{g}]") for g in self.GROUPS}

    def logits(self, tape, batch, relations=None):
        x = tape.constant(batch.inputs["x"])
        rs = relations if relations is not None else self.relation_sets(tape, batch)
        out = None
        if self.use_two_hop:
            hub = tape.follow(x, rs["E->CVT"], self.followers["E->CVT"])
            out = tape.follow(hub, rs["CVT->E"], self.followers["CVT->E"])
        if self.use_one_hop:
            one = tape.follow(x, rs["E->E"], self.followers["E->E"])
            out = one if out is None else tape.add(out, one)
        if out is None:
            out = tape.constant(np.zeros_like(batch.inputs["x"]))
        return out


class FixedHopModel(_PooledQuestionModel):
    """k nested follows, each relation set a linear projection of the pooled question."""

    kind = "fixed_hop"

    def __init__(self, vocab: Vocab, rkb: ReifiedKb, hops, *, emb_dim=32, strategy="reified",
                 rel_activation="linear", seed=0, dtype=np.float32, params=None):
        if hops not in (1, 2, 3):
            raise ValueError("hops must be 1, 2 or 3")
        self.vocab, self.rkb, self.hops = vocab, rkb, hops
        self.emb_dim, self.strategy, self.rel_activation = emb_dim, strategy, rel_activation
        self.follower = make_follower(strategy, rkb)
        if params is None:
            rng = np.random.default_rng(seed)
            params = ModelParams(dtype)
            params.uniform("embed", (len(vocab), emb_dim), 0.1, rng)
            for t in range(1, hops + 1):
                params.glorot(f"w{t}", (emb_dim, rkb.n_relations), rng)
                params.zeros(f"b{t}", (rkb.n_relations,))
        self.params = params

    def meta(self):
        return {"kind": self.kind, "vocab": self.vocab.tokens[1:], "emb_dim": self.emb_dim, "hops": self.hops,
                "strategy": self.strategy, "rel_activation": self.rel_activation}

    def make_batch(self, examples) -> Batch:
        ids, mask = self.vocab.encode_batch([e.tokens for e in examples])
        x = one_hot_rows([e.entities for e in examples], self.rkb.n_entities)
        answers = [set(e.answers) for e in examples]
        return Batch({"ids": ids, "mask": mask, "x": x}, answer_targets(answers, self.rkb.n_entities), answers)

    def logits(self, tape, batch, relations=None):
        x = tape.constant(batch.inputs["x"])
        q = None if relations is not None else self._pooled(tape, batch)
        for t in range(1, self.hops + 1):
            r = relations[t - 1] if relations is not None else self._relations(tape, q, f"w{t}", f"b{t}")
            x = tape.follow(x, r, self.follower)
        return x


# ---------------------------------------------------------------- KB completion

class KbcModel(_Model):
    """N residual inference chains of T steps, relation sets from a query-relation embedding."""

    kind = "kbc"

    def __init__(self, query_relations, rkb: ReifiedKb, *, chains=1, steps=2, emb_dim=16,
                 strategy="reified", rel_activation="linear", seed=0, dtype=np.float32, params=None):
        if chains not in (1, 2, 3) or not 1 <= steps <= 6:
            raise ValueError("chains must be in {1,2,3} and steps in 1..6")
        self.query_relations = list(query_relations)
        self.query_index = {q: i for i, q in enumerate(self.query_relations)}
        self.rkb, self.chains, self.steps = rkb, chains, steps
        self.emb_dim, self.strategy, self.rel_activation = emb_dim, strategy, rel_activation
        self.follower = make_follower(strategy, rkb)
        if params is None:
            rng = np.random.default_rng(seed)
            params = ModelParams(dtype)
            params.uniform("query_embed", (len(self.query_relations), emb_dim), 0.1, rng)
            for i in range(chains):
                for t in range(steps):
                    params.glorot(f"w{i}_{t}", (emb_dim, rkb.n_relations), rng)
                    params.zeros(f"b{i}_{t}", (rkb.n_relations,))
        self.params = params

    def meta(self):
        return {"kind": self.kind, "query_relations": self.query_relations, "chains": self.chains,
                "steps": self.steps, "emb_dim": self.emb_dim, "strategy": self.strategy,
                "rel_activation": self.rel_activation}

    def query_ids(self, names):
        try:
            return np.array([self.query_index[q] for q in names], dtype=np.int64)
        except KeyError as e:
            raise UnknownQueryRelation(f"{e.args[0]!r} is not a query relation") from None

    def make_batch(self, examples) -> Batch:
        qids = self.query_ids([e.query for e in examples])
        x = one_hot_rows([e.start for e in examples], self.rkb.n_entities)
        answers = [set(e.answers) for e in examples]
        return Batch({"q": qids, "x": x}, answer_targets(answers, self.rkb.n_entities), answers)

    def chain_outputs(self, tape, batch, relations=None):
        """Final x_i^T per chain; ``relations[i][t]`` overrides the learned relation sets."""
        q = None
        if relations is None:
            q = tape.embed(tape.param(self.params, "query_embed"), batch.inputs["q"])
        outs = []
        for i in range(self.chains):
            x = tape.constant(batch.inputs["x"])
            for t in range(self.steps):
                r = relations[i][t] if relations is not None else self._relations(tape, q, f"w{i}_{t}", f"b{i}_{t}")
                x = tape.add(tape.follow(x, r, self.follower), x)
            outs.append(x)
        return outs

    def logits(self, tape, batch, relations=None):
        outs = self.chain_outputs(tape, batch, relations)
        total = outs[0]
        for o in outs[1:]:
            total = tape.add(total, o)
        return total
