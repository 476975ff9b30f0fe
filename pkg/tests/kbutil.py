"""Shared builders and brute-force oracles for the tests."""
import numpy as np

from kbfollow import SetVec, build_kb, follow_late, follow_naive, follow_reified, lift, lift_relations, lower, reify
from kbfollow.shard import follow_sharded, partition_reified


def random_kb(rng, max_entities=50, max_relations=10, hard=False):
    """Random typed KB; the first relation's signature group is the one under test."""
    n_types = int(rng.integers(1, 4))
    sizes = rng.multinomial(int(rng.integers(n_types * 2, max_entities + 1)) - 2 * n_types,
                            np.ones(n_types) / n_types) + 2
    types = [(f"t{i}", int(s)) for i, s in enumerate(sizes)]
    n_rel = int(rng.integers(1, max_relations + 1))
    rels = []
    for k in range(n_rel):
        s, o = rng.integers(n_types, size=2)
        rels.append((f"r{k}", f"t{s}", f"t{o}"))
    triples = []
    size = dict(types)
    for name, st, ot in rels:
        n = int(rng.integers(0, size[st] * size[ot] // 2 + 2))
        seen = set()
        for _ in range(n):
            i, j = int(rng.integers(size[st])), int(rng.integers(size[ot]))
            if (i, j) in seen:
                continue
            seen.add((i, j))
            w = 1.0 if hard else float(rng.choice([1.0, rng.uniform(0.1, 2.0)]))
            triples.append((f"{st}{i}", name, f"{ot}{j}", w))
    return build_kb(types, rels, triples)


def group_inputs(kb, rng, b, hard=False, density=0.3):
    """Random non-negative (X, R) batches for the first relation's group."""
    rel = kb.relations[0]
    st = kb.types[rel.subj_type]
    gt = kb.types[rel.group]
    if hard:
        X = (rng.random((b, st.size)) < density).astype(float)
        R = (rng.random((b, gt.size)) < 0.5).astype(float)
    else:
        X = rng.random((b, st.size)) * (rng.random((b, st.size)) < 0.6)
        R = rng.random((b, gt.size)) * (rng.random((b, gt.size)) < 0.8)
    return SetVec(st, X), SetVec(gt, R)


def run_all(kb, X: SetVec, R: SetVec, shard_counts=(1, 2, 3), workers=None):
    """Outputs (in the object type's own index space) of every strategy."""
    rel = kb.relations[0]
    ot = kb.types[rel.obj_type]
    out = {
        "naive": np.stack([follow_naive(X.row(i), R.row(i), kb).values for i in range(X.values.shape[0])]),
        "late": follow_late(X, R, kb).values,
    }
    rkb = reify(kb)
    Xg, Rg = lift(kb, X), lift_relations(kb, R, rkb)
    out["reified"] = lower(kb, follow_reified(Xg, Rg, rkb), ot).values
    for m in shard_counts:
        if m <= max(rkb.n_triples, 1):
            skb = partition_reified(rkb, m)
            out[f"sharded{m}"] = lower(kb, follow_sharded(Xg, Rg, skb, workers), ot).values
    return out


def brute_neighbors(kb, xs, rs):
    """R-neighbours of entity indices ``xs`` (subject type) via relations in group slots ``rs``."""
    group = kb.types[kb.relations[0].group]
    rel_ids = {r.id for r in kb.group_relations(group) if r.slot in rs}
    return {int(o) for s, k, o in zip(kb.subj, kb.rel, kb.obj) if int(k) in rel_ids and int(s) in xs}


# ---------------------------------------------------------------- finite differences


def rel_err(analytic, numeric, floor=1e-6):
    """Componentwise |a - n| / max(|a|, |n|, floor)."""
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def central_diff(f, x, h=1e-4, index=None):
    """Central differences of scalar ``f`` w.r.t. array ``x`` (modified in place, restored)."""
    idx = list(np.ndindex(x.shape)) if index is None else index
    out = np.zeros(len(idx))
    for n, i in enumerate(idx):
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        out[n] = (up - down) / (2 * h)
    return out if index is not None else out.reshape(x.shape)


def model_loss(model, batch):
    from kbfollow.autodiff import Tape

    tape = Tape()
    loss, _ = model.loss(tape, batch)
    return float(loss.value)


def model_grad_check(model, batch, n_samples=20, h=1e-5, seed=0):
    """Relative errors of backprop vs central differences on sampled parameter entries."""
    from kbfollow.autodiff import Tape, backward

    tape = Tape()
    loss, _ = model.loss(tape, batch)
    grads = backward(tape, loss)
    rng = np.random.default_rng(seed)
    names = [n for n in model.params.names() if np.any(grads[n])]
    errs = []
    for _ in range(n_samples):
        name = names[int(rng.integers(len(names)))]
        arr = model.params[name]
        g = grads[name]
        nz = np.argwhere(g != 0)
        i = tuple(nz[int(rng.integers(len(nz)))])
        num = central_diff(lambda: model_loss(model, batch), arr, h, [i])[0]
        errs.append((name, i, float(g[i]), num, float(rel_err(g[i], num))))
    return errs
