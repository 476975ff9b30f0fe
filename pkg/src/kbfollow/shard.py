"""Horizontal sharding of the reified KB by triple id.

Each shard owns a contiguous range of triples and computes the follow over
that range; partial outputs are summed. Since follow is linear in the set of
triples, the sum equals the unsharded result.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coo import CooMatrix
from .errors import InvalidShardCount
from .follow import ReifiedKb, _check_reified_inputs, follow_reified


@dataclass(frozen=True, eq=False)
class ShardedReifiedKb:
    shards: tuple[ReifiedKb, ...]
    ranges: tuple[tuple[int, int], ...]
    n_entities: int
    n_relations: int
    relation_ids: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.shards)

    @property
    def n_triples(self) -> int:
        return self.ranges[-1][1] if self.ranges else 0


def _slice_rows(a: CooMatrix, lo, hi) -> CooMatrix:
    # reified matrices have exactly one entry per row, entry index == row index
    return CooMatrix(hi - lo, a.n_cols, a.rows[lo:hi] - lo, a.cols[lo:hi].copy(), a.vals[lo:hi].copy())


def balanced_ranges(n, m):
    """Split ``range(n)`` into ``m`` contiguous ranges whose sizes differ by at most 1."""
    base, extra = divmod(n, m)
    ranges, lo = [], 0
    for s in range(m):
        hi = lo + base + (1 if s < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


def partition_reified(rkb: ReifiedKb, m: int, ranges=None) -> ShardedReifiedKb:
    """Split ``rkb`` into ``m`` shards of consecutive triple ids.

    ``ranges`` overrides the balanced split; it must be contiguous, disjoint
    and cover every triple.
    """
    n = rkb.n_triples
    if not isinstance(m, (int, np.integer)) or m < 1 or m > max(n, 1):
        raise InvalidShardCount(f"shard count {m} not in [1, {n}]")
    if ranges is None:
        ranges = balanced_ranges(n, m)
    else:
        ranges = [tuple(map(int, r)) for r in ranges]
        if len(ranges) != m or ranges[0][0] != 0 or ranges[-1][1] != n or any(
                a[1] != b[0] for a, b in zip(ranges, ranges[1:])) or any(lo > hi for lo, hi in ranges):
            raise InvalidShardCount("shard ranges must be contiguous and cover all triples")
    shards = tuple(
        ReifiedKb(_slice_rows(rkb.m_subj, lo, hi), _slice_rows(rkb.m_obj, lo, hi),
                  _slice_rows(rkb.m_rel, lo, hi), rkb.relation_ids, offset=rkb.offset + lo)
        for lo, hi in ranges
    )
    return ShardedReifiedKb(shards, tuple(ranges), rkb.n_entities, rkb.n_relations, rkb.relation_ids)


def concat_shards(skb: ShardedReifiedKb) -> ReifiedKb:
    """Reassemble the full reified matrices from the fragments."""
    def cat(mats):
        offs = np.cumsum([0] + [m.n_rows for m in mats[:-1]])
        return CooMatrix(sum(m.n_rows for m in mats), mats[0].n_cols,
                         np.concatenate([m.rows + o for m, o in zip(mats, offs)]),
                         np.concatenate([m.cols for m in mats]),
                         np.concatenate([m.vals for m in mats]))
    return ReifiedKb(cat([s.m_subj for s in skb.shards]), cat([s.m_obj for s in skb.shards]),
                     cat([s.m_rel for s in skb.shards]), skb.relation_ids, skb.shards[0].offset)


def tree_sum(parts):
    """Pairwise reduction in a fixed order, independent of worker scheduling."""
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _run(fn, items, workers):
    if workers is None:
        workers = min(len(items), os.cpu_count() or 1)
    if workers <= 1 or len(items) == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def follow_sharded(X, R, skb: ShardedReifiedKb, workers=None) -> np.ndarray:
    """Sum of per-shard reified follows; X and R are broadcast to every shard.

    ``workers=1`` runs shards sequentially in the calling thread.
    """
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X, R = X[None, :], np.atleast_2d(R)
    _check_reified_inputs(X, R, skb.shards[0])
    parts = _run(lambda s: follow_reified(X, R, s), skb.shards, workers)
    y = tree_sum(parts)
    return y[0] if squeeze else y


def sharded_backward(X, R, skb: ShardedReifiedKb, dY, workers=None):
    """Adjoints of :func:`follow_sharded`; each shard contributes its own share."""
    from .autodiff.follow_grad import reified_vjp

    parts = _run(lambda s: reified_vjp(X, R, s, dY), skb.shards, workers)
    return tree_sum([p[0] for p in parts]), tree_sum([p[1] for p in parts])


class ShardedFollower:
    """Differentiable follow bound to a sharded reified KB."""

    strategy = "reified-sharded"

    def __init__(self, skb: ShardedReifiedKb, workers=None):
        self.skb = skb
        self.workers = workers

    @property
    def n_in(self):
        return self.skb.n_entities

    @property
    def n_out(self):
        return self.skb.n_entities

    @property
    def n_rel(self):
        return self.skb.n_relations

    def forward(self, X, R):
        return follow_sharded(X, R, self.skb, self.workers)

    def backward(self, X, R, dY):
        return sharded_backward(X, R, self.skb, dY, self.workers)
