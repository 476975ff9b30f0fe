"""Analytic adjoints of relation-set following.

Follow is bilinear in (X, R), so each adjoint is another sparse-dense
product of the same shape as the forward pass. KB matrices are constants.
"""
from __future__ import annotations

import numpy as np

from ..coo import CooMatrix, dsmm
from ..errors import ShapeMismatch, StrategyUnavailable
from ..follow import (
    ReifiedKb,
    _relation_weights,
    follow_reified,
    late_mix,
    mix_relations,
)
from ..kb import SetVec, TypedKb


def reified_vjp(X, R, rkb: ReifiedKb, dY):
    """(dX, dR) for Y = (X A^T * R B^T) C with A=m_subj, B=m_rel, C=m_obj."""
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    dY = np.asarray(dY, dtype=np.float64)
    g = dsmm(dY, rkb.m_obj, transpose=True)
    by_subj = dsmm(X, rkb.m_subj, transpose=True)
    by_rel = dsmm(R, rkb.m_rel, transpose=True)
    dX = dsmm(g * by_rel, rkb.m_subj)
    dR = dsmm(g * by_subj, rkb.m_rel)
    return dX, dR


def late_vjp(X, R, mats, dY):
    """dX = sum_k R[:, k] * (dY M_k^T);  dR[:, k] = rowsum(dY * (X M_k))."""
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    dY = np.asarray(dY, dtype=np.float64)
    dX = np.zeros_like(X)
    dR = np.zeros_like(R)
    for k, m in enumerate(mats):
        dX += R[:, k, None] * dsmm(dY, m, transpose=True)
        dR[:, k] = np.einsum("ij,ij->i", dY, dsmm(X, m))
    return dX, dR


def naive_vjp(x: SetVec, r, kb: TypedKb, dy):
    """Single-example adjoints of ``x @ M_R``."""
    _, rels, _ = _relation_weights(kb, r)
    dx = dsmm(dy, mix_relations(kb, r), transpose=True)
    dr = np.array([dsmm(x.values, kb.relation_matrix(rel.id)) @ dy for rel in rels])
    if not isinstance(r, SetVec):
        full = np.zeros(kb.n_relations)
        full[[rel.id for rel in rels]] = dr
        dr = full
    return dx, dr


def follow_backward(strategy, X, R, kb_or_rkb, dY):
    """Adjoints (dX, dR) of follow under ``strategy`` for output adjoint ``dY``.

    naive/late take typed set vectors and a :class:`TypedKb`; reified takes
    global-space arrays and a :class:`ReifiedKb`; ``reified-sharded`` takes a
    sharded KB.
    """
    if strategy == "naive":
        if X.batched or np.ndim(dY) != 1:
            raise StrategyUnavailable("naive mixing has no batched backward")
        m = mix_relations(kb_or_rkb, R)
        if np.shape(dY) != (m.n_cols,):
            raise ShapeMismatch(f"dY has shape {np.shape(dY)}, expected {(m.n_cols,)}")
        return naive_vjp(X, R, kb_or_rkb, np.asarray(dY, dtype=np.float64))
    if strategy == "late":
        kb = kb_or_rkb
        mats = [kb.relation_matrix(rel.id) for rel in kb.group_relations(R.etype)]
        xv, rv = np.atleast_2d(X.values), np.atleast_2d(R.values)
        dy = np.atleast_2d(np.asarray(dY, dtype=np.float64))
        if dy.shape != (xv.shape[0], mats[0].n_cols):
            raise ShapeMismatch(f"dY has shape {np.shape(dY)}, expected {(xv.shape[0], mats[0].n_cols)}")
        dX, dR = late_vjp(xv, rv, mats, dy)
        if not X.batched:
            dX, dR = dX[0], dR[0]
        return dX, dR
    if strategy == "reified":
        X, R, dY = (np.asarray(a, dtype=np.float64) for a in (X, R, dY))
        if dY.shape != X.shape[:-1] + (kb_or_rkb.n_entities,):
            raise ShapeMismatch(f"dY has shape {dY.shape}, expected {X.shape[:-1] + (kb_or_rkb.n_entities,)}")
        if X.ndim == 1:
            dX, dR = reified_vjp(X[None], R[None], kb_or_rkb, dY[None])
            return dX[0], dR[0]
        return reified_vjp(X, R, kb_or_rkb, dY)
    if strategy == "reified-sharded":
        from ..shard import sharded_backward

        X, R, dY = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (X, R, dY))
        if dY.shape != (X.shape[0], kb_or_rkb.n_entities):
            raise ShapeMismatch(f"dY has shape {dY.shape}")
        return sharded_backward(X, R, kb_or_rkb, dY)
    raise StrategyUnavailable(f"unknown strategy {strategy!r}")


class ReifiedFollower:
    """Differentiable follow over a reified KB (global entity space)."""

    strategy = "reified"

    def __init__(self, rkb: ReifiedKb):
        self.rkb = rkb
        self.n_in = self.n_out = rkb.n_entities
        self.n_rel = rkb.n_relations

    def forward(self, X, R):
        return follow_reified(X, R, self.rkb)

    def backward(self, X, R, dY):
        return reified_vjp(X, R, self.rkb, dY)


class LateFollower:
    """Differentiable late-mixing follow over an explicit list of relation matrices."""

    strategy = "late"

    def __init__(self, mats):
        self.mats = list(mats)
        self.n_in, self.n_out = self.mats[0].shape
        self.n_rel = len(self.mats)

    @classmethod
    def from_reified(cls, rkb: ReifiedKb):
        """Per-column relation matrices in the global entity space of ``rkb``."""
        mats = []
        cols = rkb.m_rel.cols
        for c in range(rkb.n_relations):
            sel = np.flatnonzero(cols == c)
            mats.append(CooMatrix.from_entries((rkb.n_entities, rkb.n_entities), rkb.m_subj.cols[sel],
                                               rkb.m_obj.cols[sel], rkb.m_rel.vals[sel]))
        return cls(mats)

    def forward(self, X, R):
        return late_mix(X, R, self.mats)

    def backward(self, X, R, dY):
        return late_vjp(X, R, self.mats, dY)


def make_follower(strategy, rkb: ReifiedKb, shards=1, workers=None):
    if strategy == "reified":
        return ReifiedFollower(rkb)
    if strategy == "late":
        return LateFollower.from_reified(rkb)
    if strategy == "reified-sharded":
        from ..shard import ShardedFollower, partition_reified

        return ShardedFollower(partition_reified(rkb, shards), workers)
    raise StrategyUnavailable(f"strategy {strategy!r} cannot be used inside a model")
