"""Relation-set following: naive mixing, late mixing and the reified KB.

All three compute ``follow(X, R)``, the weighted set of entities reachable
from ``X`` through relations in ``R``. They differ in what they materialize:

* naive: mixes the relation matrices into one sparse ``M_R``, one example
  at a time;
* late: multiplies the batch by each relation matrix and mixes the outputs;
* reified: intersects triples by subject and relation, then maps to objects.

Intermediates are reported to :mod:`kbfollow.meter`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import meter
from .coo import CooMatrix, dsmm
from .errors import (
    BatchMismatch,
    DimensionMismatch,
    IncompatibleRelations,
    TypeMismatch,
)
from .kb import EntityType, SetVec, TypedKb


def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"hadamard of {a.shape} and {b.shape}")
    return a * b


def _relation_weights(kb: TypedKb, r):
    """Resolve ``r`` to (group type, relations, weights) over one signature group.

    ``r`` is either a set vector over a relation type, or a dense vector over
    global relation ids whose nonzero entries must share a signature.
    """
    if isinstance(r, SetVec):
        if not r.etype.is_relation:
            raise IncompatibleRelations(f"type {r.etype.name!r} is not a relation type")
        if r.batched:
            raise DimensionMismatch("expected a single relation-set vector")
        rels = kb.group_relations(r.etype)
        return r.etype, rels, np.asarray(r.values, dtype=np.float64)
    v = np.asarray(r, dtype=np.float64)
    if v.shape != (kb.n_relations,):
        raise DimensionMismatch(f"relation vector has shape {v.shape}, expected ({kb.n_relations},)")
    used = np.flatnonzero(v)
    groups = {kb.relations[k].group for k in used}
    if len(groups) > 1:
        raise IncompatibleRelations("relation set mixes relations with different signatures")
    if not groups:
        raise IncompatibleRelations("an all-zero global relation vector has no signature")
    gtype = kb.types[groups.pop()]
    rels = kb.group_relations(gtype)
    return gtype, rels, v[[rel.id for rel in rels]]


def mix_relations(kb: TypedKb, r) -> CooMatrix:
    """Sparse weighted sum of the relation matrices selected by ``r``."""
    gtype, rels, w = _relation_weights(kb, r)
    shape = (kb.types[rels[0].subj_type].size, kb.types[rels[0].obj_type].size)
    rows, cols, vals = [], [], []
    for rel, wk in zip(rels, w):
        if wk == 0:
            continue
        m = kb.relation_matrix(rel.id)
        rows.append(m.rows)
        cols.append(m.cols)
        vals.append(m.vals * wk)
    if not rows:
        return CooMatrix.empty(shape)
    return CooMatrix.from_entries(shape, np.concatenate(rows), np.concatenate(cols),
                                  np.concatenate(vals), sum_duplicates=True)


def follow_naive(x: SetVec, r, kb: TypedKb) -> SetVec:
    """``x @ M_R`` for a single example; there is deliberately no batch form."""
    if x.batched:
        raise DimensionMismatch("naive mixing takes one example at a time")
    gtype, rels, _ = _relation_weights(kb, r)
    subj_t, obj_t = kb.types[rels[0].subj_type], kb.types[rels[0].obj_type]
    if x.etype is not subj_t:
        raise TypeMismatch(f"set of type {x.etype.name!r} cannot follow {gtype.name!r}")
    m = mix_relations(kb, r)
    meter.alloc(m.nnz, "sparse")
    meter.alloc(obj_t.size, "dense")
    y = dsmm(x.values, m)
    meter.free(m.nnz)
    meter.free(obj_t.size)
    return SetVec(obj_t, y)


def late_mix(X, R, mats) -> np.ndarray:
    """Late mixing over per-relation matrices: ``sum_k R[:, k] * (X @ M_k)``.

    One ``X @ M_k`` is live at a time; relations are mixed in ascending k.
    """
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if X.ndim != 2 or R.ndim != 2:
        raise DimensionMismatch("late mixing expects 2-d minibatches")
    if X.shape[0] != R.shape[0]:
        raise BatchMismatch(f"X has {X.shape[0]} rows but R has {R.shape[0]}")
    if R.shape[1] != len(mats):
        raise DimensionMismatch(f"R has {R.shape[1]} columns for {len(mats)} relations")
    b = X.shape[0]
    n_out = mats[0].n_cols if mats else 0
    out = np.zeros((b, n_out))
    meter.alloc(out.size, "dense")
    for k, m in enumerate(mats):
        tmp = dsmm(X, m)
        meter.alloc(tmp.size, "dense")
        tmp *= R[:, k, None]
        out += tmp
        meter.free(tmp.size)
        del tmp
    meter.free(out.size)
    return out


def follow_late(X: SetVec, R: SetVec, kb: TypedKb) -> SetVec:
    """Batched late mixing over one type-compatible relation group."""
    if not R.etype.is_relation:
        raise IncompatibleRelations(f"type {R.etype.name!r} is not a relation type")
    rels = kb.group_relations(R.etype)
    subj_t, obj_t = kb.types[rels[0].subj_type], kb.types[rels[0].obj_type]
    if X.etype is not subj_t:
        raise TypeMismatch(f"set of type {X.etype.name!r} cannot follow {R.etype.name!r}")
    xv = np.atleast_2d(X.values)
    rv = np.atleast_2d(R.values)
    y = late_mix(xv, rv, [kb.relation_matrix(rel.id) for rel in rels])
    if not X.batched and not R.batched:
        y = y[0]
    return SetVec(obj_t, y)


# ---------------------------------------------------------------- reified KB

@dataclass(frozen=True, eq=False)
class ReifiedKb:
    """Triple-indexed matrices: ``m_subj``/``m_obj`` are N_T x N_E, ``m_rel`` N_T x N_R.

    Entities live in one global space (entity types concatenated in
    declaration order). ``relation_ids`` maps each ``m_rel`` column back to a
    KB relation id. ``offset`` is the global id of this matrix's first triple,
    nonzero only for shard fragments.
    """

    m_subj: CooMatrix
    m_obj: CooMatrix
    m_rel: CooMatrix
    relation_ids: tuple[int, ...]
    offset: int = 0

    @property
    def n_triples(self) -> int:
        return self.m_subj.n_rows

    @property
    def n_entities(self) -> int:
        return self.m_subj.n_cols

    @property
    def n_relations(self) -> int:
        return self.m_rel.n_cols

    def triple(self, ell):
        """(subject, object, relation column, weight) of local triple ``ell``."""
        return (int(self.m_subj.cols[ell]), int(self.m_obj.cols[ell]),
                int(self.m_rel.cols[ell]), float(self.m_rel.vals[ell]))


def reify(kb: TypedKb, relations=None) -> ReifiedKb:
    """Build the reified matrices for ``kb``, optionally restricted to some relations.

    With ``relations`` the relation columns are numbered in the given order;
    triples keep the KB's canonical order.
    """
    if relations is None:
        rel_ids = list(range(kb.n_relations))
    else:
        rel_ids = [kb.relation(r).id for r in relations]
    col_of = {rid: c for c, rid in enumerate(rel_ids)}
    offsets = kb.entity_offsets
    subj_g, obj_g, rel_c, w = [], [], [], []
    for rid in sorted(rel_ids):
        rel = kb.relations[rid]
        lo, hi = kb.triple_range(rid)
        subj_g.append(kb.subj[lo:hi] + offsets[rel.subj_type])
        obj_g.append(kb.obj[lo:hi] + offsets[rel.obj_type])
        rel_c.append(np.full(hi - lo, col_of[rid], dtype=np.int64))
        w.append(kb.weight[lo:hi])
    cat = (lambda a, dt: np.concatenate(a).astype(dt)) if subj_g else (lambda a, dt: np.zeros(0, dt))
    subj_g, obj_g = cat(subj_g, np.int64), cat(obj_g, np.int64)
    rel_c, w = cat(rel_c, np.int64), cat(w, np.float64)
    n_t, n_e = len(w), kb.n_entities
    ell = np.arange(n_t, dtype=np.int64)
    ones = np.ones(n_t)
    # one entry per row, so (ell, col) order is already row-major
    return ReifiedKb(
        m_subj=CooMatrix(n_t, n_e, ell, subj_g, ones),
        m_obj=CooMatrix(n_t, n_e, ell.copy(), obj_g, ones.copy()),
        m_rel=CooMatrix(n_t, len(rel_ids), ell.copy(), rel_c, w),
        relation_ids=tuple(rel_ids),
    )


def lift(kb: TypedKb, x: SetVec) -> np.ndarray:
    """Embed a typed entity-set vector into the global entity space."""
    if x.etype.is_relation:
        raise TypeMismatch("lift() takes entity sets; relation sets index m_rel columns directly")
    v = np.atleast_2d(x.values)
    out = np.zeros((v.shape[0], kb.n_entities))
    off = kb.entity_offsets[x.etype.id]
    out[:, off:off + x.etype.size] = v
    return out if x.batched else out[0]


def lower(kb: TypedKb, y, etype: EntityType) -> SetVec:
    """Project a global-space vector back onto one entity type."""
    off = kb.entity_offsets[kb.type(etype).id]
    y = np.asarray(y)
    return SetVec(kb.type(etype), y[..., off:off + kb.type(etype).size].copy())


def lift_relations(kb: TypedKb, r: SetVec, rkb: ReifiedKb) -> np.ndarray:
    """Map a relation-group set vector onto the ``m_rel`` columns of ``rkb``."""
    col_of = {rid: c for c, rid in enumerate(rkb.relation_ids)}
    v = np.atleast_2d(r.values)
    out = np.zeros((v.shape[0], rkb.n_relations))
    for rel in kb.group_relations(r.etype):
        if rel.id in col_of:
            out[:, col_of[rel.id]] = v[:, rel.slot]
        elif np.any(v[:, rel.slot]):
            raise IncompatibleRelations(f"relation {rel.name!r} is not part of this reified KB")
    return out if r.batched else out[0]


def _check_reified_inputs(X, R, rkb):
    if X.ndim != 2 or R.ndim != 2:
        raise DimensionMismatch("reified follow expects 2-d minibatches")
    if X.shape[0] != R.shape[0]:
        raise BatchMismatch(f"X has {X.shape[0]} rows but R has {R.shape[0]}")
    if X.shape[1] != rkb.n_entities:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, KB has {rkb.n_entities} entities")
    if R.shape[1] != rkb.n_relations:
        raise DimensionMismatch(f"R has {R.shape[1]} columns, KB has {rkb.n_relations} relations")


def follow_reified(X, R, rkb: ReifiedKb) -> np.ndarray:
    """``(X M_subj^T * R M_rel^T) M_obj`` over global entity/relation spaces."""
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X, R = X[None, :], np.atleast_2d(R)
    _check_reified_inputs(X, R, rkb)
    by_subj = dsmm(X, rkb.m_subj, transpose=True)
    meter.alloc(by_subj.size, "triples")
    by_rel = dsmm(R, rkb.m_rel, transpose=True)
    meter.alloc(by_rel.size, "triples")
    np.multiply(by_subj, by_rel, out=by_subj)
    meter.free(by_rel.size)
    del by_rel
    y = dsmm(by_subj, rkb.m_obj)
    meter.alloc(y.size, "dense")
    meter.free(by_subj.size)
    meter.free(y.size)
    return y[0] if squeeze else y
