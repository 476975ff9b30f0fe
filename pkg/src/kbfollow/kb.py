"""Typed symbolic knowledge bases and weighted-set encodings.

Entities are indexed densely (zero-based) within their type. Every relation
also lives as an entity of a synthetic type ``rel:<subj>-><obj>`` shared by
all relations with the same signature, so a set of type-compatible
relations encodes as an ordinary set vector over that type.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .coo import CooMatrix
from .errors import (
    DuplicateTriple,
    NegativeWeight,
    ParseError,
    TypeMismatch,
    UnknownName,
)


@dataclass(frozen=True, eq=False)
class EntityType:
    id: int
    name: str
    names: tuple[str, ...]
    is_relation: bool = False
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        index = {n: i for i, n in enumerate(self.names)}
        if len(index) != len(self.names):
            raise ValueError(f"duplicate entity names in type {self.name!r}")
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownName(f"{name!r} is not an entity of type {self.name!r}") from None

    def __contains__(self, name):
        return name in self._index

    def __repr__(self):
        return f"EntityType({self.id}, {self.name!r}, size={self.size})"


@dataclass(frozen=True)
class Relation:
    id: int
    name: str
    subj_type: int
    obj_type: int
    group: int  # type id of the relation-entity type for this signature
    slot: int  # index of this relation inside its group type


def relation_type_name(subj: str, obj: str) -> str:
    return f"rel:{subj}->{obj}"


class TypedKb:
    """A frozen typed KB.

    Triples are held as parallel arrays sorted by (relation, subject, object);
    entity indices are local to the subject/object type of the relation.
    """

    def __init__(self, entity_types, relation_types, relations, subj, rel, obj, weight):
        self.entity_types: list[EntityType] = list(entity_types)
        self.relation_types: list[EntityType] = list(relation_types)
        self.types: list[EntityType] = self.entity_types + self.relation_types
        self.relations: list[Relation] = list(relations)
        self.subj = subj
        self.rel = rel
        self.obj = obj
        self.weight = weight
        for a in (subj, rel, obj, weight):
            a.setflags(write=False)
        self._type_by_name = {t.name: t for t in self.types}
        self._rel_by_name = {r.name: r for r in self.relations}
        self._rel_bounds = np.searchsorted(rel, np.arange(len(self.relations) + 1))
        self._matrices: dict[int, CooMatrix] = {}

    @property
    def n_entities(self) -> int:
        return sum(t.size for t in self.entity_types)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_triples(self) -> int:
        return len(self.rel)

    @cached_property
    def entity_offsets(self) -> dict[int, int]:
        """Offset of each entity type inside the concatenated global entity space."""
        offsets, pos = {}, 0
        for t in self.entity_types:
            offsets[t.id] = pos
            pos += t.size
        return offsets

    def type(self, key) -> EntityType:
        if isinstance(key, EntityType):
            return key
        if isinstance(key, (int, np.integer)):
            return self.types[int(key)]
        try:
            return self._type_by_name[key]
        except KeyError:
            raise UnknownName(f"unknown type {key!r}") from None

    def relation(self, key) -> Relation:
        if isinstance(key, Relation):
            return key
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.relations):
                raise UnknownName(f"relation id {key} out of range")
            return self.relations[int(key)]
        try:
            return self._rel_by_name[key]
        except KeyError:
            raise UnknownName(f"unknown relation {key!r}") from None

    def group_relations(self, group) -> list[Relation]:
        gid = self.type(group).id
        return [r for r in self.relations if r.group == gid]

    def triple_range(self, r) -> tuple[int, int]:
        rid = self.relation(r).id
        return int(self._rel_bounds[rid]), int(self._rel_bounds[rid + 1])

    def relation_matrix(self, r) -> CooMatrix:
        rel = self.relation(r)
        m = self._matrices.get(rel.id)
        if m is None:
            lo, hi = self.triple_range(rel.id)
            shape = (self.types[rel.subj_type].size, self.types[rel.obj_type].size)
            # already sorted row-major within a relation
            m = CooMatrix(shape[0], shape[1], self.subj[lo:hi].copy(), self.obj[lo:hi].copy(),
                          self.weight[lo:hi].astype(np.float64))
            self._matrices[rel.id] = m
        return m

    def triples(self):
        """Yield (subj name, rel name, obj name, weight) in canonical order."""
        for s, r, o, w in zip(self.subj, self.rel, self.obj, self.weight):
            rel = self.relations[r]
            yield (self.types[rel.subj_type].names[s], rel.name, self.types[rel.obj_type].names[o], float(w))

    def __eq__(self, other):
        if not isinstance(other, TypedKb):
            return NotImplemented
        return (
            [(t.name, t.names, t.is_relation) for t in self.types]
            == [(t.name, t.names, t.is_relation) for t in other.types]
            and self.relations == other.relations
            and all(np.array_equal(a, b) for a, b in zip(
                (self.subj, self.rel, self.obj, self.weight),
                (other.subj, other.rel, other.obj, other.weight)))
        )

    def __repr__(self):
        return f"TypedKb(N_E={self.n_entities}, N_R={self.n_relations}, N_T={self.n_triples})"


def _type_names(decl):
    if len(decl) == 2:
        name, spec = decl
        if isinstance(spec, (int, np.integer)):
            return name, [f"{name}{i}" for i in range(int(spec))]
        return name, list(spec)
    name, size, names = decl
    names = list(names)
    if len(names) != size:
        raise ValueError(f"type {name!r} declares size {size} but lists {len(names)} names")
    return name, names


def build_kb(type_decls, relation_decls, triples) -> TypedKb:
    """Build a frozen KB from declarations and (subj, rel, obj[, weight]) triples.

    ``type_decls`` entries are ``(name, size)``, ``(name, names)`` or
    ``(name, size, names)``; a bare size gets names ``<type><i>``.
    """
    entity_types = []
    for decl in type_decls:
        name, names = _type_names(decl)
        if any(t.name == name for t in entity_types):
            raise ValueError(f"type {name!r} declared twice")
        entity_types.append(EntityType(len(entity_types), name, tuple(names)))
    by_name = {t.name: t for t in entity_types}

    signatures: dict[tuple[int, int], list[str]] = {}
    rel_specs = []
    for rname, st, ot in relation_decls:
        if st not in by_name:
            raise UnknownName(f"relation {rname!r}: unknown subject type {st!r}")
        if ot not in by_name:
            raise UnknownName(f"relation {rname!r}: unknown object type {ot!r}")
        if any(spec[0] == rname for spec in rel_specs):
            raise ValueError(f"relation {rname!r} declared twice")
        sig = (by_name[st].id, by_name[ot].id)
        signatures.setdefault(sig, []).append(rname)
        rel_specs.append((rname, sig))

    relation_types = []
    sig_type = {}
    tid = len(entity_types)
    for sig, names in signatures.items():
        tname = relation_type_name(entity_types[sig[0]].name, entity_types[sig[1]].name)
        relation_types.append(EntityType(tid, tname, tuple(names), is_relation=True))
        sig_type[sig] = relation_types[-1]
        tid += 1

    relations = []
    for rid, (rname, sig) in enumerate(rel_specs):
        gtype = sig_type[sig]
        relations.append(Relation(rid, rname, sig[0], sig[1], gtype.id, gtype.index(rname)))
    rel_by_name = {r.name: r for r in relations}

    seen: dict[tuple[int, int, int], float] = {}
    for t in triples:
        if len(t) == 3:
            s_name, r_name, o_name = t
            w = 1.0
        else:
            s_name, r_name, o_name, w = t
            w = float(w)
        rel = rel_by_name.get(r_name)
        if rel is None:
            raise UnknownName(f"unknown relation {r_name!r}")
        s = _resolve(entity_types, rel.subj_type, s_name, "subject", r_name)
        o = _resolve(entity_types, rel.obj_type, o_name, "object", r_name)
        if w < 0 or np.isnan(w):
            raise NegativeWeight(f"triple ({s_name}, {r_name}, {o_name}) has weight {w}")
        if w == 0:
            continue
        key = (rel.id, s, o)
        prev = seen.get(key)
        if prev is not None and prev != w:
            raise DuplicateTriple(f"triple ({s_name}, {r_name}, {o_name}) given weights {prev} and {w}")
        seen[key] = w

    keys = sorted(seen)
    arr = np.array(keys, dtype=np.int64).reshape(-1, 3)
    weight = np.array([seen[k] for k in keys], dtype=np.float64)
    return TypedKb(entity_types, relation_types, relations,
                   arr[:, 1].copy(), arr[:, 0].copy(), arr[:, 2].copy(), weight)


def _resolve(entity_types, type_id, name, role, rel_name):
    t = entity_types[type_id]
    if name in t:
        return t.index(name)
    for other in entity_types:
        if name in other:
            raise TypeMismatch(
                f"{role} {name!r} of {rel_name!r} has type {other.name!r}, expected {t.name!r}")
    raise UnknownName(f"unknown entity {name!r}")


# ---------------------------------------------------------------- set vectors

@dataclass(eq=False)
class SetVec:
    """Dense encoding of a weighted set of one type (row-stacked for minibatches)."""

    etype: EntityType
    values: np.ndarray

    @property
    def type_id(self) -> int:
        return self.etype.id

    @property
    def batched(self) -> bool:
        return self.values.ndim == 2

    def support(self) -> set[int]:
        if self.batched:
            raise ValueError("support() is defined for single vectors")
        return set(np.flatnonzero(self.values).tolist())

    def row(self, i) -> SetVec:
        return SetVec(self.etype, self.values[i])

    @classmethod
    def stack(cls, vecs) -> SetVec:
        vecs = list(vecs)
        etype = vecs[0].etype
        if any(v.etype is not etype for v in vecs):
            raise TypeMismatch("cannot stack set vectors of different types")
        return cls(etype, np.stack([v.values for v in vecs]))


# EntitySetVec and RelSetVec share one representation; the type says which.
EntitySetVec = RelSetVec = SetVec


def encode_set(kb: TypedKb, type_key, members) -> SetVec:
    """Encode ``members`` (names, (name, weight) pairs or a dict) as a set vector."""
    etype = kb.type(type_key)
    if isinstance(members, dict):
        members = members.items()
    v = np.zeros(etype.size)
    for m in members:
        name, w = (m, 1.0) if isinstance(m, str) else m
        w = float(w)
        if w < 0 or np.isnan(w):
            raise NegativeWeight(f"member {name!r} has weight {w}")
        if name not in etype:
            if any(name in t for t in kb.types):
                raise TypeMismatch(f"{name!r} is not of type {etype.name!r}")
            raise UnknownName(f"unknown entity {name!r}")
        v[etype.index(name)] += w
    return SetVec(etype, v)


def decode_topk(v: SetVec, k: int):
    """The ``k`` heaviest members as (name, weight), ties by ascending index.

    Zero-weight entries are never returned. Batched input yields one list per row.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if v.batched:
        return [decode_topk(v.row(i), k) for i in range(v.values.shape[0])]
    vals = v.values
    order = np.argsort(-vals, kind="stable")[:k]
    return [(v.etype.names[i], float(vals[i])) for i in order if vals[i] != 0]


def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Row-wise top-k column indices, ties broken by ascending index."""
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


# ---------------------------------------------------------------- TSV format

def save_kb_tsv(kb: TypedKb, path) -> None:
    lines = []
    for t in kb.entity_types:
        lines.append(" ".join(["#type", t.name, str(t.size), *t.names]))
    for r in kb.relations:
        lines.append(f"#rel {r.name} {kb.types[r.subj_type].name} {kb.types[r.obj_type].name}")
    for s, r, o, w in kb.triples():
        lines.append(f"{s}\t{r}\t{o}\t{w!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_kb_tsv(path) -> TypedKb:
    type_decls, rel_decls, triples = [], [], []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("//"):
                continue
            if line.startswith("#"):
                parts = line.split()
                if parts[0] == "#type":
                    if len(parts) < 3:
                        raise ParseError(lineno, "expected '#type <name> <size> [names...]'")
                    try:
                        size = int(parts[2])
                    except ValueError:
                        raise ParseError(lineno, f"bad type size {parts[2]!r}") from None
                    names = parts[3:]
                    if names and len(names) != size:
                        raise ParseError(lineno, f"type {parts[1]!r} has size {size} but {len(names)} names")
                    type_decls.append((parts[1], size, names) if names else (parts[1], size))
                elif parts[0] == "#rel":
                    if len(parts) != 4:
                        raise ParseError(lineno, "expected '#rel <name> <subj_type> <obj_type>'")
                    if triples:
                        raise ParseError(lineno, "declarations must precede triples")
                    rel_decls.append(tuple(parts[1:]))
                else:
                    raise ParseError(lineno, f"unknown directive {parts[0]!r}")
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise ParseError(lineno, f"expected 3 or 4 tab-separated fields, got {len(fields)}")
            w = 1.0
            if len(fields) == 4:
                try:
                    w = float(fields[3])
                except ValueError:
                    raise ParseError(lineno, f"bad weight {fields[3]!r}") from None
            triples.append((fields[0], fields[1], fields[2], w))
    return build_kb(type_decls, rel_decls, triples)
