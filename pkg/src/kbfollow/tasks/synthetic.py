"""Synthetic KBs and question sets with known ground truth.

* :func:`gen_cvt_kb` -- ordinary entities plus hub "event" entities; 2-hop
  answers are reachable only through a hub.
* :func:`gen_movie_kb` -- movies, people, genres and years with inverse
  relations, for fixed-hop questions.
* :func:`gen_family_kb` -- parent/child/spouse facts; composed query
  relations (grandparent, ...) are withheld from the KB.

All answers come from explicit traversal of the generated facts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kb import TypedKb, build_kb


@dataclass
class QaExample:
    tokens: list[str]
    entities: list[int]  # global indices of the question entities
    answers: list[int]
    hops: int
    path: tuple[str, ...] = ()


@dataclass
class KbcExample:
    query: str
    start: int
    answers: list[int]


def global_index(kb: TypedKb, type_name, name) -> int:
    t = kb.type(type_name)
    return kb.entity_offsets[t.id] + t.index(name)


def neighbors(kb: TypedKb, entities, relation_names):
    """Brute-force R-neighbours of a set of global entity indices."""
    out = set()
    ents = set(entities)
    offs = kb.entity_offsets
    for rname in relation_names:
        rel = kb.relation(rname)
        lo, hi = kb.triple_range(rel.id)
        for s, o in zip(kb.subj[lo:hi], kb.obj[lo:hi]):
            if int(s) + offs[rel.subj_type] in ents:
                out.add(int(o) + offs[rel.obj_type])
    return out


def traverse(kb: TypedKb, entities, path):
    """Nested neighbourhoods along a path of relation-name groups."""
    cur = set(entities)
    for step in path:
        cur = neighbors(kb, cur, [step] if isinstance(step, str) else step)
    return cur


def _split(examples, test_fraction, rng):
    order = rng.permutation(len(examples))
    n_test = int(round(len(examples) * test_fraction))
    return [examples[i] for i in order[n_test:]], [examples[i] for i in order[:n_test]]


# ---------------------------------------------------------------- hub-node (CVT) KB

CVT_GROUPS = {
    "E->E": ["directed_by", "written_by", "born_in"],
    "E->CVT": ["release_event", "award_event"],
    "CVT->E": ["release_date", "release_region", "award_name", "award_year"],
}

_CVT_TEMPLATES = {
    ("directed_by",): [["who", "directed", "this", "film"], ["name", "the", "director", "of", "the", "movie"]],
    ("written_by",): [["who", "wrote", "this", "film"], ["name", "the", "writer", "of", "the", "movie"]],
    ("born_in",): [["where", "was", "this", "person", "born"], ["what", "is", "the", "birthplace", "of", "this", "person"]],
    ("release_event", "release_date"): [["when", "was", "this", "film", "released"], ["what", "is", "the", "release", "date", "of", "the", "movie"]],
    ("release_event", "release_region"): [["where", "was", "this", "film", "released"], ["in", "which", "region", "did", "the", "movie", "open"]],
    ("award_event", "award_name"): [["what", "award", "did", "this", "person", "win"], ["which", "prize", "was", "given", "to", "this", "person"]],
    ("award_event", "award_year"): [["when", "did", "this", "person", "win", "an", "award"], ["in", "what", "year", "was", "this", "person", "honored"]],
}
_FILLER = ["please", "tell", "me", "exactly", "quickly", "now"]


def gen_cvt_kb(n_films=60, n_people=60, n_places=20, n_dates=30, n_awards=10, seed=0):
    """KB with ordinary entities (type ``entity``) and event hubs (type ``cvt``).

    Returns (kb, groups) where ``groups`` tags each relation with its template role.
    """
    rng = np.random.default_rng(seed)
    films = [f"film{i}" for i in range(n_films)]
    people = [f"person{i}" for i in range(n_people)]
    places = [f"place{i}" for i in range(n_places)]
    dates = [f"date{i}" for i in range(n_dates)]
    awards = [f"award{i}" for i in range(n_awards)]
    triples, cvts = [], []

    def pick(seq):
        return seq[int(rng.integers(len(seq)))]

    for f in films:
        triples.append((f, "directed_by", pick(people)))
        for w in rng.choice(people, size=int(rng.integers(1, 3)), replace=False):
            triples.append((f, "written_by", str(w)))
        for _ in range(int(rng.integers(1, 3))):
            ev = f"release{len(cvts)}"
            cvts.append(ev)
            triples += [(f, "release_event", ev), (ev, "release_date", pick(dates)),
                        (ev, "release_region", pick(places))]
    for p in people:
        triples.append((p, "born_in", pick(places)))
        for _ in range(int(rng.integers(1, 3))):
            ev = f"award_ev{len(cvts)}"
            cvts.append(ev)
            triples += [(p, "award_event", ev), (ev, "award_name", pick(awards)),
                        (ev, "award_year", pick(dates))]
    entities = films + people + places + dates + awards
    sig = {"E->E": ("entity", "entity"), "E->CVT": ("entity", "cvt"), "CVT->E": ("cvt", "entity")}
    rel_decls = [(r, *sig[g]) for g, rels in CVT_GROUPS.items() for r in rels]
    kb = build_kb([("entity", len(entities), entities), ("cvt", len(cvts), cvts)], rel_decls, triples)
    return kb, {g: list(rels) for g, rels in CVT_GROUPS.items()}


def gen_cvt_questions(kb: TypedKb, count, seed=0, test_fraction=0.0):
    """Mixed 1-hop / 2-hop questions; the question entity is given, not named in the text."""
    rng = np.random.default_rng(seed)
    subjects = {"film": [n for n in kb.type("entity").names if n.startswith("film")],
                "person": [n for n in kb.type("entity").names if n.startswith("person")]}
    paths = list(_CVT_TEMPLATES)
    out = []
    for _ in range(count):
        path = paths[int(rng.integers(len(paths)))]
        pool = subjects["film"] if path[0] in ("directed_by", "written_by", "release_event") else subjects["person"]
        name = pool[int(rng.integers(len(pool)))]
        x = global_index(kb, "entity", name)
        answers = sorted(traverse(kb, [x], path))
        variants = _CVT_TEMPLATES[path]
        tokens = list(variants[int(rng.integers(len(variants)))])
        if rng.random() < 0.5:
            tokens.insert(int(rng.integers(len(tokens) + 1)), _FILLER[int(rng.integers(len(_FILLER)))])
        out.append(QaExample(tokens, [x], answers, len(path), path))
    if test_fraction:
        return _split(out, test_fraction, rng)
    return out


# ---------------------------------------------------------------- movie KB

_MOVIE_RELATIONS = [
    ("directed_by", "movie", "person"), ("written_by", "movie", "person"), ("starred_actors", "movie", "person"),
    ("has_genre", "movie", "genre"), ("release_year", "movie", "year"),
    ("directed", "person", "movie"), ("wrote", "person", "movie"), ("acted_in", "person", "movie"),
    ("genre_of", "genre", "movie"), ("year_of", "year", "movie"),
]
_INVERSE = {"directed_by": "directed", "written_by": "wrote", "starred_actors": "acted_in",
            "has_genre": "genre_of", "release_year": "year_of"}
_WORDS = {
    "directed_by": ["directed", "by"], "written_by": ["written", "by"], "starred_actors": ["starring"],
    "has_genre": ["genre", "of"], "release_year": ["release", "year", "of"], "directed": ["films", "directed", "by"],
    "wrote": ["films", "written", "by"], "acted_in": ["films", "starring"], "genre_of": ["films", "in", "genre"],
    "year_of": ["films", "released", "in"],
}
_SUBJECT_TYPE = {name: st for name, st, _ in _MOVIE_RELATIONS}


def gen_movie_kb(n_movies=80, n_people=60, n_genres=8, n_years=15, seed=0) -> TypedKb:
    rng = np.random.default_rng(seed)
    movies = [f"movie{i}" for i in range(n_movies)]
    people = [f"person{i}" for i in range(n_people)]
    genres = [f"genre{i}" for i in range(n_genres)]
    years = [f"year{i}" for i in range(n_years)]
    triples = []
    for m in movies:
        facts = [("directed_by", [str(rng.choice(people))]),
                 ("written_by", [str(p) for p in rng.choice(people, size=int(rng.integers(1, 3)), replace=False)]),
                 ("starred_actors", [str(p) for p in rng.choice(people, size=int(rng.integers(1, 4)), replace=False)]),
                 ("has_genre", [str(rng.choice(genres))]),
                 ("release_year", [str(rng.choice(years))])]
        for rel, objs in facts:
            for o in objs:
                triples += [(m, rel, o), (o, _INVERSE[rel], m)]
    return build_kb([("movie", movies), ("person", people), ("genre", genres), ("year", years)],
                    _MOVIE_RELATIONS, triples)


def movie_paths(hops):
    """Type-consistent relation paths of the given length starting from a movie or person."""
    out = []

    def extend(path, cur_type):
        if len(path) == hops:
            out.append(tuple(path))
            return
        for name, st, ot in _MOVIE_RELATIONS:
            if st == cur_type and (not path or _INVERSE.get(path[-1]) != name and _INVERSE.get(name) != path[-1]):
                extend(path + [name], ot)

    for start in ("movie", "person"):
        extend([], start)
    return out


def gen_movie_questions(kb: TypedKb, hops, count, seed=0, test_fraction=0.0):
    rng = np.random.default_rng(seed)
    paths = movie_paths(hops)
    out = []
    while len(out) < count:
        path = paths[int(rng.integers(len(paths)))]
        st = _SUBJECT_TYPE[path[0]]
        names = kb.type(st).names
        x = global_index(kb, st, names[int(rng.integers(len(names)))])
        answers = traverse(kb, [x], path)
        answers.discard(x)
        if not answers:
            continue
        tokens = ["which", "entities", "are"] + [w for rel in reversed(path) for w in _WORDS[rel]] + ["this", st]
        out.append(QaExample(tokens, [x], sorted(answers), hops, path))
    if test_fraction:
        return _split(out, test_fraction, rng)
    return out


# ---------------------------------------------------------------- family KB

FAMILY_QUERIES = {
    "grandparent": ("parent", "parent"),
    "grandchild": ("child", "child"),
    "parent_copy": ("parent",),
}


def gen_family_kb(generations=4, founders=12, max_children=3, seed=0) -> TypedKb:
    """Couples per generation; each child marries a newcomer with no recorded parents."""
    rng = np.random.default_rng(seed)
    people, triples = [], []

    def person():
        name = f"p{len(people)}"
        people.append(name)
        return name

    couples = []
    for _ in range(founders // 2):
        a, b = person(), person()
        couples.append((a, b))
    for _ in range(generations - 1):
        nxt = []
        for a, b in couples:
            for _ in range(int(rng.integers(1, max_children + 1))):
                c = person()
                triples += [(c, "parent", a), (c, "parent", b), (a, "child", c), (b, "child", c)]
                spouse = person()
                nxt.append((c, spouse))
        for a, b in couples:
            triples += [(a, "spouse", b), (b, "spouse", a)]
        couples = nxt
    for a, b in couples:
        triples += [(a, "spouse", b), (b, "spouse", a)]
    rels = [("parent", "person", "person"), ("child", "person", "person"), ("spouse", "person", "person")]
    return build_kb([("person", people)], rels, triples)


def gen_kbc_examples(kb: TypedKb, queries=None, test_fraction=0.3, seed=0):
    """(train, test) queries for withheld composed relations, split by start entity."""
    queries = queries or FAMILY_QUERIES
    rng = np.random.default_rng(seed)
    names = kb.type("person").names
    starts = rng.permutation(len(names))
    n_test = int(round(len(names) * test_fraction))
    test_starts = set(starts[:n_test].tolist())
    train, test = [], []
    for q, path in queries.items():
        for i in range(len(names)):
            x = global_index(kb, "person", names[i])
            answers = traverse(kb, [x], path)
            if answers:
                (test if i in test_starts else train).append(KbcExample(q, x, sorted(answers)))
    return train, test
