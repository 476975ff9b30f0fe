"""Grid navigation questions: "from <anchor> go <dir> (then <dir>)*"."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, cell_name, step

WORD_TO_REL = {"up": "north", "down": "south", "left": "west", "right": "east"}
REL_TO_WORD = {v: k for k, v in WORD_TO_REL.items()}
ANCHORS = (
    "center", "top left", "top right", "bottom left", "bottom right",
    "center left", "center right", "top center", "bottom center",
)
MAX_HOPS = 10


def anchor_cell(n, anchor):
    mid = n // 2
    rows = {"top": 0, "center": mid, "bottom": n - 1}
    cols = {"left": 0, "center": mid, "right": n - 1}
    words = anchor.split()
    if len(words) == 1:
        words = words * 2
    return (rows[words[0]], cols[words[1]])


def walk(n, start, directions):
    """Follow ``directions`` from ``start``; None if any move leaves the grid."""
    cell = start
    for d in directions:
        cell = step(n, cell, d)
        if cell is None:
            return None
    return cell


@dataclass
class ChainQuestion:
    tokens: list[str]
    start: str
    directions: list[str]
    answer: str
    hops: int = field(init=False)

    def __post_init__(self):
        self.hops = len(self.directions)

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "start": self.start, "answers": [self.answer], "hops": self.hops}

    @classmethod
    def from_json(cls, d) -> ChainQuestion:
        tokens = list(d["tokens"])
        dirs = [WORD_TO_REL[t] for t in tokens[tokens.index("go") + 1:] if t != "then"]
        if len(dirs) != d["hops"]:
            raise ValueError(f"hop count {d['hops']} disagrees with tokens {tokens}")
        return cls(tokens, d["start"], dirs, d["answers"][0])


def question_tokens(anchor, directions):
    words = ["from", *anchor.split(), "go", REL_TO_WORD[directions[0]]]
    for d in directions[1:]:
        words += ["then", REL_TO_WORD[d]]
    return words


def parse_question(tokens, n):
    """Brute-force reading of a question: (start cell, relation list)."""
    go = tokens.index("go")
    anchor = " ".join(tokens[1:go])
    dirs = [WORD_TO_REL[t] for t in tokens[go + 1:] if t != "then"]
    return anchor_cell(n, anchor), dirs


def gen_chain_questions(spec: GridSpec, count, hop_range=(1, MAX_HOPS), seed=0) -> list[ChainQuestion]:
    """Random in-bounds walks from the named anchors, deterministic under ``seed``.

    Each move is uniform over the directions that keep the walk on the grid.
    """
    lo, hi = hop_range
    if not 1 <= lo <= hi <= MAX_HOPS:
        raise ValueError(f"hop range {hop_range} outside [1, {MAX_HOPS}]")
    n = spec.n
    rng = np.random.default_rng(seed)
    order = ("north", "south", "east", "west")
    out = []
    for _ in range(count):
        hops = int(rng.integers(lo, hi + 1))
        anchor = ANCHORS[int(rng.integers(len(ANCHORS)))]
        cell = start = anchor_cell(n, anchor)
        dirs = []
        for _ in range(hops):
            ok = [d for d in order if step(n, cell, d) is not None]
            d = ok[int(rng.integers(len(ok)))]
            dirs.append(d)
            cell = step(n, cell, d)
        out.append(ChainQuestion(question_tokens(anchor, dirs), cell_name(*start), dirs, cell_name(*cell)))
    return out


def save_questions(questions, path):
    with open(path, "w", encoding="utf-8") as f:
        for q in questions:
            f.write(json.dumps(q.to_json()) + "\n")


def load_questions(path) -> list[ChainQuestion]:
    with open(path, encoding="utf-8") as f:
        return [ChainQuestion.from_json(json.loads(line)) for line in f if line.strip()]
