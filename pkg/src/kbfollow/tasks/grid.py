"""Synthetic n-by-n grid KBs.

Cell ``c{i}_{j}`` sits at row ``i`` (0 = top) and column ``j`` (0 = left).
north/south move one row up/down, west/east one column left/right.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..kb import TypedKb, build_kb

DIRECTIONS = {"north": (-1, 0), "south": (1, 0), "east": (0, 1), "west": (0, -1)}
RELATIONS = ("north", "south", "east", "west")


@dataclass(frozen=True)
class GridSpec:
    n: int
    m: int | None = None  # invented relation count (benchmark mode)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid side n must be >= 2")
        if self.m is not None and self.m < 1:
            raise ValueError("relation count m must be >= 1")


def cell_name(i, j) -> str:
    return f"c{i}_{j}"


def cell_index(n, i, j) -> int:
    return i * n + j


def step(n, cell, direction):
    """Neighbour of ``cell`` = (row, col) in ``direction``, or None off the grid."""
    di, dj = DIRECTIONS[direction]
    i, j = cell[0] + di, cell[1] + dj
    if 0 <= i < n and 0 <= j < n:
        return (i, j)
    return None


def grid_edges(n):
    """Directed (relation, subj cell, obj cell) edges in canonical triple order."""
    edges = []
    for rel in RELATIONS:
        for i in range(n):
            for j in range(n):
                nb = step(n, (i, j), rel)
                if nb is not None:
                    edges.append((rel, (i, j), nb))
    return edges


def gen_grid(spec: GridSpec) -> TypedKb:
    """Grid KB with n^2 cells and 4n(n-1) directed adjacency triples.

    In benchmark mode (``spec.m``) the i-th triple of the four-relation grid
    is reassigned to invented relation ``r{i mod m}``.
    """
    n = spec.n
    names = [cell_name(i, j) for i in range(n) for j in range(n)]
    edges = grid_edges(n)
    if spec.m is None:
        rels = list(RELATIONS)
        triples = [(cell_name(*s), r, cell_name(*o), 1.0) for r, s, o in edges]
    else:
        rels = [f"r{k}" for k in range(spec.m)]
        triples = [(cell_name(*s), rels[ell % spec.m], cell_name(*o), 1.0)
                   for ell, (_, s, o) in enumerate(edges)]
    return build_kb([("cell", n * n, names)], [(r, "cell", "cell") for r in rels], triples)
