"""Throughput harness for the two-hop probe ``follow(follow(X, R), R)`` on grid KBs.

X is a batch of random one-hot cells and R weights every relation equally.
Relation counts are varied by reassigning grid triples round-robin to
``m`` invented relations. Each strategy is first checked against naive
mixing on a probe input; timing starts only after that check passes.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import meter
from .errors import ConfigError, KbFollowError
from .follow import follow_late, follow_naive, follow_reified, reify
from .kb import SetVec
from .shard import follow_sharded, partition_reified
from .tasks.grid import GridSpec, gen_grid

log = logging.getLogger(__name__)

STRATEGIES = ("naive", "late", "reified", "reified-sharded")
CSV_FIELDS = ("strategy", "n", "m", "b", "qps", "peak_bytes", "seconds")


class GuardFailure(KbFollowError):
    """A strategy disagreed with naive mixing on the probe input."""


@dataclass
class BenchConfig:
    n: int = 64
    relation_counts: list[int] = field(default_factory=lambda: [4, 20, 100, 1000])
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    batch_size: int = 128
    repetitions: int = 3
    warmup: int = 3
    shards: int = 2
    workers: int | None = None
    naive_queries: int = 16  # naive is unbatched; it times this many single queries per repetition
    probe_rows: int = 2
    seed: int = 0
    csv: str | None = None

    def validate(self):
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not self.relation_counts or any(m < 1 for m in self.relation_counts):
            raise ConfigError("relation counts must be >= 1")
        bad = set(self.strategies) - set(STRATEGIES)
        if bad or not self.strategies:
            raise ConfigError(f"unknown strategies {sorted(bad)}; choose from {STRATEGIES}")
        for key in ("batch_size", "repetitions", "shards", "naive_queries", "probe_rows"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")
        return self

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown bench keys: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass
class BenchResult:
    strategy: str
    n: int
    m: int
    b: int
    qps: float
    peak_bytes: int
    seconds: float
    allocated_elements: int = 0

    def row(self):
        return {k: getattr(self, k) for k in CSV_FIELDS}


class _Probe:
    """Everything one (n, m) setting needs, built outside the timed region."""

    def __init__(self, n, m, b, shards, workers, seed):
        self.kb = gen_grid(GridSpec(n, m))
        self.cell = self.kb.type("cell")
        self.rel_type = self.kb.relation_types[0]
        rng = np.random.default_rng(seed)
        self.X = np.zeros((b, n * n))
        self.X[np.arange(b), rng.integers(n * n, size=b)] = 1.0
        self.R = np.full((b, m), 1.0 / m)
        self.rkb = reify(self.kb)
        self.shards = min(shards, self.rkb.n_triples)
        self.skb = partition_reified(self.rkb, self.shards)
        self.workers = workers

    def run(self, strategy, rows=None):
        X = self.X if rows is None else self.X[:rows]
        R = self.R if rows is None else self.R[:rows]
        if strategy == "naive":
            out = np.zeros_like(X)
            for i in range(X.shape[0]):
                x, r = SetVec(self.cell, X[i]), SetVec(self.rel_type, R[i])
                out[i] = follow_naive(follow_naive(x, r, self.kb), r, self.kb).values
            return out
        if strategy == "late":
            xs, rs = SetVec(self.cell, X), SetVec(self.rel_type, R)
            return follow_late(follow_late(xs, rs, self.kb), rs, self.kb).values
        if strategy == "reified":
            return follow_reified(follow_reified(X, R, self.rkb), R, self.rkb)
        return follow_sharded(follow_sharded(X, R, self.skb, self.workers), R, self.skb, self.workers)


def run_bench(config: BenchConfig) -> list[BenchResult]:
    """Time each (strategy, m) pair; writes ``config.csv`` when set."""
    config.validate()
    results = []
    for m in config.relation_counts:
        probe = _Probe(config.n, m, config.batch_size, config.shards, config.workers, config.seed)
        reference = probe.run("naive", config.probe_rows)
        for strategy in config.strategies:
            got = probe.run(strategy, config.probe_rows)
            err = float(np.abs(got - reference).max())
            if err > 1e-9:
                raise GuardFailure(f"{strategy} differs from naive by {err:.3g} at m={m}")
            rows = min(config.batch_size, config.naive_queries) if strategy == "naive" else None
            queries = rows if rows is not None else config.batch_size
            for _ in range(config.warmup):
                probe.run(strategy, rows)
            t0 = time.perf_counter()
            for _ in range(config.repetitions):
                probe.run(strategy, rows)
            seconds = time.perf_counter() - t0
            with meter.metered() as mt:
                probe.run(strategy, rows)
            res = BenchResult(strategy, config.n, m, config.batch_size,
                              config.repetitions * queries / seconds, mt.peak_bytes, seconds, mt.allocated)
            log.info("%s n=%d m=%d qps=%.1f", strategy, config.n, m, res.qps)
            results.append(res)
    if config.csv:
        write_csv(results, config.csv)
    return results


def write_csv(results, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in results:
            w.writerow(r.row())


def read_csv(path) -> list[BenchResult]:
    with open(path, newline="", encoding="utf-8") as f:
        return [BenchResult(r["strategy"], int(r["n"]), int(r["m"]), int(r["b"]), float(r["qps"]),
                            int(r["peak_bytes"]), float(r["seconds"])) for r in csv.DictReader(f)]


def crossover(results, fast="reified", slow="late"):
    """Smallest measured m at which ``fast`` out-runs ``slow`` (None if never)."""
    qps = {(r.strategy, r.m): r.qps for r in results}
    for m in sorted({r.m for r in results}):
        if (fast, m) in qps and (slow, m) in qps and qps[(fast, m)] > qps[(slow, m)]:
            return m
    return None


def allocation_profile(n, relation_counts, b=128, strategies=("late", "reified"), seed=0):
    """Intermediate elements allocated by one two-hop probe, per strategy and m."""
    out = {s: [] for s in strategies}
    for m in relation_counts:
        probe = _Probe(n, m, b, 1, 1, seed)
        for s in strategies:
            with meter.metered() as mt:
                probe.run(s)
            out[s].append((m, mt.allocated, mt.peak))
    return out
