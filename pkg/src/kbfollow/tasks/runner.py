"""Config-driven setup of each task: data, model construction and checkpoint reload.

A ``train`` config section looks like::

    {"task": "chain", "model": {...model kwargs...}, "optim": {...TrainConfig...},
     "data": {...task data options...}, "checkpoint": "model.ckpt",
     "metrics_log": "metrics.jsonl"}

Synthetic tasks regenerate their KB from ``data`` and the seed, so ``eval``
with the same config sees the same KB as ``train``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

from ..autodiff import load_checkpoint, save_checkpoint
from ..errors import ConfigError
from ..follow import reify
from .grid import GridSpec, gen_grid
from .models import ChainModel, FixedHopModel, KbcModel, TemplateQaModel, Vocab
from .questions import gen_chain_questions, load_questions
from .synthetic import (
    FAMILY_QUERIES,
    gen_cvt_kb,
    gen_cvt_questions,
    gen_family_kb,
    gen_kbc_examples,
    gen_movie_kb,
    gen_movie_questions,
)
from .training import TrainConfig, evaluate, train

TASKS = ("chain", "template", "fixed_hop", "kbc")


@dataclass
class TaskData:
    kb: object
    train: list
    test: list
    batch_kwargs: dict
    build: object  # callable(params=None, **model_kwargs) -> model


def _model_kwargs(section, allowed):
    kw = dict(section or {})
    bad = set(kw) - set(allowed)
    if bad:
        raise ConfigError(f"unknown model keys: {sorted(bad)}")
    return kw


def _vocab_from(meta, examples):
    if meta is not None:
        return Vocab(meta["vocab"])
    return Vocab([t for e in examples for t in e.tokens])


def prepare(cfg: dict, seed: int, meta=None, shards=1) -> TaskData:
    task = cfg.get("task")
    if task not in TASKS:
        raise ConfigError(f"train.task must be one of {TASKS}, got {task!r}")
    data = dict(cfg.get("data") or {})
    model_cfg = cfg.get("model") or {}
    if task == "chain":
        spec = GridSpec(int(data.get("n", 10)))
        kb = gen_grid(spec)
        if data.get("train_path"):
            train_q = load_questions(data["train_path"])
            test_q = load_questions(data["test_path"])
        else:
            train_q = gen_chain_questions(spec, int(data.get("train_count", 36000)), seed=seed)
            test_q = gen_chain_questions(spec, int(data.get("test_count", 1200)), seed=seed + 1)
        rkb = reify(kb)
        vocab = _vocab_from(meta, train_q)
        kw = _model_kwargs(model_cfg, ("emb_dim", "hidden", "max_hops", "strategy", "rel_activation",
                                       "reverse_input"))
        cell_index = {name: i for i, name in enumerate(kb.type("cell").names)}

        def build(params=None, dtype="float32"):
            return ChainModel(vocab, rkb, seed=seed, params=params, dtype=dtype, shards=shards, **kw)

        return TaskData(kb, train_q, test_q, {"cell_index": cell_index}, build)
    if task == "template":
        kb, groups = gen_cvt_kb(seed=seed, **data.get("kb", {}))
        tr, te = gen_cvt_questions(kb, int(data.get("count", 3000)), seed=seed + 1, test_fraction=0.2)
        vocab = _vocab_from(meta, tr)
        kw = _model_kwargs(model_cfg, ("emb_dim", "strategy", "rel_activation"))
        return TaskData(kb, tr, te, {},
                        lambda params=None, dtype="float32": TemplateQaModel(
                            vocab, kb, groups, seed=seed, params=params, dtype=dtype, **kw))
    if task == "fixed_hop":
        kb = gen_movie_kb(seed=seed, **data.get("kb", {}))
        hops = int(model_cfg.get("hops", data.get("hops", 1)))
        tr, te = gen_movie_questions(kb, hops, int(data.get("count", 2000)), seed=seed + 1, test_fraction=0.2)
        vocab = _vocab_from(meta, tr)
        rkb = reify(kb)
        kw = _model_kwargs({k: v for k, v in model_cfg.items() if k != "hops"},
                           ("emb_dim", "strategy", "rel_activation"))
        return TaskData(kb, tr, te, {},
                        lambda params=None, dtype="float32": FixedHopModel(
                            vocab, rkb, hops, seed=seed, params=params, dtype=dtype, **kw))
    kb = gen_family_kb(seed=seed, **data.get("kb", {}))
    tr, te = gen_kbc_examples(kb, seed=seed + 1)
    rkb = reify(kb)
    kw = _model_kwargs(model_cfg, ("chains", "steps", "emb_dim", "strategy", "rel_activation"))
    return TaskData(kb, tr, te, {},
                    lambda params=None, dtype="float32": KbcModel(
                        list(FAMILY_QUERIES), rkb, seed=seed, params=params, dtype=dtype, **kw))


def run_train(cfg: dict, seed: int, shards=1):
    """Train per ``cfg``; saves the checkpoint and returns (model, history, test metrics)."""
    td = prepare(cfg, seed, shards=shards)
    model = td.build()
    optim = TrainConfig.from_dict({**(cfg.get("optim") or {}), "seed": seed,
                                   "log_path": cfg.get("metrics_log")})
    if optim.log_path and os.path.exists(optim.log_path):
        os.remove(optim.log_path)
    history = train(model, td.train, optim, eval_examples=td.test, batch_kwargs=td.batch_kwargs)
    if cfg.get("checkpoint"):
        save_checkpoint(model.params, cfg["checkpoint"], meta={**model.meta(), "task": cfg["task"], "seed": seed})
    return model, history, evaluate(model, td.test, batch_kwargs=td.batch_kwargs)


def run_eval(cfg: dict, seed: int, checkpoint=None, split="test"):
    path = checkpoint or cfg.get("checkpoint")
    if not path:
        raise ConfigError("no checkpoint given")
    params, meta = load_checkpoint(path)
    td = prepare(cfg, meta.get("seed", seed), meta=meta)
    model = td.build(params=params)
    examples = td.test if split == "test" else td.train
    return evaluate(model, examples, batch_kwargs=td.batch_kwargs)
