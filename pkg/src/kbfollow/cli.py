"""``kbfollow`` command line.

Every subcommand takes ``--config file.json`` (optional for ``follow``) and
``--seed``. A seed on the command line overrides ``"seed"`` in the config.
Exit status: 0 on success, 1 on unreadable files or malformed config, 2 on
invalid arguments or values.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import ConfigError, KbFollowError, ParseError

log = logging.getLogger("kbfollow")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


class _IoError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except OSError as e:
        raise _IoError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise _IoError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise _IoError(f"config {path} must hold a JSON object")
    return cfg


def _section(cfg, name, required=True):
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"config has no {name!r} section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


def _out_path(sec, key="out"):
    path = sec.get(key)
    if not path:
        raise ConfigError(f"missing output path {key!r}")
    return path


# ---------------------------------------------------------------- subcommands

def cmd_gen_grid(args, cfg, seed):
    from .kb import save_kb_tsv
    from .tasks.grid import GridSpec, gen_grid

    sec = _section(cfg, "grid")
    kb = gen_grid(GridSpec(int(sec.get("n", 10)), sec.get("m")))
    path = _out_path(sec)
    save_kb_tsv(kb, path)
    print(f"wrote {kb.n_triples} triples over {kb.n_relations} relations to {path}")


def cmd_gen_questions(args, cfg, seed):
    from .tasks.grid import GridSpec
    from .tasks.questions import gen_chain_questions, save_questions

    sec = _section(cfg, "questions")
    hop_range = (int(sec.get("hop_min", 1)), int(sec.get("hop_max", 10)))
    if not 1 <= hop_range[0] <= hop_range[1]:
        raise ConfigError("need 1 <= hop_min <= hop_max")
    qs = gen_chain_questions(GridSpec(int(sec.get("n", 10))), int(sec.get("count", 1000)), hop_range, seed=seed)
    path = _out_path(sec)
    save_questions(qs, path)
    print(f"wrote {len(qs)} questions to {path}")


def cmd_bench(args, cfg, seed):
    from .bench import BenchConfig, crossover, run_bench

    sec = dict(_section(cfg, "bench"))
    sec["seed"] = seed
    if "shards" in cfg and "shards" not in sec:
        sec["shards"] = cfg["shards"]
    conf = BenchConfig.from_dict(sec)
    results = run_bench(conf)
    for r in results:
        print(f"{r.strategy:16s} m={r.m:<5d} qps={r.qps:12.1f} peak_bytes={r.peak_bytes}")
    m = crossover(results)
    print(f"reified faster than late from m={m}" if m is not None else "reified never faster than late")
    if conf.csv:
        print(f"wrote {conf.csv}")


def cmd_train(args, cfg, seed):
    from .tasks.runner import run_train

    sec = _section(cfg, "train")
    _, history, metrics = run_train(sec, seed, shards=int(cfg.get("shards", 1)))
    print(json.dumps({"epochs": len(history), **metrics}))


def cmd_eval(args, cfg, seed):
    from .tasks.runner import run_eval

    sec = _section(cfg, "train")
    ev = _section(cfg, "eval", required=False)
    metrics = run_eval(sec, seed, checkpoint=args.checkpoint or ev.get("checkpoint"), split=ev.get("split", "test"))
    print(json.dumps(metrics))
    if ev.get("out"):
        with open(ev["out"], "w", encoding="utf-8") as f:
            json.dump(metrics, f)


def _members(spec):
    """``"a,b:0.5"`` -> [("a", 1.0), ("b", 0.5)]."""
    out = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, w = item.partition(":")
        try:
            out.append((name, float(w) if w else 1.0))
        except ValueError:
            raise ConfigError(f"bad weight in {item!r}") from None
    if not out:
        raise ConfigError("empty set")
    return out


def cmd_follow(args, cfg, seed):
    from .follow import follow_late, follow_naive, follow_reified, lift, lift_relations, lower, reify
    from .kb import SetVec, decode_topk, encode_set, load_kb_tsv
    from .shard import follow_sharded, partition_reified

    sec = _section(cfg, "follow", required=False)
    kb_path = args.kb or sec.get("kb")
    if not kb_path:
        raise ConfigError("follow needs --kb")
    try:
        kb = load_kb_tsv(kb_path)
    except OSError as e:
        raise _IoError(f"cannot read KB {kb_path}: {e.strerror}") from None
    xs, rs = _members(args.x), _members(args.r)
    rels = [kb.relation(name) for name, _ in rs]
    group = kb.types[rels[0].group]
    if any(r.group != rels[0].group for r in rels):
        raise ConfigError("relations in --r must share subject and object types")
    x = encode_set(kb, rels[0].subj_type, xs)
    r = encode_set(kb, group.id, rs)
    out_type = kb.types[rels[0].obj_type]
    strategy = args.strategy or sec.get("strategy", "reified")
    if strategy == "naive":
        y = follow_naive(x, r, kb)
    elif strategy == "late":
        y = follow_late(SetVec(x.etype, x.values[None]), SetVec(r.etype, r.values[None]), kb).row(0)
    elif strategy in ("reified", "reified-sharded"):
        rkb = reify(kb)
        X, R = lift(kb, x)[None], lift_relations(kb, r, rkb)[None]
        if strategy == "reified":
            Y = follow_reified(X, R, rkb)
        else:
            shards = int(cfg.get("shards", 2))
            Y = follow_sharded(X, R, partition_reified(rkb, min(shards, max(rkb.n_triples, 1))))
        y = lower(kb, Y[0], out_type)
    else:
        raise ConfigError(f"unknown strategy {strategy!r}")
    for name, w in decode_topk(y, args.k):
        print(f"{name} {w!r}")


COMMANDS = {
    "gen-grid": (cmd_gen_grid, "write a grid KB as TSV"),
    "gen-questions": (cmd_gen_questions, "write chain-following questions as JSON lines"),
    "bench": (cmd_bench, "time follow(follow(X, R), R) per strategy and write CSV"),
    "train": (cmd_train, "train a model and save a checkpoint"),
    "eval": (cmd_eval, "evaluate a checkpoint (Hits@1, Hits@10)"),
    "follow": (cmd_follow, "run one following query and print the top-k entities"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="kbfollow", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="random seed (default: config 'seed' or 0)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "follow":
            p.add_argument("--kb", help="KB in TSV form")
            p.add_argument("--x", required=True, help="entities, e.g. 'c0_0' or 'a:0.5,b:0.5'")
            p.add_argument("--r", required=True, help="relations, same syntax")
            p.add_argument("-k", type=int, default=10)
            p.add_argument("--strategy", choices=["naive", "late", "reified", "reified-sharded"])
        if name == "eval":
            p.add_argument("--checkpoint")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits 2 on usage errors
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        if args.command != "follow" and not args.config:
            raise ConfigError(f"{args.command} needs --config")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        np.random.seed(seed)  # nothing should rely on it, but keep stray global use reproducible
        COMMANDS[args.command][0](args, cfg, seed)
    except _IoError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (KbFollowError, KeyError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
