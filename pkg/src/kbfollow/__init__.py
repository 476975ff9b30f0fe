"""Differentiable relation-set following over sparse symbolic KBs."""
from .coo import CooMatrix, dsmm, spmm
from .follow import (
    ReifiedKb,
    follow_late,
    follow_naive,
    follow_reified,
    hadamard,
    late_mix,
    lift,
    lift_relations,
    lower,
    mix_relations,
    reify,
)
from .kb import (
    EntitySetVec,
    EntityType,
    RelSetVec,
    SetVec,
    TypedKb,
    build_kb,
    decode_topk,
    encode_set,
    load_kb_tsv,
    save_kb_tsv,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .shard import ShardedReifiedKb, follow_sharded, partition_reified

__version__ = "0.1.0"

__all__ = [
    "CooMatrix",
    "EntitySetVec",
    "EntityType",
    "KERNEL_BACKEND",
    "RelSetVec",
    "ReifiedKb",
    "SetVec",
    "ShardedReifiedKb",
    "TypedKb",
    "build_kb",
    "decode_topk",
    "dsmm",
    "encode_set",
    "follow_late",
    "follow_naive",
    "follow_reified",
    "follow_sharded",
    "hadamard",
    "late_mix",
    "lift",
    "lift_relations",
    "load_kb_tsv",
    "lower",
    "mix_relations",
    "partition_reified",
    "reify",
    "save_kb_tsv",
    "spmm",
]
