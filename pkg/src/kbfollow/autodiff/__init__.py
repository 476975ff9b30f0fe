"""Reverse-mode tape, follow adjoints and training utilities."""
from .follow_grad import (
    LateFollower,
    ReifiedFollower,
    follow_backward,
    make_follower,
)
from .params import (
    ModelParams,
    adam_step,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .tape import Node, Tape, backward

__all__ = [
    "LateFollower",
    "ModelParams",
    "Node",
    "ReifiedFollower",
    "Tape",
    "adam_step",
    "backward",
    "follow_backward",
    "load_checkpoint",
    "make_follower",
    "save_checkpoint",
    "sgd_step",
]
