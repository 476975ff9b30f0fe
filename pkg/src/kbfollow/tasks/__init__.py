"""Synthetic tasks, models and the training loop built on relation-set following."""
from .grid import GridSpec, gen_grid
from .questions import ChainQuestion, gen_chain_questions, load_questions, save_questions
from .training import TrainConfig, evaluate, train

__all__ = [
    "ChainQuestion",
    "GridSpec",
    "TrainConfig",
    "evaluate",
    "gen_chain_questions",
    "gen_grid",
    "load_questions",
    "save_questions",
    "train",
]
