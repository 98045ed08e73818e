"""Game definitions and the generic history machinery."""

from .base import (
    CHANCE,
    BudgetExceeded,
    Game,
    GameError,
    History,
    IllegalAction,
    NotActing,
    StepResult,
    apply,
    enumerate_histories,
    expected_values,
    infoset_key,
    initial_history,
    joint_action_space,
    legal_actions,
    public_key,
    replay,
    walk,
)
from .battleships import Battleships
from .goofspiel import Goofspiel
from .kuhn import KuhnPoker
from .leduc import LeducPoker
from .registry import make_game

__all__ = [
    "CHANCE",
    "BudgetExceeded",
    "Game",
    "GameError",
    "History",
    "IllegalAction",
    "NotActing",
    "StepResult",
    "apply",
    "enumerate_histories",
    "expected_values",
    "infoset_key",
    "initial_history",
    "joint_action_space",
    "legal_actions",
    "public_key",
    "replay",
    "walk",
    "Battleships",
    "Goofspiel",
    "KuhnPoker",
    "LeducPoker",
    "make_game",
]
