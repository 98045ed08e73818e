"""Build games from an id plus a parameter mapping (mirrors the config file)."""

from __future__ import annotations

from .base import Game
from .battleships import Battleships
from .goofspiel import Goofspiel
from .kuhn import KuhnPoker
from .leduc import LeducPoker


def make_game(name: str, params: dict | None = None) -> Game:
    params = dict(params or {})
    if name == "kuhn":
        return KuhnPoker()
    if name == "leduc":
        return LeducPoker()
    if name == "goofspiel":
        return Goofspiel(
            num_cards=int(params.pop("num_cards", 5)),
            order=params.pop("order", "randomized"),
            reward_mode=params.pop("reward_mode", "win_loss"),
        )
    if name == "battleships":
        return Battleships(
            size=int(params.pop("size", 3)),
            ships=tuple(int(s) for s in params.pop("ships", (2, 2))),
        )
    raise ValueError(f"unknown game {name!r}")
