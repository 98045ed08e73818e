"""Battleships on a square grid.

Both players secretly place their ships (one composite placement action per
player, applied as a single simultaneous joint action), then alternate shots
starting with player 0. A shot's outcome — miss, hit, or sunk — is public.
Re-shooting a cell is illegal. Whoever sinks every opposing ship first wins
+1/-1.

Placements with equal-length ships are deduplicated, so a layout action is a
set of ship positions, not an ordered assignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .base import Game, StepResult

MISS = 0
HIT = 1
SUNK = 2

_PLACED_MARK = 0


@lru_cache(maxsize=None)
def ship_positions(size: int, length: int) -> tuple[tuple[int, ...], ...]:
    """All straight placements of one ship; cells are row-major indices."""
    spots = []
    for r in range(size):
        for c in range(size):
            if c + length <= size:
                spots.append(tuple(r * size + c + k for k in range(length)))
            if r + length <= size and length > 1:
                spots.append(tuple((r + k) * size + c for k in range(length)))
    return tuple(sorted(set(spots)))


@lru_cache(maxsize=None)
def layouts(size: int, ships: tuple[int, ...]) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """All distinct non-overlapping layouts, each a sorted tuple of ships."""
    out: set[tuple[tuple[int, ...], ...]] = set()

    def place(remaining: tuple[int, ...], used: frozenset[int], acc: tuple):
        if not remaining:
            out.add(tuple(sorted(acc)))
            return
        for pos in ship_positions(size, remaining[0]):
            if used.isdisjoint(pos):
                place(remaining[1:], used | frozenset(pos), acc + (pos,))

    place(tuple(ships), frozenset(), ())
    return tuple(sorted(out))


@dataclass(frozen=True)
class BattleshipsState:
    layouts: tuple[int, int] | None  # layout indices once placed
    shots: tuple[tuple[int, ...], tuple[int, ...]]  # cells fired by each player
    winner: int  # -1 while running


class Battleships(Game):
    def __init__(self, size: int = 3, ships: tuple[int, ...] = (2, 2)):
        self.size = size
        self.ships = tuple(ships)
        self.cells = size * size
        self.layout_list = layouts(size, self.ships)
        if not self.layout_list:
            raise ValueError("no legal layout for these ships")
        ships_tag = "-".join(str(s) for s in self.ships)
        self.game_id = f"battleships_{size}x{size}_{ships_tag}"

    def initial_state(self) -> BattleshipsState:
        return BattleshipsState(None, ((), ()), -1)

    def acting_players(self, state: BattleshipsState) -> tuple[int, ...]:
        if state.winner >= 0:
            return ()
        if state.layouts is None:
            return (0, 1)
        turn = (len(state.shots[0]) + len(state.shots[1])) % 2
        return (turn,)

    def legal_actions(self, state: BattleshipsState, player: int) -> tuple[int, ...]:
        if state.layouts is None:
            return tuple(range(len(self.layout_list)))
        return tuple(c for c in range(self.cells) if c not in state.shots[player])

    def step(self, state: BattleshipsState, joint: tuple[int, ...]) -> StepResult:
        if state.layouts is None:
            new = BattleshipsState((joint[0], joint[1]), ((), ()), -1)
            return StepResult(new, (0.0, 0.0), (_PLACED_MARK,), ((), ()))

        shooter = (len(state.shots[0]) + len(state.shots[1])) % 2
        (cell,) = joint
        target = 1 - shooter
        target_layout = self.layout_list[state.layouts[target]]
        prior = set(state.shots[shooter])
        outcome = shot_outcome(target_layout, prior, cell)
        shots = list(state.shots)
        shots[shooter] = shots[shooter] + (cell,)
        all_cells = {c for ship in target_layout for c in ship}
        winner = shooter if all_cells.issubset(prior | {cell}) else -1
        new = BattleshipsState(state.layouts, (shots[0], shots[1]), winner)
        rewards = (0.0, 0.0)
        if winner == 0:
            rewards = (1.0, -1.0)
        elif winner == 1:
            rewards = (-1.0, 1.0)
        return StepResult(new, rewards, (1 + cell, 50 + outcome), ((), ()))

    def max_reward_magnitude(self) -> float:
        return 1.0


def shot_outcome(layout, prior_shots: set[int], cell: int) -> int:
    """Classify one shot against a layout given the shooter's earlier shots."""
    for ship in layout:
        if cell in ship:
            remaining = [c for c in ship if c != cell and c not in prior_shots]
            return SUNK if not remaining else HIT
    return MISS
