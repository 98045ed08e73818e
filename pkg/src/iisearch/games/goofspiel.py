"""Imperfect-information Goofspiel.

Both players hold cards 1..N and bid one secretly each round for the current
point card; the higher bid claims it and ties discard it. Bids are never
revealed — only the round outcome (who claimed / tie) is public. The point
deck is either revealed in random order by chance ("randomized") or runs
from N down to 1 ("descending", no chance player at all).

The last round is forced (one card each), so it is resolved inside the
second-to-last bid step; this matches the usual history counts for these
games (e.g. ~1.8e4 for N=5 descending).
"""

from __future__ import annotations

from dataclasses import dataclass

from .base import CHANCE, Game, StepResult

P0_WINS = 0
P1_WINS = 1
TIE = 2

DESCENDING = "descending"
RANDOMIZED = "randomized"

WIN_LOSS = "win_loss"
POINT_DIFF = "point_diff"


@dataclass(frozen=True)
class GoofspielState:
    hands: tuple[tuple[int, ...], tuple[int, ...]]
    deck: tuple[int, ...]  # point cards not yet claimed/discarded/upturned
    upcard: int  # -1 while waiting for a chance reveal
    scores: tuple[int, int]
    done: bool


class Goofspiel(Game):
    def __init__(
        self,
        num_cards: int = 5,
        order: str = RANDOMIZED,
        reward_mode: str = WIN_LOSS,
    ):
        if order not in (DESCENDING, RANDOMIZED):
            raise ValueError(f"unknown point order {order!r}")
        if reward_mode not in (WIN_LOSS, POINT_DIFF):
            raise ValueError(f"unknown reward mode {reward_mode!r}")
        if num_cards < 2:
            raise ValueError("needs at least two cards")
        self.num_cards = num_cards
        self.order = order
        self.reward_mode = reward_mode
        self.game_id = f"goofspiel_{num_cards}_{order}"
        if reward_mode != WIN_LOSS:
            self.game_id += f"_{reward_mode}"

    def initial_state(self) -> GoofspielState:
        cards = tuple(range(1, self.num_cards + 1))
        deck = cards
        upcard = -1
        if self.order == DESCENDING:
            upcard = self.num_cards
            deck = tuple(c for c in cards if c != upcard)
        return GoofspielState((cards, cards), deck, upcard, (0, 0), False)

    def acting_players(self, state: GoofspielState) -> tuple[int, ...]:
        if state.done:
            return ()
        if state.upcard < 0:
            return (CHANCE,)
        return (0, 1)

    def legal_actions(self, state: GoofspielState, player: int) -> tuple[int, ...]:
        if player == CHANCE:
            return state.deck
        return state.hands[player]

    def step(self, state: GoofspielState, joint: tuple[int, ...]) -> StepResult:
        if state.upcard < 0:
            (card,) = joint
            new = GoofspielState(
                state.hands,
                tuple(c for c in state.deck if c != card),
                card,
                state.scores,
                False,
            )
            return StepResult(new, (0.0, 0.0), (30 + card,), ((), ()))

        bid0, bid1 = joint
        outcome, scores = _settle(state.upcard, bid0, bid1, state.scores)
        hands = (
            tuple(c for c in state.hands[0] if c != bid0),
            tuple(c for c in state.hands[1] if c != bid1),
        )
        if len(hands[0]) > 1:
            if self.order == DESCENDING:
                upcard = max(state.deck)
                deck = tuple(c for c in state.deck if c != upcard)
                new = GoofspielState(hands, deck, upcard, scores, False)
            else:
                new = GoofspielState(hands, state.deck, -1, scores, False)
            return StepResult(new, (0.0, 0.0), (outcome,), ((), ()))

        # forced last round: one card each, one point card left
        last_up = state.deck[0] if self.order == RANDOMIZED else max(state.deck)
        outcome2, scores = _settle(last_up, hands[0][0], hands[1][0], scores)
        new = GoofspielState(((), ()), (), -1, scores, True)
        return StepResult(new, self._rewards(scores), (outcome, outcome2), ((), ()))

    def _rewards(self, scores: tuple[int, int]) -> tuple[float, float]:
        diff = float(scores[0] - scores[1])
        if self.reward_mode == POINT_DIFF:
            return (diff, -diff)
        sign = (diff > 0) - (diff < 0)
        return (float(sign), -float(sign))

    def max_reward_magnitude(self) -> float:
        if self.reward_mode == POINT_DIFF:
            return float(self.num_cards * (self.num_cards + 1) // 2)
        return 1.0

    def total_points(self) -> int:
        return self.num_cards * (self.num_cards + 1) // 2


def _settle(upcard, bid0, bid1, scores):
    if bid0 > bid1:
        return P0_WINS, (scores[0] + upcard, scores[1])
    if bid1 > bid0:
        return P1_WINS, (scores[0], scores[1] + upcard)
    return TIE, scores
