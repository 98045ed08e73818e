"""Leduc hold'em.

Six distinguishable cards (two copies each of J/Q/K ranks), one private card
per player, one public card after the first betting round. Raise sizes are 2
then 4, at most two raises per round, and the winner collects the loser's
pot contribution (equal ranks split, i.e. reward 0).

Players observe ranks, not copies, so histories differing only in which copy
was dealt share every key.
"""

from __future__ import annotations

from dataclasses import dataclass

from .base import CHANCE, Game, StepResult

CALL = 0
RAISE = 1
FOLD = 2

NUM_CARDS = 6
RANK = lambda card: card // 2  # noqa: E731 - tiny card helper

_RAISE_SIZE = (2, 4)


@dataclass(frozen=True)
class LeducState:
    cards: tuple[int, ...]  # (p0, p1) once dealt
    public_card: int  # -1 until revealed
    round_no: int  # 0 or 1
    bets: tuple[int, ...]  # actions in the current round
    contrib: tuple[int, int]  # chips in pot per player (antes included)
    folded: int  # -1 or the player who folded
    done: bool


class LeducPoker(Game):
    game_id = "leduc"

    def initial_state(self) -> LeducState:
        return LeducState((), -1, 0, (), (1, 1), -1, False)

    def acting_players(self, state: LeducState) -> tuple[int, ...]:
        if state.done:
            return ()
        if len(state.cards) < 2 or (state.round_no == 1 and state.public_card < 0):
            return (CHANCE,)
        return (len(state.bets) % 2,)

    def legal_actions(self, state: LeducState, player: int) -> tuple[int, ...]:
        if player == CHANCE:
            return tuple(c for c in range(NUM_CARDS) if c not in state.cards)
        if state.bets.count(RAISE) >= 2:
            return (CALL, FOLD)
        return (CALL, RAISE, FOLD)

    def step(self, state: LeducState, joint: tuple[int, ...]) -> StepResult:
        (action,) = joint
        if len(state.cards) < 2:
            new = LeducState(
                state.cards + (action,), -1, 0, (), state.contrib, -1, False
            )
            priv = [(), ()]
            priv[len(state.cards)] = (RANK(action),)
            return StepResult(
                new, (0.0, 0.0), (len(state.cards),), (tuple(priv[0]), tuple(priv[1]))
            )
        if state.round_no == 1 and state.public_card < 0:
            new = LeducState(state.cards, action, 1, (), state.contrib, -1, False)
            return StepResult(new, (0.0, 0.0), (10 + RANK(action),), ((), ()))

        player = len(state.bets) % 2
        other = 1 - player
        contrib = list(state.contrib)
        if action == FOLD:
            new = LeducState(
                state.cards,
                state.public_card,
                state.round_no,
                state.bets + (action,),
                tuple(contrib),
                player,
                True,
            )
            loser_paid = contrib[player]
            rewards = (loser_paid, -loser_paid) if other == 0 else (-loser_paid, loser_paid)
            return StepResult(new, rewards, (20 + action,), ((), ()))

        if action == CALL:
            contrib[player] = max(contrib)
        else:  # RAISE calls first, then adds the round's raise size
            contrib[player] = max(contrib) + _RAISE_SIZE[state.round_no]
        bets = state.bets + (action,)
        round_over = action == CALL and len(bets) >= 2
        if not round_over:
            new = LeducState(
                state.cards,
                state.public_card,
                state.round_no,
                bets,
                tuple(contrib),
                -1,
                False,
            )
            return StepResult(new, (0.0, 0.0), (20 + action,), ((), ()))
        if state.round_no == 0:
            new = LeducState(state.cards, -1, 1, (), tuple(contrib), -1, False)
            return StepResult(new, (0.0, 0.0), (20 + action,), ((), ()))
        new = LeducState(
            state.cards, state.public_card, 1, bets, tuple(contrib), -1, True
        )
        rewards = self._showdown(state.cards, state.public_card, tuple(contrib))
        return StepResult(new, rewards, (20 + action,), ((), ()))

    def _showdown(self, cards, public_card, contrib) -> tuple[float, float]:
        ranks = (RANK(cards[0]), RANK(cards[1]))
        pub = RANK(public_card)
        if ranks[0] == ranks[1]:
            return (0.0, 0.0)
        if ranks[0] == pub:
            winner = 0
        elif ranks[1] == pub:
            winner = 1
        else:
            winner = 0 if ranks[0] > ranks[1] else 1
        amount = float(contrib[1 - winner])
        return (amount, -amount) if winner == 0 else (-amount, amount)

    def max_reward_magnitude(self) -> float:
        return 13.0  # ante 1 + raises 2+2+4+4
