"""Kuhn poker: the smallest nontrivial oracle target for the test suites.

Three cards (J=0, Q=1, K=2), one ante each, one betting round. Chance deals
sequentially (two chance steps), so deal probabilities are 1/3 then 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

from .base import CHANCE, Game, StepResult

CHECK = 0
BET = 1
CALL = 2
FOLD = 3

_BET_ROUND = {
    (): (CHECK, BET),
    (CHECK,): (CHECK, BET),
    (BET,): (CALL, FOLD),
    (CHECK, BET): (CALL, FOLD),
}

# public tokens: 0/1 mark the two deal steps; betting actions offset by 10
_DEAL_MARK = (0, 1)


@dataclass(frozen=True)
class KuhnState:
    cards: tuple[int, ...]  # dealt so far, player 0 first
    bets: tuple[int, ...]


class KuhnPoker(Game):
    game_id = "kuhn"

    def initial_state(self) -> KuhnState:
        return KuhnState((), ())

    def acting_players(self, state: KuhnState) -> tuple[int, ...]:
        if len(state.cards) < 2:
            return (CHANCE,)
        if state.bets in _BET_ROUND:
            return (len(state.bets) % 2,)
        return ()

    def legal_actions(self, state: KuhnState, player: int) -> tuple[int, ...]:
        if player == CHANCE:
            return tuple(c for c in (0, 1, 2) if c not in state.cards)
        return _BET_ROUND[state.bets]

    def step(self, state: KuhnState, joint: tuple[int, ...]) -> StepResult:
        (action,) = joint
        if len(state.cards) < 2:
            new = KuhnState(state.cards + (action,), ())
            priv = [(), ()]
            priv[len(state.cards)] = (action,)
            return StepResult(
                new,
                (0.0, 0.0),
                (_DEAL_MARK[len(state.cards)],),
                (tuple(priv[0]), tuple(priv[1])),
            )
        bets = state.bets + (action,)
        new = KuhnState(state.cards, bets)
        rewards = (0.0, 0.0)
        if bets not in _BET_ROUND:
            rewards = self._terminal_rewards(state.cards, bets)
        return StepResult(new, rewards, (10 + action,), ((), ()))

    def _terminal_rewards(self, cards, bets) -> tuple[float, float]:
        if bets[-1] == FOLD:
            folder = (len(bets) - 1) % 2
            # folder forfeits its contribution so far: ante 1 (never bet)
            win = 1.0
            return (win, -win) if folder == 1 else (-win, win)
        pot_each = 2.0 if BET in bets else 1.0
        winner = 0 if cards[0] > cards[1] else 1
        return (pot_each, -pot_each) if winner == 0 else (-pot_each, pot_each)

    def max_reward_magnitude(self) -> float:
        return 2.0
