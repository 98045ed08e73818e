"""Core abstractions for two-player zero-sum games with factored observations.

A game exposes opaque world states plus transition/observation logic; the
generic :class:`History` tracks everything derived from play: cumulative
rewards, each player's action-observation stream (which defines information
sets) and the public observation stream (which defines public states).

Conventions used throughout the package:

* players are ``0`` and ``1``; chance is ``CHANCE`` (= -1),
* a "joint action" is a tuple aligned with ``acting_players`` of the state
  (``(a,)`` for solo/chance nodes, ``(a0, a1)`` for simultaneous nodes),
* actions and observation tokens are small non-negative integers chosen by
  the game definition, so keys are bit-stable across runs,
* rewards are emitted per step and must sum to zero across players.

Simultaneous moves are first-class here; regret-style solvers consume them
through a sequentialised view (player 0 conceptually commits first,
unobserved) which leaves every infoset key unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

CHANCE = -1

PLAYERS = (0, 1)


class GameError(Exception):
    """Base class for game-rule violations."""


class NotActing(GameError):
    """Raised when a policy/action is requested for a non-acting player."""


class IllegalAction(GameError):
    """Raised when a joint action contains an illegal component."""

    def __init__(self, player: int, action: int):
        super().__init__(f"illegal action {action} for player {player}")
        self.player = player
        self.action = action


class BudgetExceeded(GameError):
    """Raised when an enumeration walks past its node budget."""


@dataclass(frozen=True)
class StepResult:
    """Outcome of applying one joint action to a world state."""

    state: object
    rewards: tuple[float, float]
    public_obs: tuple[int, ...]
    private_obs: tuple[tuple[int, ...], tuple[int, ...]]


class Game:
    """Abstract two-player zero-sum game with a chance player.

    Subclasses implement the five state-level methods; everything key- or
    history-shaped is derived generically. States are treated as opaque
    immutable values.
    """

    game_id: str = "abstract"

    def initial_state(self) -> object:
        raise NotImplementedError

    def acting_players(self, state) -> tuple[int, ...]:
        """Return ``()`` when terminal, else ``(CHANCE,)``, ``(0,)``, ``(1,)``
        or ``(0, 1)``. Chance never acts simultaneously with a player."""
        raise NotImplementedError

    def legal_actions(self, state, player: int) -> tuple[int, ...]:
        raise NotImplementedError

    def chance_probs(self, state) -> Sequence[float] | None:
        """Probabilities over ``legal_actions(state, CHANCE)``; ``None`` means
        uniform. The chance policy is fixed and publicly known."""
        return None

    def step(self, state, joint: tuple[int, ...]) -> StepResult:
        raise NotImplementedError

    # -- optional niceties -------------------------------------------------

    def max_reward_magnitude(self) -> float:
        """Loose bound on |cumulative reward|, used to sanity-bound critics."""
        return float("inf")

    def is_terminal(self, state) -> bool:
        return not self.acting_players(state)


class History:
    """An immutable record of play from the initial state.

    Holds the pending world state, cumulative rewards, and the three token
    streams (one per player, one public). Extension via :meth:`child` shares
    structure through a parent link, so copies are cheap.
    """

    __slots__ = (
        "game",
        "state",
        "parent",
        "last_joint",
        "rewards",
        "streams",
        "pub_stream",
        "length",
        "_acting",
    )

    def __init__(self, game: Game):
        self.game = game
        self.state = game.initial_state()
        self.parent: History | None = None
        self.last_joint: tuple[int, ...] | None = None
        self.rewards = (0.0, 0.0)
        self.streams: tuple[tuple[int, ...], tuple[int, ...]] = ((), ())
        self.pub_stream: tuple[int, ...] = ()
        self.length = 0
        self._acting: tuple[int, ...] | None = None

    @classmethod
    def _blank(cls, game: Game) -> "History":
        h = cls.__new__(cls)
        h.game = game
        return h

    @property
    def acting(self) -> tuple[int, ...]:
        if self._acting is None:
            self._acting = self.game.acting_players(self.state)
        return self._acting

    def is_terminal(self) -> bool:
        return not self.acting

    def legal_actions(self, player: int) -> tuple[int, ...]:
        if player not in self.acting:
            raise NotActing(f"player {player} does not act here")
        return self.game.legal_actions(self.state, player)

    def chance_probs(self) -> list[float]:
        legal = self.legal_actions(CHANCE)
        probs = self.game.chance_probs(self.state)
        if probs is None:
            return [1.0 / len(legal)] * len(legal)
        probs = list(probs)
        if len(probs) != len(legal):
            raise GameError("chance_probs length mismatch")
        return probs

    def child(self, joint: tuple[int, ...]) -> "History":
        """Apply one joint action, validating each component."""
        acting = self.acting
        if len(joint) != len(acting):
            raise IllegalAction(acting[0] if acting else CHANCE, -1)
        for player, action in zip(acting, joint):
            if action not in self.game.legal_actions(self.state, player):
                raise IllegalAction(player, action)
        res = self.game.step(self.state, joint)
        nxt = History._blank(self.game)
        nxt.state = res.state
        nxt.parent = self
        nxt.last_joint = joint
        nxt.rewards = (
            self.rewards[0] + res.rewards[0],
            self.rewards[1] + res.rewards[1],
        )
        nxt.streams = tuple(
            self.streams[i]
            + _player_step_tokens(
                acted=(i in acting),
                action=joint[acting.index(i)] if i in acting else -1,
                private=res.private_obs[i],
                public=res.public_obs,
            )
            for i in PLAYERS
        )
        nxt.pub_stream = self.pub_stream + (len(res.public_obs),) + res.public_obs
        nxt.length = self.length + 1
        nxt._acting = None
        return nxt

    def joint_actions(self) -> tuple[tuple[int, ...], ...]:
        """The joint-action sequence from the root (replays to this history)."""
        seq: list[tuple[int, ...]] = []
        node: History | None = self
        while node is not None and node.last_joint is not None:
            seq.append(node.last_joint)
            node = node.parent
        return tuple(reversed(seq))

    def lineage(self) -> list["History"]:
        """Histories from the root down to (and including) this one."""
        chain: list[History] = []
        node: History | None = self
        while node is not None:
            chain.append(node)
            node = node.parent
        return list(reversed(chain))

    def __repr__(self) -> str:  # debugging aid only
        return f"History({self.game.game_id}, acts={self.joint_actions()!r})"


def _player_step_tokens(
    acted: bool, action: int, private: tuple[int, ...], public: tuple[int, ...]
) -> tuple[int, ...]:
    # Length-prefixed per-step encoding keeps keys canonical and parseable:
    # [acted, action?] [n_priv, priv...] [n_pub, pub...]
    head = (1, action) if acted else (0,)
    return head + (len(private),) + private + (len(public),) + public


def initial_history(game: Game) -> History:
    """History of length zero anchored at the initial state."""
    return History(game)


def infoset_key(history: History, player: int) -> tuple[int, ...]:
    """Canonical key of the player's action-observation sequence.

    Equal keys identify histories the player cannot tell apart; the key
    embeds the public stream, so it refines the public key.
    """
    return (player,) + history.streams[player]


def public_key(history: History) -> tuple[int, ...]:
    """Canonical key of the public observation sequence."""
    return history.pub_stream


def legal_actions(history: History, player: int) -> tuple[int, ...]:
    return history.legal_actions(player)


def apply(history: History, joint: tuple[int, ...]) -> History:
    return history.child(joint)


def replay(game: Game, joints: Sequence[tuple[int, ...]]) -> History:
    """Rebuild a history from a recorded joint-action sequence."""
    h = initial_history(game)
    for joint in joints:
        h = h.child(tuple(joint))
    return h


def walk(
    game: Game,
    node_budget: int | None = None,
    root: History | None = None,
) -> Iterator[History]:
    """Depth-first iterator over all histories (pre-order, deterministic).

    Raises :class:`BudgetExceeded` after yielding ``node_budget`` histories.
    """
    stack = [root if root is not None else initial_history(game)]
    seen = 0
    while stack:
        h = stack.pop()
        seen += 1
        if node_budget is not None and seen > node_budget:
            raise BudgetExceeded(f"enumeration exceeded {node_budget} histories")
        yield h
        if h.is_terminal():
            continue
        children = [h.child(joint) for joint in joint_action_space(h)]
        stack.extend(reversed(children))


def joint_action_space(history: History) -> list[tuple[int, ...]]:
    """All legal joint actions, player-0-major for simultaneous nodes."""
    acting = history.acting
    if len(acting) == 1:
        return [(a,) for a in history.legal_actions(acting[0])]
    acts0 = history.legal_actions(acting[0])
    acts1 = history.legal_actions(acting[1])
    return [(a0, a1) for a0 in acts0 for a1 in acts1]


def enumerate_histories(
    game: Game,
    predicate: Callable[[History], bool] | None = None,
    node_budget: int | None = 5_000_000,
    root: History | None = None,
) -> list[History]:
    """Exactly the histories satisfying ``predicate``, depth-first order."""
    out = []
    for h in walk(game, node_budget=node_budget, root=root):
        if predicate is None or predicate(h):
            out.append(h)
    return out


def expected_values(
    game: Game,
    policy_fn: Callable[[History, int], Sequence[float]],
    history: History | None = None,
    node_budget: int | None = 5_000_000,
) -> tuple[float, float]:
    """Exact per-player expectation of cumulative reward from ``history`` on.

    ``policy_fn(h, player)`` must return probabilities aligned with
    ``h.legal_actions(player)``. Chance uses the game's fixed policy. This is
    the plain recursive oracle; the vectorised tree evaluator must agree with
    it and tests hold both to that.
    """
    if history is None:
        history = initial_history(game)
    budget = [node_budget if node_budget is not None else -1]

    def go(h: History) -> tuple[float, float]:
        if budget[0] == 0:
            raise BudgetExceeded("expected_values budget exhausted")
        if budget[0] > 0:
            budget[0] -= 1
        if h.is_terminal():
            return (0.0, 0.0)
        acting = h.acting
        dists = []
        for p in acting:
            if p == CHANCE:
                dists.append(h.chance_probs())
            else:
                dists.append(list(policy_fn(h, p)))
        total0 = 0.0
        for joint in joint_action_space(h):
            prob = 1.0
            for slot, p in enumerate(acting):
                idx = h.legal_actions(p).index(joint[slot])
                prob *= dists[slot][idx]
            if prob == 0.0:
                continue
            nxt = h.child(joint)
            step0 = nxt.rewards[0] - h.rewards[0]
            sub0, _ = go(nxt)
            total0 += prob * (step0 + sub0)
        return (total0, -total0)

    v0, v1 = go(history)
    return (v0, v1)
