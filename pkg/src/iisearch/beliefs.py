"""Public belief states: reconstruction, ranges, and root counterfactual values.

Reconstruction turns a public observation sequence into the exact set of
histories that share it. Goofspiel, Battleships and Leduc get dedicated
constraint-propagation reconstructors; tiny games fall back to a pruned
enumeration. Ranges are recovered by backtracking each player's own action
probabilities along any member history, and the opponent's root
counterfactual values come from the critic's identity column.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .games.base import (
    CHANCE,
    BudgetExceeded,
    Game,
    GameError,
    History,
    infoset_key,
    initial_history,
    public_key,
)
from .games.battleships import Battleships, shot_outcome
from .games.goofspiel import Goofspiel
from .games.leduc import NUM_CARDS as LEDUC_CARDS
from .games.leduc import RANK, LeducPoker
from .policies import BasePolicy
from .transforms import HistoryCritic, HistoryRef, hist_key


class EmptyPublicState(GameError):
    """The public observation sequence is realised by no legal history."""


ZERO_REACH_WEIGHT = 1e-12
OWN_RANGE_FLOOR = 1e-9


def parse_public(stream: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Split a length-prefixed public stream into per-step token tuples."""
    steps = []
    i = 0
    while i < len(stream):
        n = stream[i]
        i += 1
        steps.append(tuple(stream[i : i + n]))
        i += n
    return steps


def reconstruct_public_state(
    game: Game, public_obs: tuple[int, ...], node_budget: int | None = 2_000_000
) -> list[History]:
    """All histories whose public key equals ``public_obs``."""
    if isinstance(game, Goofspiel):
        out = _reconstruct_goofspiel(game, public_obs)
    elif isinstance(game, Battleships):
        out = _reconstruct_battleships(game, public_obs)
    elif isinstance(game, LeducPoker):
        out = _reconstruct_leduc(game, public_obs)
    else:
        out = _reconstruct_generic(game, public_obs, node_budget)
    if not out:
        raise EmptyPublicState(f"no history matches public key {public_obs!r}")
    return out


def _replay_all(game: Game, action_seqs) -> list[History]:
    out = []
    for seq in action_seqs:
        h = initial_history(game)
        for joint in seq:
            h = h.child(tuple(joint))
        out.append(h)
    return out


def _reconstruct_generic(game, public_obs, node_budget) -> list[History]:
    """Pruned depth-first filter: descend only while the public stream is a
    prefix of the target."""
    target = tuple(public_obs)
    out = []
    stack = [initial_history(game)]
    seen = 0
    while stack:
        h = stack.pop()
        seen += 1
        if node_budget is not None and seen > node_budget:
            raise BudgetExceeded("reconstruction budget exhausted")
        stream = h.pub_stream
        if len(stream) > len(target) or stream != target[: len(stream)]:
            continue
        if stream == target:
            out.append(h)
            continue
        if h.is_terminal():
            continue
        from .games.base import joint_action_space

        stack.extend(h.child(j) for j in joint_action_space(h))
    return out


def _reconstruct_goofspiel(game: Goofspiel, public_obs) -> list[History]:
    n = game.num_cards
    steps = parse_public(tuple(public_obs))
    reveals: list[int] = []
    outcomes: list[int] = []
    final = False
    for tokens in steps:
        for tok in tokens:
            if tok >= 30:
                reveals.append(tok - 30)
            else:
                outcomes.append(tok)
        if len(tokens) == 2:
            final = True
    rounds = len(outcomes) - (1 if final else 0)
    played = rounds  # completed decision rounds recorded as single outcomes

    cards = tuple(range(1, n + 1))
    perms = np.array(list(itertools.permutations(cards, played)), dtype=np.int64)
    if played == 0:
        perms = perms.reshape(1, 0)
    m = len(perms)
    ok = np.ones((m, m), dtype=bool)
    for r in range(played):
        b0 = perms[:, r][:, None]
        b1 = perms[:, r][None, :]
        if outcomes[r] == 0:
            ok &= b0 > b1
        elif outcomes[r] == 1:
            ok &= b0 < b1
        else:
            ok &= b0 == b1
    if final:
        # forced last round: remaining cards decide the extra outcome
        rem0 = np.array([sum(cards) - p.sum() for p in perms])
        last = outcomes[-1]
        r0, r1 = rem0[:, None], rem0[None, :]
        if last == 0:
            ok &= r0 > r1
        elif last == 1:
            ok &= r0 < r1
        else:
            ok &= r0 == r1

    pairs = np.argwhere(ok)
    seqs = []
    for i0, i1 in pairs:
        seq: list[tuple[int, ...]] = []
        for r in range(played):
            if game.order == "randomized":
                seq.append((reveals[r],))
            seq.append((int(perms[i0][r]), int(perms[i1][r])))
        if not final and game.order == "randomized" and len(reveals) > played:
            seq.append((reveals[played],))
        seqs.append(seq)
    return _replay_all(game, seqs)


def _reconstruct_battleships(game: Battleships, public_obs) -> list[History]:
    steps = parse_public(tuple(public_obs))
    if not steps:
        return [initial_history(game)]
    if steps[0] != (0,):
        raise EmptyPublicState("battleships public stream must start with placement")
    shots: list[tuple[int, int]] = []  # (cell, outcome) in order
    for tokens in steps[1:]:
        cell, outcome = tokens[0] - 1, tokens[1] - 50
        shots.append((cell, outcome))

    consistent: list[list[int]] = []
    for target in (0, 1):
        # shots fired AT ``target`` are those by the other player: the shot
        # order alternates starting with player 0
        incoming = [s for i, s in enumerate(shots) if i % 2 == (1 - target)]
        good = []
        for li, layout in enumerate(game.layout_list):
            prior: set[int] = set()
            fine = True
            for cell, outcome in incoming:
                if shot_outcome(layout, prior, cell) != outcome:
                    fine = False
                    break
                prior.add(cell)
            if fine:
                good.append(li)
        consistent.append(good)

    shot_actions = [(cell,) for cell, _ in shots]
    seqs = []
    for l0 in consistent[0]:
        for l1 in consistent[1]:
            seqs.append([(l0, l1)] + shot_actions)
    return _replay_all(game, seqs)


def _reconstruct_leduc(game: LeducPoker, public_obs) -> list[History]:
    steps = parse_public(tuple(public_obs))
    deals_done = sum(1 for s in steps if s and s[0] in (0, 1))
    pub_rank = None
    bets: list[int] = []
    for tokens in steps:
        tok = tokens[0] if tokens else None
        if tok is None or tok in (0, 1):
            continue
        if 10 <= tok < 20:
            pub_rank = tok - 10
        else:
            bets.append(tok - 20)

    cards = range(LEDUC_CARDS)
    seqs = []
    if deals_done == 0:
        return [initial_history(game)]
    if deals_done == 1 and pub_rank is None and not bets:
        return _replay_all(game, [[(c,)] for c in cards])
    for c0, c1 in itertools.permutations(cards, 2):
        if pub_rank is None:
            seqs.append([(c0,), (c1,)] + [(b,) for b in bets])
            continue
        pub_candidates = [
            c for c in cards if c not in (c0, c1) and RANK(c) == pub_rank
        ]
        # the reveal splits the betting line at the end of round one
        for cpub in pub_candidates:
            seq = [(c0,), (c1,)]
            r1, consumed = _leduc_round_one(bets)
            seq += [(b,) for b in r1]
            seq.append((cpub,))
            seq += [(b,) for b in bets[consumed:]]
            seqs.append(seq)
    return _replay_all(game, seqs)


def _leduc_round_one(bets: list[int]) -> tuple[list[int], int]:
    """The prefix of public betting actions that belongs to round one."""
    from .games.leduc import CALL

    for i, b in enumerate(bets):
        if b == CALL and i >= 1:
            return bets[: i + 1], i + 1
    return bets, len(bets)


# ---------------------------------------------------------------------------


@dataclass
class PublicBeliefState:
    game: Game
    public_obs: tuple[int, ...]
    histories: list[History]
    iset_keys: tuple[list, list]  # per player: infoset key per history
    infosets: tuple[list, list]  # per player: distinct keys, first-seen order
    iset_of: tuple[np.ndarray, np.ndarray]  # per player: infoset index per history
    own_reach: tuple[np.ndarray, np.ndarray]  # per player, per history
    chance_reach: np.ndarray

    def infoset_members(self, player: int) -> list[np.ndarray]:
        return [
            np.nonzero(self.iset_of[player] == i)[0]
            for i in range(len(self.infosets[player]))
        ]


def build_belief_state(
    game: Game,
    histories: list[History],
    profile,
) -> PublicBeliefState:
    """Group reconstructed histories by infoset and attach reach products."""
    pub = public_key(histories[0])
    iset_keys = ([], [])
    iset_of = (np.zeros(len(histories), dtype=np.int64),
               np.zeros(len(histories), dtype=np.int64))
    infosets: tuple[list, list] = ([], [])
    index: tuple[dict, dict] = ({}, {})
    for n, h in enumerate(histories):
        if public_key(h) != pub:
            raise GameError("histories span multiple public states")
        for p in (0, 1):
            key = infoset_key(h, p)
            iset_keys[p].append(key)
            iid = index[p].get(key)
            if iid is None:
                iid = len(infosets[p])
                index[p][key] = iid
                infosets[p].append(key)
            iset_of[p][n] = iid
    own = (
        np.array([own_reach_product(profile[0], h, 0) for h in histories]),
        np.array([own_reach_product(profile[1], h, 1) for h in histories]),
    )
    chance = np.array([chance_reach_product(h) for h in histories])
    return PublicBeliefState(
        game, pub, histories, iset_keys, infosets, iset_of, own, chance
    )


def own_reach_product(policy: BasePolicy, history: History, player: int) -> float:
    """Product of the player's own action probabilities along the history."""
    reach = 1.0
    lineage = history.lineage()
    for h, nxt in zip(lineage[:-1], lineage[1:]):
        acting = h.acting
        if player not in acting:
            continue
        legal = h.legal_actions(player)
        a = nxt.last_joint[acting.index(player)]
        reach *= float(policy.probs(infoset_key(h, player), legal)[legal.index(a)])
    return reach


def chance_reach_product(history: History) -> float:
    reach = 1.0
    lineage = history.lineage()
    for h, nxt in zip(lineage[:-1], lineage[1:]):
        if h.acting != (CHANCE,):
            continue
        legal = h.legal_actions(CHANCE)
        probs = h.chance_probs()
        reach *= float(probs[legal.index(nxt.last_joint[0])])
    return reach


def compute_own_ranges(policy: BasePolicy, histories: list[History], player: int):
    """Reach per infoset of ``player`` (identical across member histories)."""
    out: dict[tuple, float] = {}
    for h in histories:
        key = infoset_key(h, player)
        if key not in out:
            out[key] = own_reach_product(policy, h, player)
    return out


def chance_ranges(histories: list[History], game: Game) -> np.ndarray:
    return np.array([chance_reach_product(h) for h in histories])


def opponent_root_cfvs(
    beta: PublicBeliefState,
    critic: HistoryCritic,
    resolving_player: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Opponent counterfactual values per opponent infoset from the critic's
    identity column (u_opponent = -u_resolver by zero-sum).

    Returns (values, zero_reach_flags) aligned with
    ``beta.infosets[opponent]``.
    """
    opp = 1 - resolving_player
    weights = beta.own_reach[resolving_player] * beta.chance_reach
    refs = [
        HistoryRef(hist_key(h.joint_actions()), k0, k1)
        for h, k0, k1 in zip(beta.histories, beta.iset_keys[0], beta.iset_keys[1])
    ]
    u = critic.values_batch(refs)  # (n, 2, K)
    u_opp = -u[:, resolving_player, 0]
    n_isets = len(beta.infosets[opp])
    num = np.zeros(n_isets)
    den = np.zeros(n_isets)
    np.add.at(num, beta.iset_of[opp], weights * u_opp)
    np.add.at(den, beta.iset_of[opp], weights)
    flags = den <= 0.0
    vals = np.where(flags, 0.0, num / np.where(flags, 1.0, den))
    return vals, flags


# ---------------------------------------------------------------------------


@dataclass
class ResolveContext:
    """Per-match resolving state: mode, thresholds, and caches."""

    mode: str = "critic"  # "critic" or "continual"
    subgame_limit: int = 25_000
    depth_limit: int | None = 1
    iterations: int = 800
    reconstruction_budget: int = 2_000_000
    solve_cache: dict = field(default_factory=dict)
    # continual mode: public key -> {player -> {infoset key -> cfv}}
    cfv_store: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def stored_cfvs(self, pub: tuple, player: int):
        entry = self.cfv_store.get(pub)
        if entry is None:
            return None
        return entry.get(player)

    def store_cfvs(self, pub: tuple, player: int, table: dict):
        self.cfv_store.setdefault(pub, {})[player] = table


def subgame_size(
    game: Game,
    histories: list[History],
    depth_limit: int | None,
    budget: int,
) -> int | None:
    """History count of the depth-limited subgame, or None once > budget."""
    from .games.base import joint_action_space

    count = len(histories)
    if count > budget:
        return None
    stack = [(h, 0, 0) for h in histories]
    while stack:
        h, n0, n1 = stack.pop()
        if h.is_terminal():
            continue
        if depth_limit is not None and min(n0, n1) >= depth_limit:
            continue
        acting = h.acting
        for joint in joint_action_space(h):
            count += 1
            if count > budget:
                return None
            stack.append(
                (
                    h.child(joint),
                    n0 + (1 if 0 in acting else 0),
                    n1 + (1 if 1 in acting else 0),
                )
            )
    return count


def should_resolve(
    game: Game,
    public_obs: tuple[int, ...],
    ctx: ResolveContext,
    depth_limit: int | None = None,
) -> bool:
    """True when the depth-limited subgame fits under the size threshold and
    the public state reconstructs within budget."""
    if ctx.subgame_limit <= 0:
        return False
    try:
        histories = reconstruct_public_state(
            game, public_obs, node_budget=ctx.reconstruction_budget
        )
    except (BudgetExceeded, EmptyPublicState):
        return False
    dl = depth_limit if depth_limit is not None else ctx.depth_limit
    size = subgame_size(game, histories, dl, ctx.subgame_limit)
    return size is not None and size < ctx.subgame_limit
