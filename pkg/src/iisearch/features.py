"""Fixed-length feature encodings of infosets and histories, per game.

Encoders read the canonical key streams directly (the stream is exactly the
player's action-observation sequence), so they work both during sampling and
when materialising network policies over a built tree. Layouts are
documented inline per game; none of this is learned.
"""

from __future__ import annotations

import numpy as np

from .games.base import Game
from .games.battleships import Battleships
from .games.goofspiel import Goofspiel
from .games.kuhn import KuhnPoker
from .games.leduc import LeducPoker


def parse_stream(stream: tuple[int, ...]):
    """Decode a length-prefixed key stream into (action, priv, pub) steps."""
    steps = []
    i = 0
    n = len(stream)
    while i < n:
        acted = stream[i]
        i += 1
        action = None
        if acted:
            action = stream[i]
            i += 1
        k = stream[i]
        i += 1
        priv = stream[i : i + k]
        i += k
        k = stream[i]
        i += 1
        pub = stream[i : i + k]
        i += k
        steps.append((action, tuple(priv), tuple(pub)))
    return steps


def action_universe(game: Game) -> int:
    """Size of the id space network heads emit logits over."""
    if isinstance(game, KuhnPoker):
        return 4
    if isinstance(game, LeducPoker):
        return 3
    if isinstance(game, Goofspiel):
        return game.num_cards + 1
    if isinstance(game, Battleships):
        return max(game.cells, len(game.layout_list))
    raise ValueError(f"no action universe for {game.game_id}")


def infoset_feature_dim(game: Game) -> int:
    return len(infoset_features(game, (0,)))


def history_feature_dim(game: Game) -> int:
    return len(history_features(game, (0,), (1,)))


def infoset_features(game: Game, key: tuple[int, ...]) -> np.ndarray:
    player, steps = key[0], parse_stream(tuple(key[1:]))
    if isinstance(game, KuhnPoker):
        return _kuhn(player, steps, other=None)
    if isinstance(game, LeducPoker):
        return _leduc(player, steps, other=None)
    if isinstance(game, Goofspiel):
        return _goofspiel(game, player, steps, other=None)
    if isinstance(game, Battleships):
        return _battleships(game, player, steps, other=None)
    raise ValueError(f"no infoset encoder for {game.game_id}")


def history_features(game: Game, key0: tuple[int, ...], key1: tuple[int, ...]) -> np.ndarray:
    """Full-history encoding from both players' streams (their union is the
    whole history in these games: all chance outcomes surface as some
    player's observation)."""
    s0, s1 = parse_stream(tuple(key0[1:])), parse_stream(tuple(key1[1:]))
    if isinstance(game, KuhnPoker):
        return _kuhn(0, s0, other=s1)
    if isinstance(game, LeducPoker):
        return _leduc(0, s0, other=s1)
    if isinstance(game, Goofspiel):
        return _goofspiel(game, 0, s0, other=s1)
    if isinstance(game, Battleships):
        return _battleships(game, 0, s0, other=s1)
    raise ValueError(f"no history encoder for {game.game_id}")


def _kuhn(player, steps, other):
    # [own card (3)] [opp card (3), history mode only] [bet seq 3x4] [seat (2)]
    own = np.zeros(3)
    opp = np.zeros(3)
    bets = np.zeros((3, 4))
    pos = 0
    for action, priv, pub in steps:
        if priv:
            own[priv[0]] = 1.0
        if pub and pub[0] >= 10:
            bets[pos, pub[0] - 10] = 1.0
            pos += 1
    if other is not None:
        for action, priv, pub in other:
            if priv:
                opp[priv[0]] = 1.0
        return np.concatenate([own, opp, bets.ravel()])
    seat = np.zeros(2)
    seat[player] = 1.0
    return np.concatenate([own, bets.ravel(), seat])


def _leduc(player, steps, other):
    # [own rank 3][pub rank 4 (none+3)][round one-hot 2][bets 2 rounds x 4 x 3][seat 2]
    own = np.zeros(3)
    opp = np.zeros(3)
    pub_rank = np.zeros(4)
    pub_rank[0] = 1.0
    bets = np.zeros((2, 4, 3))
    rnd, pos = 0, 0
    for action, priv, pub in steps:
        if priv:
            own[priv[0]] = 1.0
        if pub:
            tok = pub[0]
            if 10 <= tok < 20:
                pub_rank[:] = 0.0
                pub_rank[1 + (tok - 10)] = 1.0
                rnd, pos = 1, 0
            elif tok >= 20:
                act = tok - 20
                if pos < 4:
                    bets[rnd, pos, act] = 1.0
                pos += 1
                if act == 0 and pos >= 2 and rnd == 0:
                    rnd, pos = 1, 0
    round_oh = np.zeros(2)
    round_oh[rnd] = 1.0
    if other is not None:
        for action, priv, pub in other:
            if priv:
                opp[priv[0]] = 1.0
        return np.concatenate([own, opp, pub_rank, round_oh, bets.ravel()])
    seat = np.zeros(2)
    seat[player] = 1.0
    return np.concatenate([own, pub_rank, round_oh, bets.ravel(), seat])


def _goofspiel(game: Goofspiel, player, steps, other):
    n = game.num_cards
    hand = np.ones(n)
    upcard = np.zeros(n)
    deck = np.ones(n)
    outcomes = np.zeros((n, 3))
    bids = np.zeros((n - 1, n))
    opp_bids = np.zeros((n - 1, n))
    rnd = 0
    if game.order == "descending":
        upcard[n - 1] = 1.0
        deck[n - 1] = 0.0

    def eat(step_list, bid_rows):
        nonlocal rnd
        rnd = 0
        for action, priv, pub in step_list:
            if action is not None and rnd < n - 1:
                bid_rows[rnd, action - 1] = 1.0
            for tok in pub:
                if tok >= 30:
                    upcard[:] = 0.0
                    upcard[tok - 31] = 1.0
                    deck[tok - 31] = 0.0
                elif rnd < n:
                    outcomes[rnd, tok] = 1.0
                    rnd += 1
                    if game.order == "descending" and rnd < n - 1:
                        upcard[:] = 0.0
                        upcard[n - 1 - rnd] = 1.0

    eat(steps, bids)
    for r in range(n - 1):
        played = np.nonzero(bids[r])[0]
        if played.size:
            hand[played[0]] = 0.0
    if other is not None:
        opp_hand = np.ones(n)
        eat(other, opp_bids)
        for r in range(n - 1):
            played = np.nonzero(opp_bids[r])[0]
            if played.size:
                opp_hand[played[0]] = 0.0
        return np.concatenate(
            [hand, opp_hand, deck, upcard, outcomes.ravel(), bids.ravel(), opp_bids.ravel()]
        )
    seat = np.zeros(2)
    seat[player] = 1.0
    return np.concatenate([hand, deck, upcard, outcomes.ravel(), bids.ravel(), seat])


def _battleships(game: Battleships, player, steps, other):
    cells = game.cells
    own_board = np.zeros(cells)
    my_shots = np.zeros((cells, 3))  # miss/hit/sunk at opponent cells
    opp_shots = np.zeros((cells, 3))  # opponent's results against me
    placed = 0.0
    shot_no = 0

    def eat(step_list, mine, theirs, my_seat):
        nonlocal placed, shot_no
        shot_no = 0
        board = None
        for action, priv, pub in step_list:
            if pub and pub[0] == 0:
                placed = 1.0
                if action is not None:
                    board = action
                continue
            if len(pub) == 2:
                cell, outcome = pub[0] - 1, pub[1] - 50
                shooter = shot_no % 2
                if shooter == my_seat:
                    mine[cell, outcome] = 1.0
                else:
                    theirs[cell, outcome] = 1.0
                shot_no += 1
        return board

    board_idx = eat(steps, my_shots, opp_shots, player)
    if board_idx is not None:
        for ship in game.layout_list[board_idx]:
            for c in ship:
                own_board[c] = 1.0
    if other is not None:
        opp_board = np.zeros(cells)
        b2 = None
        for action, priv, pub in other:
            if pub and pub[0] == 0 and action is not None:
                b2 = action
        if b2 is not None:
            for ship in game.layout_list[b2]:
                for c in ship:
                    opp_board[c] = 1.0
        to_move = np.zeros(2)
        to_move[shot_no % 2] = 1.0
        return np.concatenate(
            [own_board, opp_board, my_shots.ravel(), opp_shots.ravel(), to_move, [placed]]
        )
    seat = np.zeros(2)
    seat[player] = 1.0
    to_move = np.zeros(2)
    to_move[shot_no % 2] = 1.0
    return np.concatenate(
        [own_board, my_shots.ravel(), opp_shots.ravel(), seat, to_move, [placed]]
    )
