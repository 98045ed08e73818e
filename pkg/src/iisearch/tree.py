"""Flat-array game trees and vectorised exact evaluation.

Building the explicit tree once (per game, per process) turns expected
values, best responses and exploitability into a handful of numpy passes per
depth level, which is what makes whole-game experiments tractable on one
CPU. The recursive oracles in ``games.base`` stay as the independent slow
route; tests require both to agree.

Node actor codes: ``0``/``1`` solo player, ``2`` both players, ``3`` chance,
``4`` terminal. Policies enter as flat probability arrays with one slot per
(infoset, action) pair, see :class:`InfosetTable`.

Keys are interned hierarchically: a stream id is defined by (parent stream
id, step tokens), which is equivalent to interning the full length-prefixed
token stream but hashes O(1) per step. ``rebuild`` recovers the real tuple.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .games.base import (
    CHANCE,
    BudgetExceeded,
    Game,
    History,
    _player_step_tokens,
    initial_history,
    joint_action_space,
)

SOLO0, SOLO1, BOTH, CHANCE_NODE, TERMINAL = 0, 1, 2, 3, 4


class StreamIntern:
    """Interns token streams via (parent id, step tokens) pairs.

    Id 0 is the empty stream. Equal ids <=> equal full streams, because the
    length-prefixed step encoding makes the step decomposition unambiguous.
    """

    def __init__(self):
        self.ids: dict = {}
        self.parent: list[int] = [0]
        self.step: list[tuple[int, ...]] = [()]

    def extend(self, parent_id: int, step: tuple[int, ...]) -> int:
        key = (parent_id, step)
        sid = self.ids.get(key)
        if sid is None:
            sid = len(self.parent)
            self.ids[key] = sid
            self.parent.append(parent_id)
            self.step.append(step)
        return sid

    def rebuild(self, sid: int) -> tuple[int, ...]:
        parts = []
        while sid != 0:
            parts.append(self.step[sid])
            sid = self.parent[sid]
        out: tuple[int, ...] = ()
        for part in reversed(parts):
            out += part
        return out


@dataclass
class InfosetTable:
    """Per-player infoset index: stream ids, action lists, flat-slot offsets."""

    stream_ids: list = field(default_factory=list)
    ids: dict = field(default_factory=dict)
    n_actions: list = field(default_factory=list)
    offsets: list = field(default_factory=list)
    actions: list = field(default_factory=list)  # flat game-level action ids
    rep_node: list = field(default_factory=list)
    total_slots: int = 0

    def intern(self, stream_id: int, legal, node_id: int) -> int:
        iid = self.ids.get(stream_id)
        if iid is None:
            iid = len(self.stream_ids)
            self.ids[stream_id] = iid
            self.stream_ids.append(stream_id)
            self.n_actions.append(len(legal))
            self.offsets.append(self.total_slots)
            self.actions.extend(legal)
            self.rep_node.append(node_id)
            self.total_slots += len(legal)
        return iid

    def finalize(self):
        self.n_actions = np.asarray(self.n_actions, dtype=np.int64)
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rep_node = np.asarray(self.rep_node, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.stream_ids)

    def slot_iset(self) -> np.ndarray:
        """Infoset id per flat slot."""
        return np.repeat(np.arange(len(self.stream_ids)), self.n_actions)

    def uniform_flat(self) -> np.ndarray:
        counts = np.repeat(self.n_actions.astype(np.float64), self.n_actions)
        return 1.0 / counts

    def normalize_flat(self, weights: np.ndarray) -> np.ndarray:
        """Per-infoset normalisation (uniform where a segment sums to 0)."""
        seg = self.slot_iset()
        sums = np.bincount(seg, weights=weights, minlength=len(self.stream_ids))
        counts = self.n_actions.astype(np.float64)
        out = np.where(
            sums[seg] > 0, weights / np.where(sums[seg] > 0, sums[seg], 1.0),
            1.0 / counts[seg],
        )
        return out


@dataclass
class GameTree:
    game: Game
    actor: np.ndarray
    depth: np.ndarray
    child_start: np.ndarray
    n_children: np.ndarray
    cum0: np.ndarray
    pub_id: np.ndarray
    iset: tuple[np.ndarray, np.ndarray]
    edge_parent: np.ndarray
    edge_child: np.ndarray
    edge_chance: np.ndarray
    edge_flat: tuple[np.ndarray, np.ndarray]
    edge_slot: tuple[np.ndarray, np.ndarray]
    infosets: tuple[InfosetTable, InfosetTable]
    streams: tuple[StreamIntern, StreamIntern]
    pub_intern: StreamIntern
    pub_sids: np.ndarray  # stream id of the public key per pub id
    root_history: History
    _level_edges: list[np.ndarray] | None = None
    _br_cache: dict = field(default_factory=dict)
    _in_edge: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.actor)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def level_edges(self) -> list[np.ndarray]:
        """Edge indices grouped by parent depth."""
        if self._level_edges is None:
            pd = self.depth[self.edge_parent].astype(np.int64)
            order = np.argsort(pd, kind="stable")
            bounds = np.searchsorted(pd[order], np.arange(self.max_depth + 1))
            bounds = np.append(bounds, len(order))
            self._level_edges = [
                order[bounds[d] : bounds[d + 1]] for d in range(self.max_depth + 1)
            ]
        return self._level_edges

    def infoset_key(self, player: int, iid: int) -> tuple[int, ...]:
        """Real (player-prefixed) infoset key tuple for an infoset id."""
        sid = self.infosets[player].stream_ids[iid]
        return (player,) + self.streams[player].rebuild(sid)

    def public_key_of(self, pub_id: int) -> tuple[int, ...]:
        return self.pub_intern.rebuild(int(self.pub_sids[pub_id]))

    def in_edge(self) -> np.ndarray:
        if self._in_edge is None:
            arr = np.full(self.n_nodes, -1, dtype=np.int64)
            arr[self.edge_child] = np.arange(len(self.edge_child))
            self._in_edge = arr
        return self._in_edge

    def node_history(self, node: int) -> History:
        """Rebuild the History at a node by replaying its sibling slots."""
        slots = []
        in_edge = self.in_edge()
        while node != 0:
            e = int(in_edge[node])
            parent = int(self.edge_parent[e])
            slots.append(e - int(self.child_start[parent]))
            node = parent
        h = self.root_history
        for slot in reversed(slots):
            h = h.child(joint_action_space(h)[slot])
        return h

    # ------------------------------------------------------------------
    def edge_probs(self, player: int, flat_policy: np.ndarray) -> np.ndarray:
        """Per-edge probability contribution of one player (1 where idle)."""
        flat = self.edge_flat[player]
        idx = np.maximum(flat, 0)
        return np.where(flat >= 0, flat_policy[idx], 1.0)

    def expected_value(
        self, flat0: np.ndarray, flat1: np.ndarray, values_out: bool = False
    ):
        """Exact player-0 expectation of the final cumulative reward.

        With ``values_out``, entry n is E[final cum0 | reach n]; subtract
        ``cum0[n]`` for the expected reward collected from n onward.
        """
        w = self.edge_chance * self.edge_probs(0, flat0) * self.edge_probs(1, flat1)
        value = np.where(self.actor == TERMINAL, self.cum0, 0.0)
        for edges in reversed(self.level_edges()):
            if len(edges):
                np.add.at(value, self.edge_parent[edges],
                          w[edges] * value[self.edge_child[edges]])
        return value if values_out else float(value[0])

    def reaches(self, flat0, flat1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-node reach products (player 0, player 1, chance)."""
        out = []
        for w in (
            self.edge_probs(0, flat0),
            self.edge_probs(1, flat1),
            self.edge_chance,
        ):
            reach = np.zeros(self.n_nodes)
            reach[0] = 1.0
            for edges in self.level_edges():
                if len(edges):
                    reach[self.edge_child[edges]] = (
                        reach[self.edge_parent[edges]] * w[edges]
                    )
            out.append(reach)
        return tuple(out)

    # ------------------------------------------------------------------
    def _br_levels(self, responder: int):
        """Per-depth infoset ids and padded flat-slot matrices (cached)."""
        cached = self._br_cache.get(responder)
        if cached is not None:
            return cached
        table = self.infosets[responder]
        iset_ids = self.iset[responder]
        level_of_iset = np.full(len(table), -1, dtype=np.int64)
        mask = iset_ids >= 0
        level_of_iset[iset_ids[mask]] = self.depth[mask]
        per_level = []
        for d in range(self.max_depth + 1):
            ids = np.nonzero(level_of_iset == d)[0]
            if len(ids) == 0:
                per_level.append((ids, None))
                continue
            n_act = table.n_actions[ids]
            width = int(n_act.max())
            pad = -np.ones((len(ids), width), dtype=np.int64)
            cols = np.arange(width)[None, :]
            valid = cols < n_act[:, None]
            pad[valid] = (table.offsets[ids][:, None] + cols)[valid]
            per_level.append((ids, pad))
        self._br_cache[responder] = per_level
        return per_level

    def best_response(
        self, responder: int, opp_flat: np.ndarray, return_policy: bool = False
    ):
        """Exact best-response value for ``responder`` vs a fixed opponent.

        One counterfactual-reach forward pass, then a bottom-up pass doing a
        per-infoset argmax at each depth level.
        """
        w_opp = self.edge_chance * self.edge_probs(1 - responder, opp_flat)
        cfreach = np.zeros(self.n_nodes)
        cfreach[0] = 1.0
        for edges in self.level_edges():
            if len(edges):
                cfreach[self.edge_child[edges]] = (
                    cfreach[self.edge_parent[edges]] * w_opp[edges]
                )

        sign = 1.0 if responder == 0 else -1.0
        value = np.where(self.actor == TERMINAL, sign * self.cum0, 0.0)
        table = self.infosets[responder]
        best_slot = np.zeros(max(len(table), 1), dtype=np.int64)
        acc = np.zeros(max(table.total_slots, 1))
        eflat = self.edge_flat[responder]
        eslot = self.edge_slot[responder]
        levels = self._br_levels(responder)
        all_levels = self.level_edges()
        for d in range(self.max_depth, -1, -1):
            edges = all_levels[d]
            if len(edges) == 0:
                continue
            rmask = eflat[edges] >= 0
            redges = edges[rmask]
            if len(redges):
                contrib = (
                    cfreach[self.edge_parent[redges]]
                    * w_opp[redges]
                    * value[self.edge_child[redges]]
                )
                touched = eflat[redges]
                acc[touched] = 0.0
                np.add.at(acc, touched, contrib)
                ids, pad = levels[d]
                if pad is not None:
                    padded = np.where(pad >= 0, acc[np.maximum(pad, 0)], -np.inf)
                    best_slot[ids] = np.argmax(padded, axis=1)
                keep = (
                    best_slot[self.iset[responder][self.edge_parent[redges]]]
                    == eslot[redges]
                )
                sel = redges[keep]
                np.add.at(value, self.edge_parent[sel],
                          w_opp[sel] * value[self.edge_child[sel]])
            oedges = edges[~rmask]
            if len(oedges):
                np.add.at(value, self.edge_parent[oedges],
                          w_opp[oedges] * value[self.edge_child[oedges]])
        if not return_policy:
            return float(value[0])
        probs = np.zeros(table.total_slots)
        probs[table.offsets + best_slot[: len(table)]] = 1.0
        return float(value[0]), probs

    def exploitability(self, flat0: np.ndarray, flat1: np.ndarray) -> float:
        """Summed exploitability BR(1 vs pi0) + BR(0 vs pi1).

        Equilibrium values cancel in the zero-sum sum, so no game value is
        needed; the result is >= 0 and is 0 exactly at an equilibrium.
        """
        return self.best_response(1, flat0) + self.best_response(0, flat1)

    # ------------------------------------------------------------------
    def nodes_by_public(self) -> dict[int, np.ndarray]:
        order = np.argsort(self.pub_id, kind="stable")
        sorted_ids = self.pub_id[order]
        n_pub = len(self.pub_sids)
        bounds = np.searchsorted(sorted_ids, np.arange(n_pub + 1))
        return {pid: order[bounds[pid] : bounds[pid + 1]] for pid in range(n_pub)}

    def node_for_actions(self, joints) -> int:
        """Follow a joint-action sequence from the root; returns a node id."""
        node = 0
        h = self.root_history
        for joint in joints:
            space = joint_action_space(h)
            idx = space.index(tuple(joint))
            node = int(self.edge_child[self.child_start[node] + idx])
            h = h.child(tuple(joint))
        return node


def build_tree(
    game: Game,
    root: History | None = None,
    node_budget: int | None = 20_000_000,
) -> GameTree:
    """Materialise the explicit tree below ``root`` (default: the full game)."""
    isets = (InfosetTable(), InfosetTable())
    streams = (StreamIntern(), StreamIntern())
    pub_intern = StreamIntern()
    pub_ids: dict[int, int] = {}
    pub_sids: list[int] = []

    actor, depth_col, child_start, n_children = [], [], [], []
    cum0, pub_col = [], []
    iset_cols: tuple[list, list] = ([], [])
    e_parent: list[int] = []
    e_child: list[int] = []
    e_chance: list[float] = []
    e_flat: tuple[list, list] = ([], [])
    e_slot: tuple[list, list] = ([], [])

    root_h = root if root is not None else initial_history(game)

    def add_node(d, cum, s0, s1, psid):
        actor.append(TERMINAL)
        depth_col.append(d)
        child_start.append(0)
        n_children.append(0)
        cum0.append(cum)
        pid = pub_ids.get(psid)
        if pid is None:
            pid = len(pub_sids)
            pub_ids[psid] = pid
            pub_sids.append(psid)
        pub_col.append(pid)
        iset_cols[0].append(-1)
        iset_cols[1].append(-1)

    # stack entries: (state, node_id, cum0, sid0, sid1, pub_sid, depth)
    add_node(0, root_h.rewards[0], 0, 0, 0)
    stack = [(root_h.state, 0, root_h.rewards[0], 0, 0, 0, 0)]
    next_id = 1

    while stack:
        state, nid, cum, sid0, sid1, psid, d = stack.pop()
        acting = game.acting_players(state)
        if not acting:
            continue  # already marked TERMINAL
        if node_budget is not None and next_id > node_budget:
            raise BudgetExceeded(f"tree exceeded {node_budget} nodes")

        if acting == (CHANCE,):
            actor[nid] = CHANCE_NODE
            legal = game.legal_actions(state, CHANCE)
            probs = game.chance_probs(state)
            if probs is None:
                probs = [1.0 / len(legal)] * len(legal)
            child_start[nid] = len(e_child)
            n_children[nid] = len(legal)
            for a, p in zip(legal, probs):
                res = game.step(state, (a,))
                cid = next_id
                next_id += 1
                e_parent.append(nid)
                e_child.append(cid)
                e_chance.append(p)
                e_flat[0].append(-1)
                e_flat[1].append(-1)
                e_slot[0].append(-1)
                e_slot[1].append(-1)
                c_sid0 = streams[0].extend(
                    sid0, _player_step_tokens(False, -1, res.private_obs[0], res.public_obs)
                )
                c_sid1 = streams[1].extend(
                    sid1, _player_step_tokens(False, -1, res.private_obs[1], res.public_obs)
                )
                c_psid = pub_intern.extend(psid, (len(res.public_obs),) + res.public_obs)
                add_node(d + 1, cum + res.rewards[0], c_sid0, c_sid1, c_psid)
                stack.append(
                    (res.state, cid, cum + res.rewards[0], c_sid0, c_sid1, c_psid, d + 1)
                )
            continue

        actor[nid] = BOTH if len(acting) == 2 else acting[0]
        legal = {pl: game.legal_actions(state, pl) for pl in acting}
        sids = {0: sid0, 1: sid1}
        flats = {}
        for pl in acting:
            iid = isets[pl].intern(sids[pl], legal[pl], nid)
            iset_cols[pl][nid] = iid
            flats[pl] = isets[pl].offsets[iid]
        if len(acting) == 1:
            space = [(a,) for a in legal[acting[0]]]
            slot_of = lambda j: {acting[0]: j}  # noqa: E731
        else:
            n1 = len(legal[1])
            space = [(a0, a1) for a0 in legal[0] for a1 in legal[1]]
            slot_of = lambda j: {0: j // n1, 1: j % n1}  # noqa: E731
        child_start[nid] = len(e_child)
        n_children[nid] = len(space)
        for j, joint in enumerate(space):
            res = game.step(state, joint)
            cid = next_id
            next_id += 1
            slots = slot_of(j)
            e_parent.append(nid)
            e_child.append(cid)
            e_chance.append(1.0)
            for pl in (0, 1):
                if pl in slots:
                    e_flat[pl].append(flats[pl] + slots[pl])
                    e_slot[pl].append(slots[pl])
                else:
                    e_flat[pl].append(-1)
                    e_slot[pl].append(-1)
            new_sids = []
            for pl in (0, 1):
                if pl in slots:
                    step = _player_step_tokens(
                        True, joint[acting.index(pl)], res.private_obs[pl], res.public_obs
                    )
                else:
                    step = _player_step_tokens(False, -1, res.private_obs[pl], res.public_obs)
                new_sids.append(streams[pl].extend(sids[pl], step))
            c_psid = pub_intern.extend(psid, (len(res.public_obs),) + res.public_obs)
            add_node(d + 1, cum + res.rewards[0], new_sids[0], new_sids[1], c_psid)
            stack.append(
                (res.state, cid, cum + res.rewards[0], new_sids[0], new_sids[1], c_psid, d + 1)
            )

    for t in isets:
        t.finalize()
    return GameTree(
        game=game,
        actor=np.asarray(actor, dtype=np.int8),
        depth=np.asarray(depth_col, dtype=np.int16),
        child_start=np.asarray(child_start, dtype=np.int64),
        n_children=np.asarray(n_children, dtype=np.int32),
        cum0=np.asarray(cum0, dtype=np.float64),
        pub_id=np.asarray(pub_col, dtype=np.int32),
        iset=(
            np.asarray(iset_cols[0], dtype=np.int64),
            np.asarray(iset_cols[1], dtype=np.int64),
        ),
        edge_parent=np.asarray(e_parent, dtype=np.int64),
        edge_child=np.asarray(e_child, dtype=np.int64),
        edge_chance=np.asarray(e_chance, dtype=np.float64),
        edge_flat=(
            np.asarray(e_flat[0], dtype=np.int64),
            np.asarray(e_flat[1], dtype=np.int64),
        ),
        edge_slot=(
            np.asarray(e_slot[0], dtype=np.int16),
            np.asarray(e_slot[1], dtype=np.int16),
        ),
        infosets=isets,
        streams=streams,
        pub_intern=pub_intern,
        pub_sids=np.asarray(pub_sids, dtype=np.int64),
        root_history=root_h,
    )


_tree_cache: dict[str, GameTree] = {}


def full_tree(game: Game, node_budget: int | None = 20_000_000) -> GameTree:
    """Process-wide cached full tree for enumerable games."""
    tree = _tree_cache.get(game.game_id)
    if tree is None:
        tree = build_tree(game, node_budget=node_budget)
        _tree_cache[game.game_id] = tree
    return tree
