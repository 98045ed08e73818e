"""Depth-limited resolving with a terminate-or-follow gadget and CFR+.

The resolving construction: an artificial chance root spreads weight over
the reconstructed histories proportionally to the resolving player's and
chance's reaches; above each history the opponent may terminate for its
stored counterfactual value or follow into the depth-limited subgame. Depth
cutoff leaves are priced per iteration by letting the opponent pick, per
leaf infoset, the critic transformation that minimises the resolver's
counterfactual value (identity included), which is the best-response form of
the multi-valued leaf device.

One CFR+ implementation (alternating updates, nonnegative regrets, linearly
weighted averaging) serves gadget solving, split-subgame solving, and the
whole-game baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beliefs import (
    PublicBeliefState,
    ResolveContext,
    ZERO_REACH_WEIGHT,
    build_belief_state,
    opponent_root_cfvs,
    reconstruct_public_state,
    subgame_size,
)
from .games.base import (
    BudgetExceeded,
    CHANCE,
    Game,
    GameError,
    History,
    infoset_key,
    initial_history,
    joint_action_space,
    public_key,
)
from .policies import BasePolicy, PolicyProfile, TabularPolicy, flat_policy
from .transforms import HistoryCritic, HistoryRef, hist_key
from .tree import InfosetTable, full_tree

SOLO0, SOLO1, BOTH, CHANCE_NODE, TERMINAL, LEAF = 0, 1, 2, 3, 4, 5

GADGET_MARK = -9
TERMINATE, FOLLOW = 0, 1


class MissingCfv(GameError):
    pass


class OverlappingSubgames(GameError):
    pass


class ZeroReachInfoset(GameError):
    pass


@dataclass
class LeafEvaluator:
    """Stateless leaf pricing: critic columns for the resolving player."""

    critic: HistoryCritic
    resolving_player: int

    @property
    def count(self) -> int:
        return self.critic.count


@dataclass
class GadgetGame:
    """Flat-array resolving game (the gadget layer is optional)."""

    game: Game
    resolving_player: int
    depth_limit: int | None
    actor: np.ndarray
    depth: np.ndarray
    cum0: np.ndarray
    edge_parent: np.ndarray
    edge_child: np.ndarray
    edge_chance: np.ndarray
    edge_flat: tuple[np.ndarray, np.ndarray]
    edge_slot: tuple[np.ndarray, np.ndarray]
    infosets: tuple[InfosetTable, InfosetTable]
    # leaves (depth cutoff)
    leaf_nodes: np.ndarray
    leaf_refs: list[HistoryRef]
    leaf_iset: tuple[np.ndarray, np.ndarray]  # per player: leaf-infoset index per leaf
    leaf_iset_keys: tuple[list, list]
    leaf_pub: np.ndarray
    leaf_pub_keys: list
    root_nodes: np.ndarray  # subgame root history node ids
    root_opp_keys: list = field(default_factory=list)
    _levels: list[np.ndarray] | None = None
    _iset_levels: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.actor)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def levels(self) -> list[np.ndarray]:
        if self._levels is None:
            pd = self.depth[self.edge_parent].astype(np.int64)
            order = np.argsort(pd, kind="stable")
            bounds = np.searchsorted(pd[order], np.arange(self.max_depth + 1))
            bounds = np.append(bounds, len(order))
            self._levels = [
                order[bounds[d] : bounds[d + 1]] for d in range(self.max_depth + 1)
            ]
        return self._levels

    def iset_levels(self, player: int):
        """(infoset ids, padded slot matrix) per depth, as in the full tree."""
        cached = self._iset_levels.get(player)
        if cached is not None:
            return cached
        table = self.infosets[player]
        level_of = np.full(len(table), -1, dtype=np.int64)
        node_iset = np.full(self.n_nodes, -1, dtype=np.int64)
        for e in range(len(self.edge_parent)):
            flat = self.edge_flat[player][e]
            if flat >= 0:
                node_iset[self.edge_parent[e]] = -1  # filled below
        # infoset ids per node are implicit in edges; recover via rep edges
        per_level: list = []
        iset_of_edge = np.full(len(self.edge_parent), -1, dtype=np.int64)
        slot_iset = table.slot_iset() if len(table) else np.zeros(0, dtype=np.int64)
        mask = self.edge_flat[player] >= 0
        iset_of_edge[mask] = slot_iset[self.edge_flat[player][mask]]
        pd = self.depth[self.edge_parent].astype(np.int64)
        got = iset_of_edge >= 0
        if got.any():
            level_of[iset_of_edge[got]] = pd[got]
        for d in range(self.max_depth + 1):
            ids = np.nonzero(level_of == d)[0]
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
        self._iset_levels[player] = per_level
        return per_level

    def edge_probs(self, player: int, flat_pol: np.ndarray) -> np.ndarray:
        flat = self.edge_flat[player]
        idx = np.maximum(flat, 0)
        return np.where(flat >= 0, flat_pol[idx], 1.0)

    def real_keys(self, player: int) -> list:
        """Infoset keys excluding gadget decision infosets."""
        return [
            k for k in self.infosets[player].stream_ids if k[0] != GADGET_MARK
        ]


def build_gadget(
    beta: PublicBeliefState,
    v_o: dict | None,
    resolving_player: int,
    depth_limit: int | None,
    node_budget: int | None = 2_000_000,
) -> GadgetGame:
    """Assemble the resolving game over a reconstructed public state.

    ``v_o`` maps the opponent's root infoset keys to terminate payoffs; pass
    None to omit the gadget layer entirely (used for whole-game solving and
    blueprint-range baselines). The gadget action never counts toward the
    depth limit.
    """
    game = beta.game
    opp = 1 - resolving_player
    isets = (InfosetTable(), InfosetTable())

    actor, depth_col, cum0 = [], [], []
    e_parent, e_child, e_chance = [], [], []
    e_flat: tuple[list, list] = ([], [])
    e_slot: tuple[list, list] = ([], [])
    leaf_nodes, leaf_refs = [], []
    leaf_iset: tuple[list, list] = ([], [])
    leaf_pub = []
    leaf_iset_idx: tuple[dict, dict] = ({}, {})
    leaf_iset_keys: tuple[list, list] = ([], [])
    leaf_pub_idx: dict = {}
    leaf_pub_keys: list = []
    root_nodes = []

    weights = beta.own_reach[resolving_player] * beta.chance_reach
    weights = np.maximum(weights, ZERO_REACH_WEIGHT)
    weights = weights / weights.sum()

    def new_node(a_code, d, cum) -> int:
        actor.append(a_code)
        depth_col.append(d)
        cum0.append(cum)
        return len(actor) - 1

    def new_edge(parent, child, chance_w=1.0, fl=(-1, -1), sl=(-1, -1)):
        e_parent.append(parent)
        e_child.append(child)
        e_chance.append(chance_w)
        for p in (0, 1):
            e_flat[p].append(fl[p])
            e_slot[p].append(sl[p])

    root = new_node(CHANCE_NODE, 0, 0.0)
    stack: list[tuple[History, int, int, int]] = []
    root_opp_keys = list(beta.iset_keys[opp])

    for n, h in enumerate(beta.histories):
        if h.is_terminal():
            raise GameError("cannot resolve at a terminal public state")
        if abs(h.rewards[0]) > 1e-12:
            # terminate payoffs and critic values are "from here onward";
            # nonzero mid-game rewards would need an offset correction
            raise GameError("resolving requires zero cumulative reward at the root")
        if v_o is None:
            hid = new_node(SOLO0, 1, h.rewards[0])  # actor patched when expanded
            new_edge(root, hid, chance_w=float(weights[n]))
            root_nodes.append(hid)
            stack.append((h, hid, 0, 0))
            continue
        okey = beta.iset_keys[opp][n]
        if okey not in v_o:
            raise MissingCfv(f"no terminate value for opponent infoset {okey!r}")
        gkey = (GADGET_MARK,) + okey
        iid = isets[opp].intern(gkey, (TERMINATE, FOLLOW), -1)
        goff = int(isets[opp].offsets[iid])
        gnode = new_node(SOLO1 if opp == 1 else SOLO0, 1, 0.0)
        new_edge(root, gnode, chance_w=float(weights[n]))
        term_val = float(v_o[okey])
        tnode = new_node(TERMINAL, 2, term_val if opp == 0 else -term_val)
        fl = [-1, -1]
        sl = [-1, -1]
        fl[opp], sl[opp] = goff + TERMINATE, TERMINATE
        new_edge(gnode, tnode, fl=tuple(fl), sl=tuple(sl))
        hid = new_node(SOLO0, 2, h.rewards[0])
        fl[opp], sl[opp] = goff + FOLLOW, FOLLOW
        new_edge(gnode, hid, fl=tuple(fl), sl=tuple(sl))
        root_nodes.append(hid)
        stack.append((h, hid, 0, 0))

    while stack:
        h, nid, n0, n1 = stack.pop()
        if len(actor) > (node_budget or float("inf")):
            raise BudgetExceeded("resolve tree exceeded its node budget")
        acting = h.acting
        if not acting:
            actor[nid] = TERMINAL
            continue
        if depth_limit is not None and min(n0, n1) >= depth_limit:
            actor[nid] = LEAF
            leaf_nodes.append(nid)
            leaf_refs.append(
                HistoryRef(
                    hist_key(h.joint_actions()), infoset_key(h, 0), infoset_key(h, 1)
                )
            )
            for p in (0, 1):
                key = infoset_key(h, p)
                li = leaf_iset_idx[p].get(key)
                if li is None:
                    li = len(leaf_iset_keys[p])
                    leaf_iset_idx[p][key] = li
                    leaf_iset_keys[p].append(key)
                leaf_iset[p].append(li)
            pkey = public_key(h)
            pi = leaf_pub_idx.get(pkey)
            if pi is None:
                pi = len(leaf_pub_keys)
                leaf_pub_idx[pkey] = pi
                leaf_pub_keys.append(pkey)
            leaf_pub.append(pi)
            continue
        d = depth_col[nid]
        if acting == (CHANCE,):
            actor[nid] = CHANCE_NODE
            legal = h.legal_actions(CHANCE)
            probs = h.chance_probs()
            for a, p in zip(legal, probs):
                child = h.child((a,))
                cid = new_node(SOLO0, d + 1, child.rewards[0])
                new_edge(nid, cid, chance_w=p)
                stack.append((child, cid, n0, n1))
            continue
        actor[nid] = BOTH if len(acting) == 2 else acting[0]
        legal = {p: h.legal_actions(p) for p in acting}
        offs = {}
        for p in acting:
            iid = isets[p].intern(infoset_key(h, p), legal[p], nid)
            offs[p] = int(isets[p].offsets[iid])
        if len(acting) == 1:
            space = [(a,) for a in legal[acting[0]]]
        else:
            space = [(a0, a1) for a0 in legal[0] for a1 in legal[1]]
        n1len = len(legal[1]) if len(acting) == 2 else 0
        for j, joint in enumerate(space):
            child = h.child(joint)
            cid = new_node(SOLO0, d + 1, child.rewards[0])
            fl = [-1, -1]
            sl = [-1, -1]
            for p in acting:
                slot = (
                    j
                    if len(acting) == 1
                    else (j // n1len if p == 0 else j % n1len)
                )
                fl[p], sl[p] = offs[p] + slot, slot
            new_edge(nid, cid, fl=tuple(fl), sl=tuple(sl))
            stack.append(
                (
                    child,
                    cid,
                    n0 + (1 if 0 in acting else 0),
                    n1 + (1 if 1 in acting else 0),
                )
            )

    for t in isets:
        t.finalize()
    return GadgetGame(
        game=game,
        resolving_player=resolving_player,
        depth_limit=depth_limit,
        actor=np.asarray(actor, dtype=np.int8),
        depth=np.asarray(depth_col, dtype=np.int32),
        cum0=np.asarray(cum0, dtype=np.float64),
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
        leaf_nodes=np.asarray(leaf_nodes, dtype=np.int64),
        leaf_refs=leaf_refs,
        leaf_iset=(
            np.asarray(leaf_iset[0], dtype=np.int64),
            np.asarray(leaf_iset[1], dtype=np.int64),
        ),
        leaf_iset_keys=leaf_iset_keys,
        leaf_pub=np.asarray(leaf_pub, dtype=np.int64),
        leaf_pub_keys=leaf_pub_keys,
        root_nodes=np.asarray(root_nodes, dtype=np.int64),
    )


@dataclass
class SolveResult:
    avg: tuple[dict, dict]  # per player: infoset key -> (actions, probs)
    root_value0: float
    root_cfvs: dict  # opponent root infoset key -> avg-strategy CFV
    leaf_cfvs: dict  # leaf pub key -> {player: {infoset key: cfv}}
    iterations: int
    flags: list[str] = field(default_factory=list)

    def policy(self, player: int) -> TabularPolicy:
        pol = TabularPolicy()
        for key, (actions, probs) in self.avg[player].items():
            pol.set(key, actions, probs)
        return pol


def _rm_plus_strategy(table: InfosetTable, regrets: np.ndarray) -> np.ndarray:
    return table.normalize_flat(np.maximum(regrets, 0.0))


def _leaf_values(gg: GadgetGame, u: np.ndarray, reach0, reach1, reachc, flags):
    """Per-leaf continuation values for both players under current reaches.

    ``u`` is (n_leaf, K): resolver values per transformation. The opponent
    picks, per its leaf infoset, the column minimising the resolver's
    reach-weighted value; both players' per-leaf values follow from that
    choice. Returns (resolver per-leaf, opponent per-leaf, chosen column).
    """
    i = gg.resolving_player
    opp = 1 - i
    leaves = gg.leaf_nodes
    w_i = reach0[leaves] * reachc[leaves] if i == 0 else reach1[leaves] * reachc[leaves]
    n_oset = len(gg.leaf_iset_keys[opp])
    num = np.zeros((n_oset, u.shape[1]))
    den = np.zeros(n_oset)
    np.add.at(num, gg.leaf_iset[opp], w_i[:, None] * u)
    np.add.at(den, gg.leaf_iset[opp], w_i)
    dead = den <= 0.0
    if dead.any() and flags is not None:
        flags.add("zero-reach leaf infoset")
    safe_den = np.where(dead, 1.0, den)
    means = num / safe_den[:, None]
    tstar = np.argmin(means, axis=1)
    opp_val = np.where(dead, 0.0, -means[np.arange(n_oset), tstar])
    res_leaf = u[np.arange(len(leaves)), tstar[gg.leaf_iset[opp]]]
    res_leaf = np.where(dead[gg.leaf_iset[opp]], 0.0, res_leaf)
    opp_leaf = opp_val[gg.leaf_iset[opp]]
    return res_leaf, opp_leaf, tstar


def leaf_values(beta: PublicBeliefState, evaluator: LeafEvaluator):
    """Counterfactual values of a leaf public state for both players.

    Follows the per-opponent-infoset best-response-over-transformations rule
    and returns ({player: {infoset key: value}}, chosen column per opponent
    infoset, zero-reach flags).
    """
    i = evaluator.resolving_player
    opp = 1 - i
    refs = [
        HistoryRef(hist_key(h.joint_actions()), k0, k1)
        for h, k0, k1 in zip(beta.histories, beta.iset_keys[0], beta.iset_keys[1])
    ]
    u = evaluator.critic.values_batch(refs)[:, i, :]  # (n, K)
    w_i = beta.own_reach[i] * beta.chance_reach
    w_o = beta.own_reach[opp] * beta.chance_reach
    n_oset = len(beta.infosets[opp])
    num = np.zeros((n_oset, u.shape[1]))
    den = np.zeros(n_oset)
    np.add.at(num, beta.iset_of[opp], w_i[:, None] * u)
    np.add.at(den, beta.iset_of[opp], w_i)
    dead_o = den <= 0.0
    means = num / np.where(dead_o, 1.0, den)[:, None]
    tstar = np.argmin(means, axis=1)
    opp_vals = np.where(dead_o, 0.0, -means[np.arange(n_oset), tstar])

    res_hist = u[np.arange(len(refs)), tstar[beta.iset_of[opp]]]
    n_iset = len(beta.infosets[i])
    rnum = np.zeros(n_iset)
    rden = np.zeros(n_iset)
    np.add.at(rnum, beta.iset_of[i], w_o * res_hist)
    np.add.at(rden, beta.iset_of[i], w_o)
    dead_i = rden <= 0.0
    res_vals = np.where(dead_i, 0.0, rnum / np.where(dead_i, 1.0, rden))

    out = {
        i: dict(zip(beta.infosets[i], res_vals)),
        opp: dict(zip(beta.infosets[opp], opp_vals)),
    }
    flags = {
        i: dict(zip(beta.infosets[i], dead_i)),
        opp: dict(zip(beta.infosets[opp], dead_o)),
    }
    return out, tstar, flags


def cfr_plus(
    gg: GadgetGame,
    iterations: int,
    evaluator: LeafEvaluator | None = None,
) -> SolveResult:
    """Alternating-update regret-matching-plus with linear averaging."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(gg.leaf_nodes) and evaluator is None:
        raise MissingCfv("depth-limited tree needs a leaf evaluator")
    u_leaf = None
    if len(gg.leaf_nodes):
        u_leaf = evaluator.critic.values_batch(gg.leaf_refs)[
            :, gg.resolving_player, :
        ]
    tables = gg.infosets
    regrets = [np.zeros(t.total_slots) for t in tables]
    avg = [np.zeros(t.total_slots) for t in tables]
    flags: set[str] = set()
    levels = gg.levels()
    n_nodes = gg.n_nodes

    for it in range(1, iterations + 1):
        for trav in (0, 1):
            sigma = (
                _rm_plus_strategy(tables[0], regrets[0]),
                _rm_plus_strategy(tables[1], regrets[1]),
            )
            w0 = gg.edge_probs(0, sigma[0])
            w1 = gg.edge_probs(1, sigma[1])
            reach0 = np.zeros(n_nodes)
            reach1 = np.zeros(n_nodes)
            reachc = np.zeros(n_nodes)
            reach0[0] = reach1[0] = reachc[0] = 1.0
            for edges in levels:
                if not len(edges):
                    continue
                par, chi = gg.edge_parent[edges], gg.edge_child[edges]
                reach0[chi] = reach0[par] * w0[edges]
                reach1[chi] = reach1[par] * w1[edges]
                reachc[chi] = reachc[par] * gg.edge_chance[edges]

            sign = 1.0 if trav == 0 else -1.0
            value = np.where(gg.actor == TERMINAL, sign * gg.cum0, 0.0)
            if u_leaf is not None and len(gg.leaf_nodes):
                res_leaf, opp_leaf, _ = _leaf_values(
                    gg, u_leaf, reach0, reach1, reachc, flags
                )
                if trav == gg.resolving_player:
                    value[gg.leaf_nodes] = res_leaf
                else:
                    value[gg.leaf_nodes] = opp_leaf

            cfreach = (reach1 if trav == 0 else reach0) * reachc
            w_opp = gg.edge_chance * (w1 if trav == 0 else w0)
            eflat = gg.edge_flat[trav]
            sig_t = sigma[trav]
            acc = np.zeros(tables[trav].total_slots)
            iset_levels = gg.iset_levels(trav)
            for d in range(gg.max_depth, -1, -1):
                edges = levels[d]
                if not len(edges):
                    continue
                tmask = eflat[edges] >= 0
                tedges = edges[tmask]
                if len(tedges):
                    par, chi = gg.edge_parent[tedges], gg.edge_child[tedges]
                    fl = eflat[tedges]
                    contrib = cfreach[par] * w_opp[tedges] * value[chi]
                    acc[fl] = 0.0
                    np.add.at(acc, fl, contrib)
                    ids, pad = iset_levels[d]
                    np.add.at(value, par, sig_t[fl] * w_opp[tedges] * value[chi])
                    if pad is not None:
                        padded = np.where(pad >= 0, acc[np.maximum(pad, 0)], 0.0)
                        strat = np.where(pad >= 0, sig_t[np.maximum(pad, 0)], 0.0)
                        cfv = (padded * strat).sum(axis=1, keepdims=True)
                        delta = np.where(pad >= 0, padded - cfv, 0.0)
                        flat_ids = pad[pad >= 0]
                        regrets[trav][flat_ids] = np.maximum(
                            regrets[trav][flat_ids] + delta[pad >= 0], 0.0
                        )
                oedges = edges[~tmask]
                if len(oedges):
                    np.add.at(
                        value,
                        gg.edge_parent[oedges],
                        w_opp[oedges] * value[gg.edge_child[oedges]],
                    )
            # linear averaging on the traverser's own pass
            reach_t = reach0 if trav == 0 else reach1
            mask = eflat >= 0
            np.add.at(
                avg[trav],
                eflat[mask],
                it * reach_t[gg.edge_child[mask]],
            )

    avg_flat = [tables[p].normalize_flat(avg[p]) for p in (0, 1)]
    return _finalize_solve(gg, avg_flat, u_leaf, iterations, flags)


def _finalize_solve(gg, avg_flat, u_leaf, iterations, flags) -> SolveResult:
    """Package average strategies plus avg-strategy CFVs at root and leaves."""
    w0 = gg.edge_probs(0, avg_flat[0])
    w1 = gg.edge_probs(1, avg_flat[1])
    n = gg.n_nodes
    reach0 = np.zeros(n)
    reach1 = np.zeros(n)
    reachc = np.zeros(n)
    reach0[0] = reach1[0] = reachc[0] = 1.0
    for edges in gg.levels():
        if not len(edges):
            continue
        par, chi = gg.edge_parent[edges], gg.edge_child[edges]
        reach0[chi] = reach0[par] * w0[edges]
        reach1[chi] = reach1[par] * w1[edges]
        reachc[chi] = reachc[par] * gg.edge_chance[edges]

    value0 = np.where(gg.actor == TERMINAL, gg.cum0, 0.0)
    leaf_store: dict = {}
    if u_leaf is not None and len(gg.leaf_nodes):
        res_leaf, opp_leaf, _ = _leaf_values(gg, u_leaf, reach0, reach1, reachc, flags)
        i = gg.resolving_player
        val0_leaf = res_leaf if i == 0 else -res_leaf
        value0[gg.leaf_nodes] = val0_leaf
        # per-leaf-public-state CFVs for continual reuse, both players
        for p in (0, 1):
            per_hist = val0_leaf if p == 0 else -val0_leaf
            w = (reach1 if p == 0 else reach0)[gg.leaf_nodes] * reachc[gg.leaf_nodes]
            n_iset = len(gg.leaf_iset_keys[p])
            num = np.zeros(n_iset)
            den = np.zeros(n_iset)
            np.add.at(num, gg.leaf_iset[p], w * per_hist)
            np.add.at(den, gg.leaf_iset[p], w)
            vals = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
            for li, key in enumerate(gg.leaf_iset_keys[p]):
                pub = gg.leaf_pub_keys[int(gg.leaf_pub[np.argmax(gg.leaf_iset[p] == li)])]
                leaf_store.setdefault(pub, {}).setdefault(p, {})[key] = float(vals[li])

    w_edge = gg.edge_chance * w0 * w1
    for edges in reversed(gg.levels()):
        if not len(edges):
            continue
        np.add.at(
            value0,
            gg.edge_parent[edges],
            w_edge[edges] * value0[gg.edge_child[edges]],
        )

    # root CFVs for the opponent over its root infosets (under avg strategy)
    opp = 1 - gg.resolving_player
    root_cfvs: dict = {}
    num: dict = {}
    den: dict = {}
    for nid in gg.root_nodes:
        h_iset_key = None
        # recover the opponent's infoset key from the gadget or the node
        # itself: for gadget trees the parent edge carries the gadget infoset
        pass
    # group root histories by opponent key via leaf-style bookkeeping
    # (root infoset keys were interned during construction)
    for nid in gg.root_nodes:
        w = reach0[nid] if opp == 0 else reach1[nid]
        w *= reachc[nid]
        # reach of the opponent's own actions is 1 above the root; chance
        # weight of the artificial root already carries P_i * P_c
        key = ("root", int(nid))
        num[key] = w * (value0[nid] if opp == 0 else -value0[nid])
        den[key] = w
        root_cfvs[key] = num[key] / den[key] if den[key] > 0 else 0.0

    avg_dicts: tuple[dict, dict] = ({}, {})
    for p in (0, 1):
        table = gg.infosets[p]
        for iid in range(len(table)):
            key = table.stream_ids[iid]
            if key[0] == GADGET_MARK:
                continue
            off = int(table.offsets[iid])
            cnt = int(table.n_actions[iid])
            actions = tuple(int(a) for a in table.actions[off : off + cnt])
            avg_dicts[p][key] = (actions, avg_flat[p][off : off + cnt].copy())
    return SolveResult(
        avg=avg_dicts,
        root_value0=float(value0[0]),
        root_cfvs=root_cfvs,
        leaf_cfvs=leaf_store,
        iterations=iterations,
        flags=sorted(flags),
    )
