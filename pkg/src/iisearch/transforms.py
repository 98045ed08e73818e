"""Policy transformations and the per-history, per-transformation critic.

A transformation set holds K directions per player role (index 0 is the
identity and is never updated); applying one moves the base policy a fixed
step along the direction and projects back onto the simplex. Directions are
learned online from how the actor policy moved on each sampled trajectory,
with only the nearest direction updated.

The critic estimates, for every history and each transformation t, the
expected value for player i when i follows the blueprint and the opponent
follows the transformed blueprint. It is trained off-policy with a
truncated-importance-ratio return estimator over full histories; the exact
one-sweep operator used by the fixed-point tests lives here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .features import (
    action_universe,
    history_features,
    infoset_features,
    parse_stream,
)
from .games.base import Game
from .nets import MLP, Adam
from .policies import BasePolicy

IDENTITY = 0


class IdentityImmutable(ValueError):
    pass


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    n = len(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def apply_transformation(dist: np.ndarray, direction: np.ndarray | None, k: float) -> np.ndarray:
    """Shift ``dist`` by ``k * direction`` and project back to the simplex.

    ``direction=None`` (or the zero vector) is the identity and returns the
    input unchanged, bit-exactly.
    """
    if direction is None:
        return dist
    direction = np.asarray(direction, dtype=np.float64)
    if not direction.any():
        return dist
    moved = np.asarray(dist, dtype=np.float64) + k * direction
    if moved.min() >= 0.0:
        total = moved.sum()
        if abs(total - 1.0) < 1e-12:
            return moved
    return project_to_simplex(moved)


def actor_direction(
    pi_old: list[np.ndarray], pi_new: list[np.ndarray]
) -> tuple[list[np.ndarray], bool]:
    """Per-infoset policy movement, normalised jointly to unit length.

    Returns (directions, moved). When old and new coincide the direction is
    all-zero and ``moved`` is False so callers can skip the update.
    """
    diffs = [np.asarray(n) - np.asarray(o) for o, n in zip(pi_old, pi_new)]
    norm = math.sqrt(sum(float(np.sum(d * d)) for d in diffs))
    if norm == 0.0:
        return diffs, False
    return [d / norm for d in diffs], True


class TransformationSet:
    """K directions for one player role; index 0 is the identity."""

    def __init__(self, count: int, step_size: float):
        if count < 1:
            raise ValueError("need at least the identity transformation")
        self.count = count
        self.step_size = step_size

    def direction(self, t: int, key, legal) -> np.ndarray | None:
        raise NotImplementedError

    def transform(self, t: int, dist: np.ndarray, key, legal) -> np.ndarray:
        if t == IDENTITY:
            return dist
        return apply_transformation(dist, self.direction(t, key, legal), self.step_size)

    def update(self, t: int, keys, legals, targets, rate: float):
        raise NotImplementedError


class TabularTransformationSet(TransformationSet):
    def __init__(self, count: int, step_size: float):
        super().__init__(count, step_size)
        self.tables: list[dict] = [dict() for _ in range(count)]

    def direction(self, t: int, key, legal) -> np.ndarray | None:
        if t == IDENTITY:
            return None
        vec = self.tables[t].get(key)
        if vec is None:
            return None
        return vec - vec.mean()

    def update(self, t: int, keys, legals, targets, rate: float):
        if t == IDENTITY:
            raise IdentityImmutable("transformation 0 is fixed to the identity")
        table = self.tables[t]
        for key, target in zip(keys, targets):
            target = np.asarray(target, dtype=np.float64)
            cur = table.get(key)
            if cur is None:
                table[key] = rate * target
            else:
                table[key] = cur + rate * (target - cur)


class MlpTransformationSet(TransformationSet):
    """One net with (K-1) stacked direction heads over the action universe."""

    def __init__(self, game: Game, count: int, step_size: float,
                 hidden: tuple[int, ...], rng: np.random.Generator,
                 lr: float = 0.1):
        super().__init__(count, step_size)
        self.game = game
        self.universe = action_universe(game)
        sizes = [len(infoset_features(game, (0,)))] + list(hidden) + [
            (count - 1) * self.universe
        ]
        self.net = MLP.create(sizes, rng, scale=0.1)
        self.opt = Adam(lr=lr)

    def direction(self, t: int, key, legal) -> np.ndarray | None:
        if t == IDENTITY:
            return None
        out = self.net.forward(infoset_features(self.game, key))
        row = out[(t - 1) * self.universe : t * self.universe]
        vec = row[list(legal)]
        return vec - vec.mean()

    def update(self, t: int, keys, legals, targets, rate: float):
        if t == IDENTITY:
            raise IdentityImmutable("transformation 0 is fixed to the identity")
        if not keys:
            return
        feats = np.stack([infoset_features(self.game, k) for k in keys])
        out, cache = self.net.forward(feats, want_cache=True)
        dout = np.zeros_like(out)
        base = (t - 1) * self.universe
        for row, (legal, target) in enumerate(zip(legals, targets)):
            ids = [base + a for a in legal]
            pred = out[row, ids]
            pred = pred - pred.mean()
            dout[row, ids] = pred - np.asarray(target)  # L2 on centred output
        gw, gb = self.net.backward(cache, dout / max(len(keys), 1))
        self.opt.lr = rate
        self.opt.step(self.net.params(), gw + gb)


class PredefinedGoofspielSet(TransformationSet):
    """Hand-written bid-shaping directions (our own library, game-specific).

    Each rule maps the current infoset to a zero-sum direction over the legal
    bids; the identity stays at index 0.
    """

    def __init__(self, game, step_size: float):
        self.game = game
        self.rules: list[tuple[str, Callable]] = _goofspiel_rules(game)
        super().__init__(1 + len(self.rules), step_size)

    def direction(self, t: int, key, legal) -> np.ndarray | None:
        if t == IDENTITY:
            return None
        vec = self.rules[t - 1][1](key, legal)
        return vec - vec.mean()

    def update(self, t, keys, legals, targets, rate):
        raise IdentityImmutable("predefined transformations are not trainable")


def _goofspiel_rules(game):
    n = game.num_cards

    def upcard_of(key):
        up = n if game.order == "descending" else -1
        rounds = 0
        for _, _, pub in parse_stream(tuple(key[1:])):
            for tok in pub:
                if tok >= 30:
                    up = tok - 30
                elif game.order == "descending":
                    rounds += 1
                    up = n - rounds
        return up

    def ramp(key, legal):
        return np.linspace(-1.0, 1.0, num=len(legal))

    def anti_ramp(key, legal):
        return -ramp(key, legal)

    def prefer_even(key, legal):
        return np.array([1.0 if a % 2 == 0 else -1.0 for a in legal])

    def prefer_odd(key, legal):
        return -prefer_even(key, legal)

    def mirror(offset):
        def rule(key, legal):
            target = upcard_of(key) + offset
            gaps = np.array([abs(a - target) for a in legal], dtype=np.float64)
            return -gaps / max(n - 1, 1)

        return rule

    def extremes(key, legal):
        mid = (len(legal) - 1) / 2.0
        return np.array([abs(i - mid) for i in range(len(legal))])

    rules = [
        ("bid_high", ramp),
        ("bid_low", anti_ramp),
        ("prefer_even", prefer_even),
        ("prefer_odd", prefer_odd),
        ("mirror_upcard", mirror(0)),
        ("mirror_plus_one", mirror(1)),
        ("mirror_minus_one", mirror(-1)),
        ("extremes", extremes),
    ]
    return rules


def nearest_transformation(
    directions: list[np.ndarray], keys, legals, tset: TransformationSet
) -> int:
    """Index (>=1) whose direction field is closest to the observed movement,
    summed squared distance over the trajectory's infosets; ties go low."""
    if tset.count < 2:
        raise ValueError("needs at least one non-identity transformation")
    best, best_val = 1, None
    for t in range(1, tset.count):
        total = 0.0
        for d, key, legal in zip(directions, keys, legals):
            f = tset.direction(t, key, legal)
            if f is None:
                f = np.zeros(len(legal))
            diff = np.asarray(d) - f
            total += float(np.sum(diff * diff))
        if best_val is None or total < best_val - 1e-15:
            best, best_val = t, total
    return best


def update_transformation(tset, idx, keys, legals, directions, rate):
    tset.update(idx, keys, legals, directions, rate)
    return tset


class TransformedPolicy(BasePolicy):
    """View of a base policy with one transformation applied everywhere."""

    def __init__(self, base: BasePolicy, tset: TransformationSet, t: int):
        self.base = base
        self.tset = tset
        self.t = t

    def probs(self, key, legal):
        return self.tset.transform(self.t, self.base.probs(key, legal), key, legal)


# ---------------------------------------------------------------------------
# History critic.


class HistoryRef(NamedTuple):
    """Everything a critic backing may need to identify one history."""

    hkey: tuple[int, ...]  # length-prefixed joint-action sequence
    key0: tuple[int, ...]
    key1: tuple[int, ...]


def hist_key(joints) -> tuple[int, ...]:
    out: list[int] = []
    for joint in joints:
        out.append(len(joint))
        out.extend(joint)
    return tuple(out)


class HistoryCritic:
    count: int

    def values(self, ref: HistoryRef) -> np.ndarray:
        """(2, K) matrix: rows = evaluated player, cols = transformation."""
        raise NotImplementedError

    def values_batch(self, refs: list[HistoryRef]) -> np.ndarray:
        return np.stack([self.values(r) for r in refs])


class TabularHistoryCritic(HistoryCritic):
    def __init__(self, count: int):
        self.count = count
        self.table: dict[tuple, np.ndarray] = {}
        self.visits: dict[tuple, np.ndarray] = {}

    def values(self, ref: HistoryRef) -> np.ndarray:
        v = self.table.get(ref.hkey)
        if v is None:
            return np.zeros((2, self.count))
        return v

    def update(self, hkey, player: int, t: int, target: float, rate: float | None):
        v = self.table.get(hkey)
        if v is None:
            v = np.zeros((2, self.count))
            self.table[hkey] = v
            self.visits[hkey] = np.zeros((2, self.count))
        if rate is None:  # visit-count averaging: exact empirical mean
            self.visits[hkey][player, t] += 1.0
            rate = 1.0 / self.visits[hkey][player, t]
        v[player, t] += rate * (target - v[player, t])


class OracleHistoryCritic(HistoryCritic):
    """Critic backed by a precomputed exact table (tests, exact resolving)."""

    def __init__(self, count: int, table: dict[tuple, np.ndarray]):
        self.count = count
        self.table = table

    def values(self, ref: HistoryRef) -> np.ndarray:
        return self.table[ref.hkey]


class MlpHistoryCritic(HistoryCritic):
    def __init__(self, game: Game, count: int, hidden: tuple[int, ...],
                 rng: np.random.Generator, lr: float = 0.1):
        self.game = game
        self.count = count
        dim = len(history_features(game, (0,), (1,)))
        self.net = MLP.create([dim] + list(hidden) + [2 * count], rng, scale=0.1)
        self.opt = Adam(lr=lr)

    def _features(self, ref: HistoryRef) -> np.ndarray:
        return history_features(self.game, ref.key0, ref.key1)

    def values(self, ref: HistoryRef) -> np.ndarray:
        return self.net.forward(self._features(ref)).reshape(2, self.count)

    def values_batch(self, refs: list[HistoryRef]) -> np.ndarray:
        if not refs:
            return np.zeros((0, 2, self.count))
        feats = np.stack([self._features(r) for r in refs])
        return self.net.forward(feats).reshape(len(refs), 2, self.count)

    def update_batch(self, refs: list[HistoryRef], targets: np.ndarray, rate: float):
        """One L2 regression step toward (n, 2, K) targets."""
        feats = np.stack([self._features(r) for r in refs])
        out, cache = self.net.forward(feats, want_cache=True)
        dout = (out - targets.reshape(len(refs), -1)) / len(refs)
        gw, gb = self.net.backward(cache, dout)
        self.opt.lr = rate
        self.opt.step(self.net.params(), gw + gb)


# ---------------------------------------------------------------------------
# Truncated-importance-ratio return targets over histories.


@dataclass
class VTraceSpec:
    rho_bar: float = math.inf
    c_bar: float = 1.0

    def __post_init__(self):
        if not (self.rho_bar >= self.c_bar >= 1.0):
            raise ValueError("need rho_bar >= c_bar >= 1")


def vtrace_history_targets(
    rewards: np.ndarray,
    ratios: np.ndarray,
    values: np.ndarray,
    spec: VTraceSpec,
) -> np.ndarray:
    """Targets for every prefix of one trajectory.

    ``rewards[t]``: evaluated player's (possibly regularised) reward at step
    t; ``ratios[t]``: product over acting players of their per-player
    truncation-free probability ratio pi/mu (chance steps contribute 1);
    ``values[t]``: current critic value at history t, with values[l] = 0 at
    the terminal. Returns targets aligned with values (target[l] = 0).
    """
    l = len(rewards)
    targets = np.zeros(l + 1)
    for t in range(l - 1, -1, -1):
        rho = min(spec.rho_bar, ratios[t])
        c = min(spec.c_bar, ratios[t])
        delta = rewards[t] + values[t + 1] - values[t]
        targets[t] = values[t] + rho * delta + c * (targets[t + 1] - values[t + 1])
    return targets


def step_ratio(target_probs, mu_probs, rho_cap=None) -> float:
    """Per-step ratio: product over acting players of pi/mu (optionally
    truncating each player's factor)."""
    r = 1.0
    for pi_p, mu_p in zip(target_probs, mu_probs):
        f = pi_p / mu_p
        if rho_cap is not None:
            f = min(rho_cap, f)
        r *= f
    return r


def eq_truncated_policy_flat(
    pi_flat: np.ndarray, mu_flat: np.ndarray, rho_bar: float, table
) -> np.ndarray:
    """The policy the truncated estimator actually evaluates:
    min(rho_bar * mu, pi) renormalised per infoset (equals pi when
    rho_bar = inf)."""
    if math.isinf(rho_bar):
        return pi_flat.copy()
    return table.normalize_flat(np.minimum(rho_bar * mu_flat, pi_flat))


def transform_rows(dist: np.ndarray, directions: np.ndarray, k: float) -> np.ndarray:
    """Apply many directions to one distribution at once: rows of the result
    are simplex projections of ``dist + k * directions[r]``."""
    moved = dist[None, :] + k * directions
    n = moved.shape[1]
    u = -np.sort(-moved, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, n + 1)[None, :]
    cond = u - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(moved)), rho] / (rho + 1)
    return np.maximum(moved - theta[:, None], 0.0)


def all_transformed_probs(
    tset: TransformationSet, dist: np.ndarray, key, legal
) -> np.ndarray:
    """(K, |legal|) matrix of transformed distributions, identity first."""
    k_count = tset.count
    out = np.empty((k_count, len(dist)))
    out[0] = dist
    if k_count == 1:
        return out
    dirs = np.zeros((k_count - 1, len(dist)))
    if isinstance(tset, MlpTransformationSet):
        full = tset.net.forward(infoset_features(tset.game, key))
        block = full.reshape(k_count - 1, tset.universe)[:, list(legal)]
        dirs = block - block.mean(axis=1, keepdims=True)
    else:
        for t in range(1, k_count):
            d = tset.direction(t, key, legal)
            if d is not None:
                dirs[t - 1] = d
    out[1:] = transform_rows(dist, dirs, tset.step_size)
    return out


def critic_update(
    batch,
    blueprint,  # PolicyProfile
    tsets: tuple[TransformationSet, TransformationSet],
    critic: HistoryCritic,
    spec: VTraceSpec,
    rate: float | None,
) -> HistoryCritic:
    """One regression step of the history critic from a sampled batch.

    For each evaluated player i and transformation t the target profile is
    (blueprint_i, transformed blueprint_-i); per-step ratios correct whoever
    acted, so opponent deviation from the sampling policy is accounted for.
    Raw (unregularised) game rewards are evaluated.
    """
    k_count = critic.count
    mlp_refs: list[HistoryRef] = []
    mlp_targets: list[np.ndarray] = []
    for traj in batch:
        l = len(traj.steps)
        refs = []
        hk: tuple[int, ...] = ()
        for t in range(l + 1):
            k0, k1 = traj.prefix_keys[t]
            refs.append(HistoryRef(hk, k0, k1))
            if t < l:
                joint = traj.steps[t].joint
                hk = hk + (len(joint),) + joint

        # ratios[t, i, k]: per-step ratio for evaluated player i, column k
        ratios = np.ones((l, 2, k_count))
        rewards = np.zeros((l, 2))
        for t, step in enumerate(traj.steps):
            rewards[t] = step.rewards
            for slot_i, p in enumerate(step.acting):
                if p < 0:
                    continue
                key, legal = step.keys[slot_i], step.legals[slot_i]
                base = blueprint[p].probs(key, legal)
                mu = step.mu_probs[slot_i]
                slot = step.slots[slot_i]
                base_ratio = float(base[slot]) / mu
                # evaluated player p: its own step follows the blueprint
                ratios[t, p, :] *= base_ratio
                # evaluated player 1-p: this step belongs to the (possibly
                # transformed) opponent
                probs_k = all_transformed_probs(tsets[p], base, key, legal)[:, slot]
                ratios[t, 1 - p, :] *= probs_k / mu

        if isinstance(critic, MlpHistoryCritic):
            vals = critic.values_batch(refs)  # (l+1, 2, K)
        else:
            vals = np.stack([critic.values(r) for r in refs])
        vals[l] = 0.0
        targets = np.zeros((l + 1, 2, k_count))
        for t in range(l - 1, -1, -1):
            rho = np.minimum(spec.rho_bar, ratios[t])
            c = np.minimum(spec.c_bar, ratios[t])
            delta = rewards[t][:, None] + vals[t + 1] - vals[t]
            targets[t] = vals[t] + rho * delta + c * (targets[t + 1] - vals[t + 1])

        if isinstance(critic, MlpHistoryCritic):
            mlp_refs.extend(refs[:l])
            mlp_targets.extend(targets[:l])
        else:
            for t in range(l):
                for i in (0, 1):
                    for k in range(k_count):
                        critic.update(refs[t].hkey, i, k, float(targets[t, i, k]), rate)
    if isinstance(critic, MlpHistoryCritic) and mlp_refs:
        critic.update_batch(mlp_refs, np.stack(mlp_targets), rate if rate is not None else 0.1)
    return critic


def vtrace_operator_exact(tree, mu_flats, target_flats, spec: VTraceSpec,
                          values: np.ndarray, player: int) -> np.ndarray:
    """One exact application of the history-return operator on a built tree.

    ``values`` has one entry per node (terminals forced to 0); returns the
    operator's output per node. Ratios are per acting player, truncated
    per player, multiplied at simultaneous steps; chance steps get ratio 1.
    """
    v = values.copy()
    v[tree.actor == 4] = 0.0
    sign = 1.0 if player == 0 else -1.0
    ratio = np.ones(len(tree.edge_parent))
    w_mu = tree.edge_chance.copy()
    for p in (0, 1):
        flat = tree.edge_flat[p]
        idx = np.maximum(flat, 0)
        r_p = np.where(flat >= 0, target_flats[p][idx] / mu_flats[p][idx], 1.0)
        ratio = ratio * np.minimum(spec.rho_bar, r_p)
        w_mu = w_mu * np.where(flat >= 0, mu_flats[p][idx], 1.0)
    ratio_c = np.ones(len(tree.edge_parent))
    for p in (0, 1):
        flat = tree.edge_flat[p]
        idx = np.maximum(flat, 0)
        r_p = np.where(flat >= 0, target_flats[p][idx] / mu_flats[p][idx], 1.0)
        ratio_c = ratio_c * np.minimum(spec.c_bar, r_p)

    g = np.zeros(tree.n_nodes)
    step_r = sign * (tree.cum0[tree.edge_child] - tree.cum0[tree.edge_parent])
    for edges in reversed(tree.level_edges()):
        if len(edges) == 0:
            continue
        par, chi = tree.edge_parent[edges], tree.edge_child[edges]
        contrib = w_mu[edges] * (
            ratio[edges] * (step_r[edges] + v[chi] - v[par])
            + ratio_c[edges] * g[chi]
        )
        np.add.at(g, par, contrib)
    return v + g
