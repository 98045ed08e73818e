"""Regularised policy-gradient self-play training.

The trainer follows the fixed-point recipe: rewards are KL-regularised
against a periodically refreshed regularisation policy, values come from a
per-player truncated-importance-ratio estimator over the player's own
decision points (opponent steps contribute ratio 1), and policy logits move
by thresholded advantage updates at the sampled actions. Tabular and MLP
parameterisations share all of the math.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .features import action_universe, infoset_features
from .games.base import CHANCE, Game, History, infoset_key, initial_history
from .nets import MLP, Adam
from .policies import BasePolicy, MlpPolicy, PolicyProfile, SoftmaxTablePolicy


class ZeroSupportPolicy(ValueError):
    pass


class ZeroProbability(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class RNaDConfig:
    """Training hyperparameters (defaults follow the reference setting)."""

    eta: float = 0.2
    # (step threshold, swap interval): the interval applies while
    # step < threshold; None threshold = rest of training.
    delta_m_schedule: tuple = ((100_000, 500), (None, 10_000))
    learning_rate: float = 3e-4
    gradient_clip: float = 10_000.0
    neurd_threshold: float = 2.0
    neurd_clip: float = 10_000.0
    c_bar: float = 1.0
    rho_bar: float = math.inf
    adam_b1: float = 0.0
    adam_b2: float = 0.999
    adam_eps: float = 1e-8
    target_update_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    mu_floor: float = 1e-3
    swap_source: str = "target"  # "target" (default) or "current"

    def __post_init__(self):
        if not (self.rho_bar >= self.c_bar >= 1.0):
            raise ValueError("need rho_bar >= c_bar >= 1")
        for name in ("eta", "learning_rate", "target_update_rate", "batch_size"):
            if getattr(self, name) < 0 or (name != "eta" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        if self.swap_source not in ("target", "current"):
            raise ValueError("swap_source must be 'target' or 'current'")


@dataclass
class Step:
    acting: tuple[int, ...]
    joint: tuple[int, ...]
    mu_probs: tuple[float, ...]  # per acting player (chance prob for chance)
    rewards: tuple[float, float]
    keys: tuple  # per acting player: infoset key ((),) for chance
    legals: tuple  # per acting player: legal action tuple
    slots: tuple  # per acting player: sampled index into legals


@dataclass
class Trajectory:
    steps: list[Step]
    prefix_keys: list[tuple[tuple, tuple]]  # both players' keys per prefix

    @property
    def joints(self):
        return [s.joint for s in self.steps]


@dataclass
class TrajectoryBatch:
    game_id: str
    seed: int
    trajectories: list[Trajectory]

    def __iter__(self):
        return iter(self.trajectories)

    def __len__(self):
        return len(self.trajectories)


def sample_trajectories(
    game: Game,
    profile: PolicyProfile,
    n: int,
    seed: int,
    mu_floor: float = 1e-3,
) -> TrajectoryBatch:
    """Sample complete games under the floored profile, recording the floored
    behaviour probabilities actually used."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        out.append(_sample_one(game, profile, rng, mu_floor))
    return TrajectoryBatch(game.game_id, seed, out)


def _sample_one(game, profile, rng, mu_floor) -> Trajectory:
    h = initial_history(game)
    steps: list[Step] = []
    prefix_keys = [(infoset_key(h, 0), infoset_key(h, 1))]
    while not h.is_terminal():
        acting = h.acting
        joint, mu_probs, keys, legals, slots = [], [], [], [], []
        for p in acting:
            if p == CHANCE:
                legal = h.legal_actions(CHANCE)
                probs = np.asarray(h.chance_probs())
                keys.append(())
            else:
                legal = h.legal_actions(p)
                key = infoset_key(h, p)
                base = profile[p].probs(key, legal)
                probs = (1.0 - mu_floor) * base + mu_floor / len(legal)
                keys.append(key)
            idx = int(rng.choice(len(legal), p=probs / probs.sum()))
            if probs[idx] <= 0.0:
                raise ZeroSupportPolicy("sampling policy has a zero-probability action")
            joint.append(legal[idx])
            mu_probs.append(float(probs[idx]))
            legals.append(tuple(legal))
            slots.append(idx)
        prev_rewards = h.rewards
        h = h.child(tuple(joint))
        steps.append(
            Step(
                acting=acting,
                joint=tuple(joint),
                mu_probs=tuple(mu_probs),
                rewards=(
                    h.rewards[0] - prev_rewards[0],
                    h.rewards[1] - prev_rewards[1],
                ),
                keys=tuple(keys),
                legals=tuple(legals),
                slots=tuple(slots),
            )
        )
        prefix_keys.append((infoset_key(h, 0), infoset_key(h, 1)))
    return Trajectory(steps, prefix_keys)


def save_trajectories(batch: TrajectoryBatch, path):
    """Line-delimited records: (game_id, seed, joint-action sequence)."""
    with open(path, "a") as f:
        for traj in batch:
            rec = {
                "game_id": batch.game_id,
                "seed": batch.seed,
                "actions": [list(j) for j in traj.joints],
            }
            f.write(json.dumps(rec) + "\n")


def load_trajectory_records(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


# ---------------------------------------------------------------------------


def regularized_reward(
    r: tuple[float, float],
    pi_probs: dict[int, float],
    reg_probs: dict[int, float],
    eta: float,
) -> tuple[float, float]:
    """KL-regularised per-player step rewards.

    ``pi_probs``/``reg_probs`` hold each acting player's probability of its
    sampled action under the current and the regularisation policy. The two
    players' regularisation terms are antisymmetric, so the result stays
    zero-sum whenever ``r`` is.
    """
    terms = {}
    for p, prob in pi_probs.items():
        ref = reg_probs[p]
        if prob <= 0.0 or ref <= 0.0:
            raise ZeroProbability(f"zero probability in regularised reward (player {p})")
        terms[p] = eta * math.log(prob / ref)
    out = []
    for i in (0, 1):
        val = r[i]
        if i in terms:
            val -= terms[i]
        if (1 - i) in terms:
            val += terms[1 - i]
        out.append(val)
    return (out[0], out[1])


def regularized_reward_at(
    r, profile: PolicyProfile, reg_profile: PolicyProfile, eta: float,
    history: History, joint: tuple[int, ...]
):
    """History-level wrapper around :func:`regularized_reward`."""
    acting = history.acting
    pi_probs, reg_probs = {}, {}
    for p in acting:
        if p == CHANCE:
            continue
        legal = history.legal_actions(p)
        a = joint[acting.index(p)]
        idx = legal.index(a)
        key = infoset_key(history, p)
        pi_probs[p] = float(profile[p].probs(key, legal)[idx])
        reg_probs[p] = float(reg_profile[p].probs(key, legal)[idx])
    return regularized_reward(tuple(r), pi_probs, reg_probs, eta)


def swap_interval(schedule, step: int) -> int | None:
    for threshold, interval in schedule:
        if threshold is None or step < threshold:
            return interval
    return None


@dataclass
class RegState:
    steps_since_swap: int = 0
    swaps: int = 0


def maybe_swap_regularizer(reg: RegState, step: int, cfg: RNaDConfig) -> bool:
    """Advance the swap counter; True when the regulariser must be replaced."""
    interval = swap_interval(cfg.delta_m_schedule, step)
    reg.steps_since_swap += 1
    if interval is not None and reg.steps_since_swap >= interval:
        reg.steps_since_swap = 0
        reg.swaps += 1
        return True
    return False


# ---------------------------------------------------------------------------


class _TabularParams:
    """Logit + value tables plus a polyak-averaged target copy."""

    def __init__(self):
        self.policy = SoftmaxTablePolicy()
        self.values: dict[tuple, float] = {}
        self.target_logits: dict[tuple, np.ndarray] = {}
        # per-key second-moment accumulators (Adam with sparse updates)
        self.m_logit: dict[tuple, np.ndarray] = {}
        self.v_logit: dict[tuple, np.ndarray] = {}
        self.m_val: dict[tuple, float] = {}
        self.v_val: dict[tuple, float] = {}

    def value(self, key) -> float:
        return self.values.get(key, 0.0)


class _MlpParams:
    def __init__(self, game, hidden, rng):
        dim = len(infoset_features(game, (0,)))
        universe = action_universe(game)
        self.policy_net = MLP.create([dim] + list(hidden) + [universe], rng, scale=0.1)
        self.value_net = MLP.create([dim] + list(hidden) + [1], rng, scale=0.1)
        self.target_policy_net = self.policy_net.copy()


class Trainer:
    """One self-play learner: policy head, per-player value head, swap state.

    ``kind`` selects tabular ("tabular") or network ("mlp") parameters; all
    update math is identical, only the parameter container differs.
    """

    def __init__(self, game: Game, cfg: RNaDConfig, kind: str = "tabular",
                 hidden: tuple[int, ...] = (64, 64)):
        self.game = game
        self.cfg = cfg
        self.kind = kind
        self.rng = np.random.default_rng(cfg.seed)
        self.step_count = 0
        self.reg_state = RegState()
        if kind == "tabular":
            self.params = _TabularParams()
            self.reg_policy: BasePolicy = SoftmaxTablePolicy()
        elif kind == "mlp":
            self.params = _MlpParams(game, hidden, self.rng)
            self.policy_opt = Adam(cfg.learning_rate, cfg.adam_b1, cfg.adam_b2,
                                   cfg.adam_eps, clip_norm=cfg.gradient_clip)
            self.value_opt = Adam(cfg.learning_rate, cfg.adam_b1, cfg.adam_b2,
                                  cfg.adam_eps, clip_norm=cfg.gradient_clip)
            self.reg_policy = MlpPolicy(game, self.params.policy_net.copy())
        else:
            raise ValueError(f"unknown parameterisation {kind!r}")

    # -- policy views ------------------------------------------------------
    def policy(self) -> BasePolicy:
        if self.kind == "tabular":
            return self.params.policy
        return MlpPolicy(self.game, self.params.policy_net)

    def profile(self) -> PolicyProfile:
        p = self.policy()
        return PolicyProfile((p, p))

    def reg_profile(self) -> PolicyProfile:
        return PolicyProfile((self.reg_policy, self.reg_policy))

    def sample(self, n: int | None = None, seed: int | None = None) -> TrajectoryBatch:
        n = n or self.cfg.batch_size
        if seed is None:
            seed = int(self.rng.integers(1 << 62))
        return sample_trajectories(self.game, self.profile(), n, seed, self.cfg.mu_floor)

    # -- core update -------------------------------------------------------
    def train_step(self, batch: TrajectoryBatch) -> dict:
        """One optimiser step on policy and value heads from one batch."""
        cfg = self.cfg
        policy = self.policy()
        stats = {"step": self.step_count + 1, "value_loss": 0.0,
                 "mean_reg_return": 0.0, "swapped": 0}
        n_vtargets = 0

        # gather per-(player-step) updates; applied after full scan
        logit_updates: list[tuple[tuple, tuple, int, float]] = []
        value_updates: list[tuple[tuple, float]] = []

        for traj in batch:
            dists, reg_dists = {}, {}
            reg_rewards = np.zeros((len(traj.steps), 2))
            for t, step in enumerate(traj.steps):
                pi_probs, reg_probs = {}, {}
                for slot_i, p in enumerate(step.acting):
                    if p == CHANCE:
                        continue
                    key, legal = step.keys[slot_i], step.legals[slot_i]
                    dist = policy.probs(key, legal)
                    rdist = self.reg_policy.probs(key, legal)
                    dists[(t, p)] = dist
                    reg_dists[(t, p)] = rdist
                    pi_probs[p] = max(float(dist[step.slots[slot_i]]), 1e-30)
                    reg_probs[p] = max(float(rdist[step.slots[slot_i]]), 1e-30)
                reg_rewards[t] = regularized_reward(step.rewards, pi_probs, reg_probs, cfg.eta)
            stats["mean_reg_return"] += float(reg_rewards[:, 0].sum())

            for player in (0, 1):
                idxs = [
                    t for t, s in enumerate(traj.steps) if player in s.acting
                ]
                if not idxs:
                    continue
                l = len(idxs)
                seg_rewards = np.zeros(l)
                for k, t in enumerate(idxs):
                    end = idxs[k + 1] if k + 1 < l else len(traj.steps)
                    seg_rewards[k] = reg_rewards[t:end, player].sum()
                rhos = np.empty(l)
                cs = np.empty(l)
                vals = np.empty(l)
                keys, legals, slots = [], [], []
                for k, t in enumerate(idxs):
                    s = traj.steps[t]
                    slot_i = s.acting.index(player)
                    ratio = float(dists[(t, player)][s.slots[slot_i]]) / s.mu_probs[slot_i]
                    rhos[k] = min(cfg.rho_bar, ratio)
                    cs[k] = min(cfg.c_bar, ratio)
                    vals[k] = self._value(s.keys[slot_i])
                    keys.append(s.keys[slot_i])
                    legals.append(s.legals[slot_i])
                    slots.append(s.slots[slot_i])
                vhat = np.zeros(l + 1)
                vnext = np.append(vals[1:], 0.0)
                for k in range(l - 1, -1, -1):
                    delta = seg_rewards[k] + vnext[k] - vals[k]
                    vhat[k] = vals[k] + rhos[k] * delta + cs[k] * (vhat[k + 1] - vnext[k])
                qhat = seg_rewards + vhat[1:]
                adv = qhat - vals
                for k in range(l):
                    value_updates.append((keys[k], vhat[k]))
                    s = traj.steps[idxs[k]]
                    mu = s.mu_probs[s.acting.index(player)]
                    delta_logit = float(np.clip(adv[k] / mu, -cfg.neurd_clip, cfg.neurd_clip))
                    logit_updates.append((keys[k], legals[k], slots[k], delta_logit))
                    stats["value_loss"] += float((vhat[k] - vals[k]) ** 2)

        self._apply_updates(logit_updates, value_updates)
        self._polyak()
        self.step_count += 1
        if maybe_swap_regularizer(self.reg_state, self.step_count, cfg):
            self._swap_regularizer()
            stats["swapped"] = 1
        total = max(len(value_updates), 1)
        stats["value_loss"] /= total
        stats["mean_reg_return"] /= max(len(batch), 1)
        return stats

    def _value(self, key) -> float:
        if self.kind == "tabular":
            return self.params.value(key)
        return float(self.params.value_net.forward(infoset_features(self.game, key))[0])

    def _apply_updates(self, logit_updates, value_updates):
        cfg = self.cfg
        if self.kind == "tabular":
            self._apply_tabular(logit_updates, value_updates)
            return

        if not logit_updates:
            return
        keys = [u[0] for u in logit_updates]
        feats = np.stack([infoset_features(self.game, k) for k in keys])
        logits, cache = self.params.policy_net.forward(feats, want_cache=True)
        dout = np.zeros_like(logits)
        for row, (key, legal, slot, delta) in enumerate(logit_updates):
            aid = legal[slot]
            cur = logits[row, aid]
            if abs(cur) >= cfg.neurd_threshold and cur * delta > 0:
                continue
            dout[row, aid] = -delta  # descent on -delta pushes logit by +delta
        gw, gb = self.params.policy_net.backward(cache, dout / len(logit_updates))
        self.policy_opt.step(self.params.policy_net.params(), gw + gb)

        vkeys = [u[0] for u in value_updates]
        vfeats = np.stack([infoset_features(self.game, k) for k in vkeys])
        preds, vcache = self.params.value_net.forward(vfeats, want_cache=True)
        targets = np.asarray([u[1] for u in value_updates])[:, None]
        dv = (preds - targets) / len(value_updates)
        gw, gb = self.params.value_net.backward(vcache, dv)
        self.value_opt.step(self.params.value_net.params(), gw + gb)

    def _apply_tabular(self, logit_updates, value_updates):
        """One Adam step per touched table entry from batch-averaged grads."""
        cfg = self.cfg
        params = self.params
        t = self.step_count + 1
        bc2 = 1.0 - cfg.adam_b2**t
        bc1 = 1.0 - cfg.adam_b1**t if cfg.adam_b1 > 0 else 1.0

        grads: dict[tuple, np.ndarray] = {}
        for key, legal, slot, delta in logit_updates:
            row = grads.get(key)
            if row is None:
                params.policy.logits_for(key, legal)  # materialise the entry
                row = np.zeros(len(legal))
                grads[key] = row
            row[slot] += delta
        scale = 1.0 / max(len(logit_updates), 1)
        for key, g in grads.items():
            g *= scale
            m = params.m_logit.setdefault(key, np.zeros_like(g))
            v = params.v_logit.setdefault(key, np.zeros_like(g))
            m *= cfg.adam_b1
            m += (1 - cfg.adam_b1) * g
            v *= cfg.adam_b2
            v += (1 - cfg.adam_b2) * g * g
            upd = cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
            row = params.policy.logits[key]
            outward = (np.abs(row) >= cfg.neurd_threshold) & (row * upd > 0)
            row += np.where(outward, 0.0, upd)

        vgrads: dict[tuple, float] = {}
        for key, target in value_updates:
            cur = params.values.get(key, 0.0)
            vgrads[key] = vgrads.get(key, 0.0) + (cur - target)
        vscale = 1.0 / max(len(value_updates), 1)
        for key, g in vgrads.items():
            g *= vscale
            m = params.m_val.get(key, 0.0) * cfg.adam_b1 + (1 - cfg.adam_b1) * g
            v = params.v_val.get(key, 0.0) * cfg.adam_b2 + (1 - cfg.adam_b2) * g * g
            params.m_val[key] = m
            params.v_val[key] = v
            step = cfg.learning_rate * (m / bc1) / (math.sqrt(v / bc2) + cfg.adam_eps)
            params.values[key] = params.values.get(key, 0.0) - step

    def _polyak(self):
        rate = self.cfg.target_update_rate
        if self.kind == "tabular":
            target = self.params.target_logits
            for key, row in self.params.policy.logits.items():
                cur = target.get(key)
                if cur is None:
                    target[key] = rate * row.copy()
                else:
                    cur += rate * (row - cur)
        else:
            self.params.target_policy_net.lerp_toward(self.params.policy_net, rate)

    def _swap_regularizer(self):
        if self.kind == "tabular":
            src = (
                self.params.target_logits
                if self.cfg.swap_source == "target"
                else self.params.policy.logits
            )
            pol = SoftmaxTablePolicy()
            pol.logits = {k: v.copy() for k, v in src.items()}
            pol.actions = dict(self.params.policy.actions)
            self.reg_policy = pol
        else:
            src_net = (
                self.params.target_policy_net
                if self.cfg.swap_source == "target"
                else self.params.policy_net
            )
            self.reg_policy = MlpPolicy(self.game, src_net.copy())
