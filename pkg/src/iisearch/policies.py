"""Policies over infosets: tabular tables, softmax logit tables, and MLPs.

Every policy answers ``probs(key, legal)`` with a distribution over the
game's canonical legal-action order. Lookups are total: unknown infosets and
fully-masked entries fall back to uniform, and probabilities of illegal
actions are exactly zero by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import infoset_features
from .games.base import Game, History, infoset_key
from .nets import MLP


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def masked_renormalize(
    stored_actions, stored_weights: np.ndarray, legal
) -> np.ndarray:
    """Restrict a stored weight vector to ``legal`` and renormalise."""
    index = {a: i for i, a in enumerate(stored_actions)}
    out = np.array(
        [max(float(stored_weights[index[a]]), 0.0) if a in index else 0.0 for a in legal]
    )
    total = out.sum()
    if total <= 0.0:
        return _uniform(len(legal))
    return out / total


class BasePolicy:
    def probs(self, key: tuple, legal: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError

    def at_history(self, history: History, player: int) -> np.ndarray:
        return self.probs(infoset_key(history, player), history.legal_actions(player))


class UniformPolicy(BasePolicy):
    def probs(self, key, legal) -> np.ndarray:
        return _uniform(len(legal))


class TabularPolicy(BasePolicy):
    """Explicit probability table; entries keep their own action order."""

    def __init__(self, table: dict | None = None):
        # key -> (actions tuple, probability array)
        self.table: dict[tuple, tuple[tuple[int, ...], np.ndarray]] = table or {}

    def set(self, key, actions, probs):
        self.table[key] = (tuple(actions), np.asarray(probs, dtype=np.float64))

    def probs(self, key, legal) -> np.ndarray:
        entry = self.table.get(key)
        if entry is None:
            return _uniform(len(legal))
        actions, weights = entry
        if actions == tuple(legal):
            total = weights.sum()
            if total <= 0:
                return _uniform(len(legal))
            return weights / total
        return masked_renormalize(actions, weights, legal)


class SoftmaxTablePolicy(BasePolicy):
    """Logit table with masked softmax; the form used by tabular training."""

    def __init__(self):
        self.logits: dict[tuple, np.ndarray] = {}
        self.actions: dict[tuple, tuple[int, ...]] = {}

    def logits_for(self, key, legal) -> np.ndarray:
        row = self.logits.get(key)
        if row is None:
            row = np.zeros(len(legal))
            self.logits[key] = row
            self.actions[key] = tuple(legal)
        return row

    def probs(self, key, legal) -> np.ndarray:
        row = self.logits.get(key)
        if row is None:
            return _uniform(len(legal))
        if self.actions[key] != tuple(legal):
            # stored ordering is canonical; realign by action id
            weights = _softmax(row)
            return masked_renormalize(self.actions[key], weights, legal)
        return _softmax(row)

    def copy(self) -> "SoftmaxTablePolicy":
        out = SoftmaxTablePolicy()
        out.logits = {k: v.copy() for k, v in self.logits.items()}
        out.actions = dict(self.actions)
        return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


class MlpPolicy(BasePolicy):
    """Policy head over a fixed action universe, masked to legal actions."""

    def __init__(self, game: Game, net: MLP):
        self.game = game
        self.net = net

    def logits_from_features(self, feats: np.ndarray) -> np.ndarray:
        return self.net.forward(feats)

    def probs(self, key, legal) -> np.ndarray:
        feats = infoset_features(self.game, key)
        logits = self.net.forward(feats)
        picked = logits[list(legal)]
        if not np.all(np.isfinite(picked)):
            return _uniform(len(legal))
        return _softmax(picked)

    def copy(self) -> "MlpPolicy":
        return MlpPolicy(self.game, self.net.copy())


@dataclass
class PolicyProfile:
    """One policy per player; chance stays the game's fixed policy."""

    policies: tuple[BasePolicy, BasePolicy]

    def __getitem__(self, player: int) -> BasePolicy:
        return self.policies[player]

    def probs(self, key, legal, player: int) -> np.ndarray:
        return self.policies[player].probs(key, legal)


def uniform_policy(game: Game) -> UniformPolicy:
    return UniformPolicy()


def uniform_profile(game: Game) -> PolicyProfile:
    return PolicyProfile((UniformPolicy(), UniformPolicy()))


def policy_at(policy: BasePolicy, key, legal) -> np.ndarray:
    """Total lookup: masked to legal actions, renormalised, uniform default."""
    if not legal:
        raise ValueError("legal action list must be nonempty")
    probs = policy.probs(key, tuple(legal))
    assert len(probs) == len(legal)
    return probs


@dataclass
class MixedPolicy(BasePolicy):
    """(1 - eps) * base + eps * uniform; keeps sampling support positive."""

    base: BasePolicy
    eps: float

    def probs(self, key, legal) -> np.ndarray:
        p = self.base.probs(key, legal)
        return (1.0 - self.eps) * p + self.eps * _uniform(len(legal))


def floor_profile(profile: PolicyProfile, eps: float) -> PolicyProfile:
    return PolicyProfile((MixedPolicy(profile[0], eps), MixedPolicy(profile[1], eps)))


# ---------------------------------------------------------------------------
# Materialisation onto flat tree arrays.


def flat_policy(tree, player: int, policy: BasePolicy) -> np.ndarray:
    """Dense per-slot probabilities for one player over a built tree."""
    table = tree.infosets[player]
    out = np.empty(table.total_slots)
    if isinstance(policy, MlpPolicy):
        return _flat_mlp(tree, player, policy)
    for iid in range(len(table)):
        off = int(table.offsets[iid])
        n = int(table.n_actions[iid])
        legal = tuple(int(a) for a in table.actions[off : off + n])
        out[off : off + n] = policy.probs(tree.infoset_key(player, iid), legal)
    return out


def _flat_mlp(tree, player: int, policy: MlpPolicy) -> np.ndarray:
    table = tree.infosets[player]
    keys = [tree.infoset_key(player, iid) for iid in range(len(table))]
    feats = np.stack([infoset_features(policy.game, k) for k in keys]) if keys else np.zeros((0, 1))
    logits = policy.net.forward(feats) if keys else np.zeros((0, 1))
    out = np.empty(table.total_slots)
    for iid in range(len(table)):
        off = int(table.offsets[iid])
        n = int(table.n_actions[iid])
        legal = [int(a) for a in table.actions[off : off + n]]
        out[off : off + n] = _softmax(logits[iid][legal])
    return out


def flat_profile(tree, profile: PolicyProfile) -> tuple[np.ndarray, np.ndarray]:
    return flat_policy(tree, 0, profile[0]), flat_policy(tree, 1, profile[1])


def policy_from_flat(tree, player: int, flat: np.ndarray) -> TabularPolicy:
    """Read a flat slot array back into a key-addressed tabular policy."""
    table = tree.infosets[player]
    out = TabularPolicy()
    for iid in range(len(table)):
        off = int(table.offsets[iid])
        n = int(table.n_actions[iid])
        actions = tuple(int(a) for a in table.actions[off : off + n])
        out.set(tree.infoset_key(player, iid), actions, flat[off : off + n])
    return out
