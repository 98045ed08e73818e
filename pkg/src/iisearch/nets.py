"""Small dense networks with hand-written backprop, Adam, and checkpoints.

Everything is float64 numpy; gradients are validated against central finite
differences in the test suite, so keep the forward pass simple (ReLU hidden
layers, linear output).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np


class ShapeMismatch(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class MLP:
    """Fully connected ReLU network; ``sizes = [in, hidden..., out]``."""

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def create(cls, sizes: list[int], rng: np.random.Generator, scale: float = 1.0) -> "MLP":
        weights, biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            std = scale * np.sqrt(2.0 / n_in)
            weights.append(rng.normal(0.0, std, size=(n_in, n_out)))
            biases.append(np.zeros(n_out))
        return cls(list(sizes), weights, biases)

    @classmethod
    def zeros(cls, sizes: list[int]) -> "MLP":
        weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(list(sizes), weights, biases)

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Batched forward pass; ``x`` is (batch, in) or (in,)."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.sizes[0]:
            raise ShapeMismatch(f"expected input dim {self.sizes[0]}, got {h.shape[1]}")
        cache = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            cache.append(h)
        out = h[0] if squeeze else h
        return (out, cache) if want_cache else out

    def backward(self, cache: list[np.ndarray], dout: np.ndarray):
        """Gradients of sum(dout * output) w.r.t. weights and biases."""
        dout = np.atleast_2d(np.asarray(dout, dtype=np.float64))
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            pre = cache[i]
            grads_w[i] = pre.T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (cache[i] > 0.0)
        return grads_w, grads_b

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "MLP":
        return MLP(list(self.sizes), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])

    def lerp_toward(self, other: "MLP", rate: float):
        """Polyak update: move these parameters toward ``other`` in place."""
        for mine, theirs in zip(self.params(), other.params()):
            mine += rate * (theirs - mine)


@dataclass
class Adam:
    """Adam over a list of arrays (shapes fixed at first step)."""

    lr: float
    b1: float = 0.0
    b2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        """One descent step (params -= update); mutates params in place."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if total > self.clip_norm and total > 0:
                grads = [g * (self.clip_norm / total) for g in grads]
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t) if self.b1 > 0 else m
            vhat = v / (1 - self.b2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self) -> list[np.ndarray]:
        return [np.asarray([float(self.t)])] + self.m + self.v

    def load_state_arrays(self, arrays: list[np.ndarray], params: list[np.ndarray]):
        self.t = int(arrays[0][0])
        n = len(params)
        self.m = [a.reshape(p.shape).copy() for a, p in zip(arrays[1 : 1 + n], params)]
        self.v = [a.reshape(p.shape).copy() for a, p in zip(arrays[1 + n :], params)]


# ---------------------------------------------------------------------------
# Checkpoint container: versioned binary with magic, game id, per-section
# layer sizes and little-endian float64 arrays, and a trailing CRC32.

_MAGIC = b"IISC"
_VERSION = 1


@dataclass
class Section:
    tag: str
    layer_sizes: list[int]
    arrays: list[np.ndarray]


@dataclass
class Checkpoint:
    game_id: str
    step: int
    sections: dict[str, Section]

    def add(self, tag: str, layer_sizes: list[int], arrays: list[np.ndarray]):
        self.sections[tag] = Section(tag, list(layer_sizes), [np.asarray(a, dtype=np.float64) for a in arrays])

    def save(self, path):
        blob = bytearray()
        blob += _MAGIC
        blob += struct.pack("<B", _VERSION)
        gid = self.game_id.encode()
        blob += struct.pack("<H", len(gid)) + gid
        blob += struct.pack("<Q", self.step)
        blob += struct.pack("<H", len(self.sections))
        for tag in sorted(self.sections):
            sec = self.sections[tag]
            t = tag.encode()
            blob += struct.pack("<H", len(t)) + t
            blob += struct.pack("<H", len(sec.layer_sizes))
            for s in sec.layer_sizes:
                blob += struct.pack("<I", s)
            blob += struct.pack("<H", len(sec.arrays))
            for arr in sec.arrays:
                flat = np.ascontiguousarray(arr, dtype="<f8").ravel()
                blob += struct.pack("<Q", flat.size)
                blob += flat.tobytes()
        blob += struct.pack("<I", zlib.crc32(bytes(blob)))
        with open(path, "wb") as f:
            f.write(bytes(blob))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as f:
            blob = f.read()
        if len(blob) < 8 or blob[:4] != _MAGIC:
            raise CheckpointError("bad magic")
        body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
        if zlib.crc32(body) != crc:
            raise CheckpointError("checksum mismatch")
        off = 4
        (version,) = struct.unpack_from("<B", body, off)
        off += 1
        if version != _VERSION:
            raise CheckpointError(f"unsupported version {version}")
        (n,) = struct.unpack_from("<H", body, off)
        off += 2
        game_id = body[off : off + n].decode()
        off += n
        (step,) = struct.unpack_from("<Q", body, off)
        off += 8
        (n_sections,) = struct.unpack_from("<H", body, off)
        off += 2
        sections = {}
        for _ in range(n_sections):
            (n,) = struct.unpack_from("<H", body, off)
            off += 2
            tag = body[off : off + n].decode()
            off += n
            (n_sizes,) = struct.unpack_from("<H", body, off)
            off += 2
            sizes = list(struct.unpack_from(f"<{n_sizes}I", body, off))
            off += 4 * n_sizes
            (n_arrays,) = struct.unpack_from("<H", body, off)
            off += 2
            arrays = []
            for _ in range(n_arrays):
                (length,) = struct.unpack_from("<Q", body, off)
                off += 8
                arr = np.frombuffer(body, dtype="<f8", count=length, offset=off).copy()
                off += 8 * length
                arrays.append(arr)
            sections[tag] = Section(tag, sizes, arrays)
        return cls(game_id, step, sections)


def mlp_to_section(tag: str, net: MLP) -> Section:
    return Section(tag, list(net.sizes), [p.ravel().copy() for p in net.params()])


def mlp_from_section(sec: Section) -> MLP:
    net = MLP.zeros(list(sec.layer_sizes))
    for p, flat in zip(net.params(), sec.arrays):
        p[...] = flat.reshape(p.shape)
    return net


def table_to_arrays(table: dict[tuple, np.ndarray]) -> list[np.ndarray]:
    """Serialise a key->vector mapping as float64 arrays (tokens are small
    ints, exact in f64). Layout: key lengths, concatenated key tokens,
    value lengths, concatenated values."""
    keys = sorted(table)
    key_lens = np.asarray([len(k) for k in keys], dtype=np.float64)
    key_tok = np.asarray([t for k in keys for t in k], dtype=np.float64)
    val_lens = np.asarray([np.asarray(table[k]).size for k in keys], dtype=np.float64)
    vals = (
        np.concatenate([np.asarray(table[k], dtype=np.float64).ravel() for k in keys])
        if keys
        else np.zeros(0)
    )
    return [key_lens, key_tok, val_lens, vals]


def table_from_arrays(arrays: list[np.ndarray]) -> dict[tuple, np.ndarray]:
    key_lens, key_tok, val_lens, vals = arrays
    table: dict[tuple, np.ndarray] = {}
    kpos = vpos = 0
    for klen, vlen in zip(key_lens.astype(int), val_lens.astype(int)):
        key = tuple(int(t) for t in key_tok[kpos : kpos + klen])
        table[key] = vals[vpos : vpos + vlen].copy()
        kpos += klen
        vpos += vlen
    return table
