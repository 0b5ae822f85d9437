"""Fully connected tanh network mapping scaled time to the three model
unknowns (temperature, liquid concentration, solid fraction).

Input dimension is 1, output dimension is 3, hidden activation is tanh and
the output layer is linear. Parameters flatten to a single float64 vector in
layer order (weights then biases per layer), and that flattening is a
lossless bijection.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import _ops

__all__ = [
    "NetworkShape",
    "Network",
    "init",
    "forward",
    "eval_with_tangent",
    "propagate",
    "save_snapshot",
    "load_snapshot",
]

_N_OUT = 3
_SNAPSHOT_MAGIC = struct.Struct("<III")  # depth, width, n_params


@dataclass(frozen=True)
class NetworkShape:
    """Hidden-layer count (depth) and nodes per hidden layer (width)."""

    depth: int
    width: int

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ValueError(f"depth and width must be >= 1, got {self}")

    @property
    def n_weights(self) -> int:
        d, w = self.depth, self.width
        return w + (d - 1) * w * w + _N_OUT * w

    @property
    def n_biases(self) -> int:
        return self.depth * self.width + _N_OUT

    @property
    def n_params(self) -> int:
        return self.n_weights + self.n_biases

    def layer_dims(self) -> list[tuple[int, int]]:
        """(rows, cols) of each weight matrix, input to output."""
        d, w = self.depth, self.width
        return [(w, 1)] + [(w, w)] * (d - 1) + [(_N_OUT, w)]

    def label(self) -> str:
        return f"D{self.depth}W{self.width}"


class Network:
    """Weights and biases for one network; a plain value object.

    ``weights[l]`` maps layer ``l`` activations forward; ``biases[l]`` are
    column vectors so they broadcast over a batch axis.
    """

    __slots__ = ("shape", "weights", "biases")

    def __init__(self, shape: NetworkShape, weights, biases):
        dims = shape.layer_dims()
        if len(weights) != len(dims) or len(biases) != len(dims):
            raise ValueError("layer count does not match shape")
        for w, b, d in zip(weights, biases, dims):
            if w.shape != d or b.shape != (d[0], 1):
                raise ValueError(
                    f"layer shape mismatch: weight {w.shape} / bias {b.shape} vs expected {d}"
                )
        self.shape = shape
        self.weights = list(weights)
        self.biases = list(biases)

    def flatten(self) -> np.ndarray:
        """All parameters as one vector: W_1, b_1, ..., W_out, b_out."""
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b.ravel())
        return np.concatenate(chunks)

    @classmethod
    def from_flat(cls, shape: NetworkShape, vec: np.ndarray) -> "Network":
        """Inverse of :meth:`flatten`; layers are views into ``vec``."""
        if vec.shape != (shape.n_params,):
            raise ValueError(f"expected {shape.n_params} parameters, got {vec.shape}")
        weights, biases, k = [], [], 0
        for rows, cols in shape.layer_dims():
            weights.append(vec[k : k + rows * cols].reshape(rows, cols))
            k += rows * cols
            biases.append(vec[k : k + rows].reshape(rows, 1))
            k += rows
        return cls(shape, weights, biases)

    def clone(self) -> "Network":
        return Network(
            self.shape, [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def all_weights(self) -> np.ndarray:
        """Connection weights only (no biases), pooled into one vector."""
        return np.concatenate([w.ravel() for w in self.weights])

    def forward(self, t):
        return forward(self, t)

    def eval_with_tangent(self, ts):
        return eval_with_tangent(self, ts)


def propagate(weights, biases, t_row, want_tangent=True):
    """Run the network recursion on any value type (ndarray, Dual, Var).

    ``t_row`` is a constant (1, N) array; the tangent channel is seeded with
    ones, giving d/dt of every output. Returns (outputs, d outputs/dt), the
    latter ``None`` when not requested.
    """
    a = np.asarray(t_row, dtype=np.float64)
    da = np.ones_like(a) if want_tangent else None
    for w, b in zip(weights[:-1], biases[:-1]):
        z = w @ a + b
        if want_tangent:
            da = w @ da
        a = _ops.tanh(z)
        if want_tangent:
            da = (1.0 - _ops.square(a)) * da
    y = weights[-1] @ a + biases[-1]
    dy = weights[-1] @ da if want_tangent else None
    return y, dy


def forward(net, t):
    """Network outputs at one time, values only."""
    from .physics import StateTriple

    y, _ = propagate(net.weights, net.biases, [[float(t)]], want_tangent=False)
    return StateTriple(T=y[0, 0], Cl=y[1, 0], phi=y[2, 0])


def eval_with_tangent(net, ts):
    """Batched outputs and exact time derivatives on a 1-d grid of times.

    Returns two (3, N) arrays: values and d/dt.
    """
    ts = np.asarray(ts, dtype=np.float64).reshape(1, -1)
    return propagate(net.weights, net.biases, ts, want_tangent=True)


def init(shape: NetworkShape, seed: int) -> Network:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for rows, cols in shape.layer_dims():
        limit = np.sqrt(6.0 / (rows + cols))  # fan_out + fan_in
        weights.append(rng.uniform(-limit, limit, size=(rows, cols)))
        biases.append(np.zeros((rows, 1)))
    return Network(shape, weights, biases)


def save_snapshot(net: Network, path, seed=None, epoch=None):
    """Write parameters as little-endian float64 with a JSON sidecar.

    ``path`` should not carry an extension; ``.bin`` and ``.json`` are added.
    """
    path = str(path)
    flat = net.flatten()
    with open(path + ".bin", "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC.pack(net.shape.depth, net.shape.width, flat.size))
        fh.write(flat.astype("<f8").tobytes())
    meta = {
        "format": "ttlab-params-v1",
        "depth": net.shape.depth,
        "width": net.shape.width,
        "n_params": int(flat.size),
        "dtype": "<f8",
        "order": "per-layer weights then biases, input to output",
        "seed": seed,
        "epoch": epoch,
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_snapshot(path):
    """Read a parameter snapshot; returns (Network, metadata dict)."""
    path = str(path)
    if path.endswith(".bin") or path.endswith(".json"):
        path = path.rsplit(".", 1)[0]
    with open(path + ".bin", "rb") as fh:
        depth, width, n = _SNAPSHOT_MAGIC.unpack(fh.read(_SNAPSHOT_MAGIC.size))
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    shape = NetworkShape(depth, width)
    if n != shape.n_params or flat.size != n:
        raise ValueError(f"snapshot size mismatch: header {n}, data {flat.size}, shape {shape}")
    try:
        with open(path + ".json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {}
    return Network.from_flat(shape, flat), meta
