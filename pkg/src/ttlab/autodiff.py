"""Exact derivatives for the training pipeline.

Two cooperating mechanisms:

* ``Dual`` — forward-mode numbers carrying an exact directional derivative.
  Seeded with d/dt they give the time derivatives of the network outputs.
* ``Tape``/``Var`` — reverse-mode over array-valued elementary operations.
  The time-tangent recursion is itself built out of tape operations, so one
  reverse sweep differentiates the full loss, including its d/dt terms, with
  respect to every weight and bias (reverse-over-forward).

Everything is float64; evaluations on distinct tapes share no state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ops

__all__ = [
    "Dual",
    "Tape",
    "Var",
    "GradResult",
    "NonFiniteError",
    "forward_tangent",
    "loss_gradient",
]


class NonFiniteError(RuntimeError):
    """An evaluation produced NaN or infinity where none is possible for
    well-formed inputs; indicates an internal invariant violation."""


# ---------------------------------------------------------------------------
# forward mode
# ---------------------------------------------------------------------------


class Dual:
    """A (value, tangent) pair propagated by the chain rule.

    The payload may be a float or an ndarray. Seeding ``tangent=0``
    reproduces plain arithmetic bit-for-bit on the value channel because the
    value channel executes exactly the same operations.
    """

    __slots__ = ("value", "tangent")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, value, tangent=0.0):
        self.value = value
        self.tangent = tangent

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Dual) else Dual(x, _zeros_matching(x))

    def __add__(self, other):
        o = Dual._lift(other)
        return Dual(self.value + o.value, self.tangent + o.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual._lift(other)
        return Dual(self.value - o.value, self.tangent - o.tangent)

    def __rsub__(self, other):
        o = Dual._lift(other)
        return Dual(o.value - self.value, o.tangent - self.tangent)

    def __mul__(self, other):
        o = Dual._lift(other)
        return Dual(self.value * o.value, self.tangent * o.value + self.value * o.tangent)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual._lift(other)
        inv = 1.0 / o.value
        return Dual(self.value * inv, (self.tangent - self.value * inv * o.tangent) * inv)

    def __rtruediv__(self, other):
        return Dual._lift(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __matmul__(self, other):
        o = Dual._lift(other)
        return Dual(self.value @ o.value, self.tangent @ o.value + self.value @ o.tangent)

    def __rmatmul__(self, other):
        o = Dual._lift(other)
        return Dual(o.value @ self.value, o.tangent @ self.value + o.value @ self.tangent)

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            raise TypeError("only constant exponents are supported")
        return Dual(self.value**n, n * self.value ** (n - 1) * self.tangent)

    def tanh(self):
        v = np.tanh(self.value)
        return Dual(v, (1.0 - v * v) * self.tangent)

    def square(self):
        return Dual(self.value * self.value, 2.0 * self.value * self.tangent)

    def sqrt(self):
        v = np.sqrt(self.value)
        return Dual(v, 0.5 / v * self.tangent)

    def sum(self):
        return Dual(np.sum(self.value), np.sum(self.tangent))

    def row(self, i):
        return Dual(self.value[i], self.tangent[i])

    def __repr__(self):
        return f"Dual({self.value!r}, {self.tangent!r})"


def _zeros_matching(x):
    return np.zeros_like(x) if isinstance(x, np.ndarray) else 0.0


# ---------------------------------------------------------------------------
# reverse mode
# ---------------------------------------------------------------------------


def _unbroadcast(g, shape):
    """Reduce an adjoint back to the operand shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tape:
    """Append-only record of elementary array operations.

    Node ``k`` stores its operation name, the indices of its operand nodes
    (all strictly less than ``k``), and a vector-Jacobian closure. A reverse
    sweep seeded with 1 at a scalar root accumulates, per node, the adjoint
    d(root)/d(node).
    """

    __slots__ = ("ops", "parents", "vjps", "shapes")

    def __init__(self):
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list = []
        self.shapes: list = []

    def __len__(self):
        return len(self.ops)

    def _record(self, op, value, parents, vjp):
        idx = len(self.ops)
        for p in parents:
            if p >= idx:
                raise AssertionError("tape topological order violated")
        self.ops.append(op)
        self.parents.append(parents)
        self.vjps.append(vjp)
        self.shapes.append(np.shape(value))
        return Var(self, idx, value)

    def leaf(self, value):
        """Register a differentiable input (weights, biases)."""
        v = np.asarray(value, dtype=np.float64)
        return self._record("leaf", v, (), None)

    def backward(self, root):
        """Reverse sweep from a scalar root; returns per-node adjoints."""
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if np.size(root.value) != 1:
            raise ValueError("backward requires a scalar root")
        adjoints = [None] * len(self.ops)
        adjoints[root.index] = np.ones(self.shapes[root.index], dtype=np.float64)
        for i in range(root.index, -1, -1):
            g = adjoints[i]
            vjp = self.vjps[i]
            if g is None or vjp is None:
                continue
            for j, contrib in zip(self.parents[i], vjp(g)):
                # accumulation is never in-place, so storing views is safe
                adjoints[j] = contrib if adjoints[j] is None else adjoints[j] + contrib
        return adjoints

    def gradient(self, adjoints, leaves):
        """Adjoints of the given leaf Vars, zero-filled where unreached."""
        out = []
        for leaf in leaves:
            a = adjoints[leaf.index]
            out.append(np.zeros(self.shapes[leaf.index]) if a is None else a)
        return out


class Var:
    """Handle to one tape node; supports numpy-style arithmetic."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    # -- binary ops -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Var):
            xs, ys = np.shape(self.value), np.shape(other.value)
            return self.tape._record(
                "add",
                self.value + other.value,
                (self.index, other.index),
                lambda g: (_unbroadcast(g, xs), _unbroadcast(g, ys)),
            )
        xs = np.shape(self.value)
        return self.tape._record(
            "add_c", self.value + other, (self.index,), lambda g: (_unbroadcast(g, xs),)
        )

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            xs, ys = np.shape(self.value), np.shape(other.value)
            return self.tape._record(
                "sub",
                self.value - other.value,
                (self.index, other.index),
                lambda g: (_unbroadcast(g, xs), _unbroadcast(-g, ys)),
            )
        xs = np.shape(self.value)
        return self.tape._record(
            "sub_c", self.value - other, (self.index,), lambda g: (_unbroadcast(g, xs),)
        )

    def __rsub__(self, other):
        xs = np.shape(self.value)
        return self.tape._record(
            "rsub_c", other - self.value, (self.index,), lambda g: (_unbroadcast(-g, xs),)
        )

    def __mul__(self, other):
        if isinstance(other, Var):
            xv, yv = self.value, other.value
            xs, ys = np.shape(xv), np.shape(yv)
            return self.tape._record(
                "mul",
                xv * yv,
                (self.index, other.index),
                lambda g: (_unbroadcast(g * yv, xs), _unbroadcast(g * xv, ys)),
            )
        xv = self.value
        xs = np.shape(xv)
        return self.tape._record(
            "mul_c", xv * other, (self.index,), lambda g: (_unbroadcast(g * other, xs),)
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape._record("neg", -self.value, (self.index,), lambda g: (-g,))

    def __matmul__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return self.tape._record(
                "matmul",
                a @ b,
                (self.index, other.index),
                lambda g: (g @ b.T, a.T @ g),
            )
        b = np.asarray(other)
        return self.tape._record(
            "matmul_c", self.value @ b, (self.index,), lambda g: (g @ b.T,)
        )

    def __rmatmul__(self, other):
        a = np.asarray(other)
        return self.tape._record(
            "rmatmul_c", a @ self.value, (self.index,), lambda g: (a.T @ g,)
        )

    # -- elementwise ------------------------------------------------------

    def tanh(self):
        v = np.tanh(self.value)
        return self.tape._record("tanh", v, (self.index,), lambda g: (g * (1.0 - v * v),))

    def square(self):
        xv = self.value
        return self.tape._record("square", xv * xv, (self.index,), lambda g: (g * (2.0 * xv),))

    def sqrt(self):
        v = np.sqrt(self.value)
        return self.tape._record("sqrt", v, (self.index,), lambda g: (g * (0.5 / v),))

    # -- structure --------------------------------------------------------

    def row(self, i):
        """Extract row ``i`` of a 2-d value as a 1-d vector."""
        shape = np.shape(self.value)

        def vjp(g):
            out = np.zeros(shape)
            out[i] = g
            return (out,)

        return self.tape._record("row", self.value[i], (self.index,), vjp)

    def sum(self):
        shape = np.shape(self.value)
        return self.tape._record(
            "sum", np.sum(self.value), (self.index,), lambda g: (np.broadcast_to(g, shape),)
        )

    def __repr__(self):
        return f"Var(#{self.index}, {self.tape.ops[self.index]}, shape={np.shape(self.value)})"


@dataclass
class GradResult:
    """Loss values and the full parameter gradient from one tape sweep."""

    loss_s: float
    loss_r: float
    l_T: float
    l_Cl: float
    l_liq: float
    l_ic: float
    grad: np.ndarray


def forward_tangent(net, t, seed=1.0):
    """Network outputs and their exact d/dt at a single time.

    ``seed`` is the tangent of the input (1 for d/dt). Derivatives come from
    dual-number propagation, not finite differences.
    """
    from .physics import StateTriple

    x = Dual(np.array([[float(t)]]), np.array([[float(seed)]]))
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        x = (w @ x + b).tanh()
    y = net.weights[-1] @ x + net.biases[-1]
    v = y.value.ravel()
    d = y.tangent.ravel()
    return StateTriple(
        T=v[0], Cl=v[1], phi=v[2], dT=d[0], dCl=d[1], dphi=d[2]
    )


def loss_gradient(net, batch, params, gamma=0.0, reg_squared=True, pin_phi0=True):
    """Gradient of the (optionally regularized) training loss w.r.t. every
    weight and bias, differentiated through the d/dt terms of the residuals.

    Returns a :class:`GradResult`; ``grad`` follows the network's flatten
    order. Raises :class:`NonFiniteError` if any output is not finite.
    """
    from .loss import assemble_loss

    tape = Tape()
    weights = [tape.leaf(w) for w in net.weights]
    biases = [tape.leaf(b) for b in net.biases]
    parts = assemble_loss(
        weights, biases, batch.t, params, gamma=gamma, reg_squared=reg_squared,
        pin_phi0=pin_phi0,
    )
    root = parts.loss_r if gamma > 0.0 else parts.loss_s
    adjoints = tape.backward(root)
    grads = tape.gradient(adjoints, [v for pair in zip(weights, biases) for v in pair])
    flat = np.concatenate([g.ravel() for g in grads])

    result = GradResult(
        loss_s=float(parts.loss_s.value),
        loss_r=float(parts.loss_r.value),
        l_T=float(parts.l_T.value),
        l_Cl=float(parts.l_Cl.value),
        l_liq=float(parts.l_liq.value),
        l_ic=float(parts.l_ic.value),
        grad=flat,
    )
    if not (np.isfinite(result.loss_r) and np.isfinite(flat).all()):
        raise NonFiniteError(
            f"non-finite loss/gradient (loss_s={result.loss_s!r}, "
            f"loss_r={result.loss_r!r}, bad grad entries="
            f"{int(np.size(flat) - np.isfinite(flat).sum())})"
        )
    return result
