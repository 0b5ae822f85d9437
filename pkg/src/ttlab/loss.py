"""Training losses and schedules.

The standard loss is the mean of the squared equation residuals over the
interior training points plus the squared initial-condition errors (the IC
term is a single point and is not divided by the point count). The
regularized loss adds gamma times the summed squared Frobenius norms of the
hidden-layer weight matrices; gamma drops to zero at the switchover epoch,
which is the whole point of the two-part training technique.

One closure detail matters a great deal: the differential solute balance
integrates to a one-parameter family (k0 + (1-k0)*Cl) * (1 - (1-k0)*phi) =
const, so pinning only T(0) and Cl(0) leaves the initial solid fraction
free and the loss has a continuum of zero-residual minima, almost all of
them physically wrong. By default the initial-condition term therefore also
pins phi(0) = 0 (the melt starts fully liquid); set ``pin_phi0=False`` to
recover the two-term initial condition and observe the degeneracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ops
from .network import NetworkShape, propagate
from .physics import ModelParams, residual_terms

__all__ = [
    "LossConfig",
    "TrainingSet",
    "LossParts",
    "make_training_set",
    "gamma_at",
    "initial_lr",
    "standard_loss",
    "standard_loss_parts",
    "regularization_term",
    "regularized_loss",
    "assemble_loss",
]


@dataclass(frozen=True)
class LossConfig:
    """Regularization strength, switchover epoch, and point count."""

    gamma1: float = 1e-4
    switch_epoch: int = 15000
    n_train: int = 200
    reg_squared: bool = True  # False: sum of plain Frobenius norms instead
    pin_phi0: bool = True  # include phi(0)^2 in the initial-condition term

    def __post_init__(self):
        if self.gamma1 < 0:
            raise ValueError("gamma1 must be non-negative")
        if self.switch_epoch < 0:
            raise ValueError("switch_epoch must be non-negative")
        if self.n_train < 1:
            raise ValueError("n_train must be positive")


@dataclass(frozen=True)
class TrainingSet:
    """Interior collocation times in (0, 1]; the single initial-condition
    point at t = 0 is implicit."""

    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        object.__setattr__(self, "t", t)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("training set needs a 1-d, non-empty time grid")
        if not (np.all(t > 0.0) and np.all(t <= 1.0)):
            raise ValueError("interior points must lie in (0, 1]")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("interior points must be strictly increasing")

    @property
    def n(self) -> int:
        return int(self.t.size)


def make_training_set(n1: int, sampling: str = "uniform", seed: int = 0) -> TrainingSet:
    """Place n1 interior points: evenly at i/n1, or one uniform draw per
    stratum ((i, i+1]/n1) for latin-hypercube-style sampling."""
    if n1 < 1:
        raise ValueError("n1 must be at least 1")
    if sampling == "uniform":
        t = np.arange(1, n1 + 1, dtype=np.float64) / n1
    elif sampling == "latin":
        rng = np.random.default_rng(seed)
        u = 1.0 - rng.random(n1)  # in (0, 1], keeps every point > its stratum floor
        t = (np.arange(n1, dtype=np.float64) + u) / n1
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    return TrainingSet(t=t)


def gamma_at(n: int, cfg: LossConfig) -> float:
    """Piecewise-constant regularization schedule: gamma1 strictly before the
    switchover epoch, zero from it on."""
    if n < 0:
        raise ValueError("epoch must be non-negative")
    return cfg.gamma1 if n < cfg.switch_epoch else 0.0


def initial_lr(shape: NetworkShape) -> float:
    """First-phase learning rate rule: 0.01 * min(1, (D*W/10)^-2)."""
    dw = shape.depth * shape.width
    return 0.01 * min(1.0, (dw / 10.0) ** -2)


@dataclass
class LossParts:
    """Loss components; each field has the value type of the inputs (floats
    for plain evaluation, tape variables inside a gradient sweep)."""

    l_T: object
    l_Cl: object
    l_liq: object
    l_ic: object
    loss_s: object
    loss_r: object


def assemble_loss(
    weights, biases, t_interior, p: ModelParams, gamma=0.0, reg_squared=True, pin_phi0=True
):
    """Build the loss from raw layer parameters of any supported value type.

    This is the single definition used by the gradient tape; plain float
    evaluation goes through :func:`standard_loss`, which serves as an
    independent route for cross-checking.
    """
    t_row = np.asarray(t_interior, dtype=np.float64).reshape(1, -1)
    n1 = t_row.shape[1]
    y, dy = propagate(weights, biases, t_row, want_tangent=True)
    eT, eCl, eLiq = residual_terms(
        _ops.row(y, 0), _ops.row(y, 1), _ops.row(y, 2),
        _ops.row(dy, 0), _ops.row(dy, 1), _ops.row(dy, 2),
        p,
    )
    l_T = _ops.sum_all(_ops.square(eT)) * (1.0 / n1)
    l_Cl = _ops.sum_all(_ops.square(eCl)) * (1.0 / n1)
    l_liq = _ops.sum_all(_ops.square(eLiq)) * (1.0 / n1)

    y0, _ = propagate(weights, biases, [[0.0]], want_tangent=False)
    l_ic = _ops.sum_all(_ops.square(_ops.row(y0, 0))) + _ops.sum_all(
        _ops.square(_ops.row(y0, 1))
    )
    if pin_phi0:
        l_ic = l_ic + _ops.sum_all(_ops.square(_ops.row(y0, 2)))

    loss_s = l_T + l_Cl + l_liq + l_ic
    if gamma > 0.0:
        reg = None
        for w in weights[:-1]:  # hidden-layer matrices only
            term = _ops.sum_all(_ops.square(w))
            if not reg_squared:
                term = _ops.sqrt(term)
            reg = term if reg is None else reg + term
        loss_r = loss_s + gamma * reg
    else:
        loss_r = loss_s
    return LossParts(l_T=l_T, l_Cl=l_Cl, l_liq=l_liq, l_ic=l_ic, loss_s=loss_s, loss_r=loss_r)


def standard_loss_parts(net, ts: TrainingSet, p: ModelParams, pin_phi0: bool = True) -> LossParts:
    """Component-wise standard loss via the network's evaluation hooks.

    Any object with ``eval_with_tangent`` and ``forward`` works, which lets
    tests inject oracle predictors.
    """
    vals, tans = net.eval_with_tangent(ts.t)
    eT, eCl, eLiq = residual_terms(
        vals[0], vals[1], vals[2], tans[0], tans[1], tans[2], p
    )
    n1 = ts.n
    l_T = float(np.sum(eT * eT)) / n1
    l_Cl = float(np.sum(eCl * eCl)) / n1
    l_liq = float(np.sum(eLiq * eLiq)) / n1
    at0 = net.forward(0.0)
    l_ic = float(at0.T) ** 2 + float(at0.Cl) ** 2
    if pin_phi0:
        l_ic += float(at0.phi) ** 2
    loss_s = l_T + l_Cl + l_liq + l_ic
    return LossParts(l_T=l_T, l_Cl=l_Cl, l_liq=l_liq, l_ic=l_ic, loss_s=loss_s, loss_r=loss_s)


def standard_loss(net, ts: TrainingSet, p: ModelParams, pin_phi0: bool = True) -> float:
    return standard_loss_parts(net, ts, p, pin_phi0=pin_phi0).loss_s


def regularization_term(net, squared: bool = True) -> float:
    """Sum over hidden-layer weight matrices of ||W||^2 (or ||W|| when
    ``squared`` is false). Output weights and all biases are excluded."""
    total = 0.0
    for w in net.weights[:-1]:
        ss = float(np.sum(w * w))
        total += ss if squared else float(np.sqrt(ss))
    return total


def regularized_loss(
    net, ts: TrainingSet, p: ModelParams, gamma: float, squared: bool = True, pin_phi0: bool = True
) -> float:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    base = standard_loss(net, ts, p, pin_phi0=pin_phi0)
    if gamma == 0.0:
        return base
    return base + gamma * regularization_term(net, squared=squared)
