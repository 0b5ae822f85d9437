"""Solidification model: residuals, initial-condition errors, the exact
analytical solution, and L2/H1 error norms.

The model couples an energy balance dT/dt = (1/S) dphi/dt + qdot, a solute
balance [k0*phi + (1-phi)] dCl/dt = k0 [1 + ((1-k0)/k0) Cl] dphi/dt, and the
piecewise liquidus relation: phi = 0 when T > 0, T + Cl = 0 in the mushy
region -1 < T <= 0, and phi = 1 when T <= -1. Initial conditions are
T(0) = Cl(0) = 0. All quantities are dimensionless and time runs over [0, 1].
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from ._ops import value_of

__all__ = [
    "ModelParams",
    "StateTriple",
    "ResidualBundle",
    "ErrorReport",
    "DEFAULT_PARAMS",
    "is_mushy_valid",
    "residual_terms",
    "residuals",
    "ic_errors",
    "exact_state",
    "error_norms",
    "l2_norm",
]

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class ModelParams:
    """Physical constants: Stefan number, partition coefficient, and scaled
    heat extraction rate (negative for cooling)."""

    stefan: float
    k0: float
    qdot: float

    def __post_init__(self):
        if not self.stefan > 0:
            raise ValueError(f"Stefan number must be positive, got {self.stefan}")
        if not 0 < self.k0 < 1:
            raise ValueError(f"partition coefficient must lie in (0, 1), got {self.k0}")


# A configuration choice (validated below), not a literature value.
DEFAULT_PARAMS = ModelParams(stefan=0.1, k0=0.1, qdot=-1.0)


@dataclass
class StateTriple:
    """Temperature, liquid concentration, solid fraction, and (optionally)
    their time derivatives. Fields may be scalars or aligned arrays."""

    T: object
    Cl: object
    phi: object
    dT: object = None
    dCl: object = None
    dphi: object = None

    @property
    def has_derivatives(self) -> bool:
        return self.dT is not None and self.dCl is not None and self.dphi is not None


@dataclass
class ResidualBundle:
    """Pointwise errors in satisfying the three model equations."""

    eT: object
    eCl: object
    eLiq: object


@dataclass
class ErrorReport:
    """Prediction error norms against the exact solution, per variable."""

    l2_T: float
    l2_Cl: float
    l2_phi: float
    h1_T: float
    h1_Cl: float
    h1_phi: float

    @property
    def max_l2(self) -> float:
        return max(self.l2_T, self.l2_Cl, self.l2_phi)

    def as_dict(self) -> dict:
        return {
            "l2_T": self.l2_T,
            "l2_Cl": self.l2_Cl,
            "l2_phi": self.l2_phi,
            "h1_T": self.h1_T,
            "h1_Cl": self.h1_Cl,
            "h1_phi": self.h1_phi,
            "max_l2": self.max_l2,
        }


@functools.lru_cache(maxsize=256)
def is_mushy_valid(p: ModelParams, n_check: int = 2001) -> bool:
    """True when the exact temperature stays in (-1, 0] and is non-increasing
    over [0, 1] — the regime every experiment here lives in."""
    t = np.linspace(0.0, 1.0, n_check)
    T = _exact_temperature(t, p)
    if not np.all(np.isfinite(T)):
        return False
    tol = 1e-12
    in_band = np.all(T <= tol) and np.all(T > -1.0 + tol)
    non_increasing = np.all(np.diff(T) <= tol)
    return bool(in_band and non_increasing)


def _require_valid(p: ModelParams):
    if not is_mushy_valid(p):
        raise ValueError(
            f"parameters {p} leave the mushy regime on [0, 1]; "
            "the exact solution is only defined there"
        )


def residual_terms(T, Cl, phi, dT, dCl, dphi, p: ModelParams):
    """Equation residuals from raw channels; works on floats, arrays, duals,
    or tape variables (the liquidus branch predicate is held constant)."""
    eT = dT - (1.0 / p.stefan) * dphi - p.qdot
    eCl = (1.0 - (1.0 - p.k0) * phi) * dCl - (p.k0 + (1.0 - p.k0) * Cl) * dphi
    Tv = np.asarray(value_of(T), dtype=np.float64)
    superheated = (Tv > 0.0).astype(np.float64)
    solid = (Tv <= -1.0).astype(np.float64)
    mushy = 1.0 - superheated - solid
    eLiq = phi * superheated + (T + Cl) * mushy + (phi - 1.0) * solid
    return eT, eCl, eLiq


def residuals(state: StateTriple, p: ModelParams) -> ResidualBundle:
    """Pointwise residuals of a state that carries time derivatives."""
    if not state.has_derivatives:
        raise ValueError("residuals require a state with time derivatives")
    eT, eCl, eLiq = residual_terms(
        state.T, state.Cl, state.phi, state.dT, state.dCl, state.dphi, p
    )
    return ResidualBundle(eT=eT, eCl=eCl, eLiq=eLiq)


def ic_errors(state_at_zero: StateTriple):
    """Initial-condition errors: both target values are zero, so the errors
    are just the predicted temperature and concentration at t = 0."""
    return state_at_zero.T, state_at_zero.Cl


def _exact_temperature(t, p: ModelParams):
    s, k0, qd = p.stefan, p.k0, p.qdot
    b = s * qd * (k0 - 1.0) * t + s * k0 - 1.0
    r = np.sqrt(b * b + 4.0 * s * k0)
    return ((s * qd * (1.0 - k0) * t - r - s * k0 + 1.0) / (2.0 * s) + k0) / (1.0 - k0)


def exact_state(t, p: ModelParams) -> StateTriple:
    """Exact solution with derivatives; accepts scalar or array times.

    Temperature comes from the closed form; in the mushy regime Cl = -T, and
    the solid fraction follows the lever rule phi = Cl / (k0 + (1-k0) Cl),
    which solves the solute balance exactly for that Cl (verified against
    direct integration in the test suite).
    """
    _require_valid(p)
    t = np.asarray(t, dtype=np.float64)
    s, k0, qd = p.stefan, p.k0, p.qdot
    b = s * qd * (k0 - 1.0) * t + s * k0 - 1.0
    r = np.sqrt(b * b + 4.0 * s * k0)
    T = ((s * qd * (1.0 - k0) * t - r - s * k0 + 1.0) / (2.0 * s) + k0) / (1.0 - k0)
    dT = 0.5 * qd * (1.0 + b / r)
    Cl = -T
    dCl = -dT
    denom = k0 + (1.0 - k0) * Cl
    phi = Cl / denom
    dphi = k0 / (denom * denom) * dCl
    return StateTriple(T=T, Cl=Cl, phi=phi, dT=dT, dCl=dCl, dphi=dphi)


def l2_norm(t, values) -> float:
    """Composite-trapezoid L2 norm of a sampled function over its grid."""
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(_trapz(values * values, t)))


def error_norms(t, predicted: StateTriple, p: ModelParams) -> ErrorReport:
    """L2 and H1 prediction errors against the exact solution.

    ``predicted`` must be sampled on ``t`` (a uniform grid over [0, 1] with
    at least two points) and carry time derivatives for the H1 seminorm.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("error norms need a 1-d grid with at least 2 points")
    if not predicted.has_derivatives:
        raise ValueError("error norms need predicted time derivatives for H1")
    ex = exact_state(t, p)

    def pair(u, du, uex, duex):
        l2sq = _trapz((np.asarray(u) - uex) ** 2, t)
        d1sq = _trapz((np.asarray(du) - duex) ** 2, t)
        return float(np.sqrt(l2sq)), float(np.sqrt(l2sq + d1sq))

    l2_T, h1_T = pair(predicted.T, predicted.dT, ex.T, ex.dT)
    l2_Cl, h1_Cl = pair(predicted.Cl, predicted.dCl, ex.Cl, ex.dCl)
    l2_phi, h1_phi = pair(predicted.phi, predicted.dphi, ex.phi, ex.dphi)
    return ErrorReport(l2_T, l2_Cl, l2_phi, h1_T, h1_Cl, h1_phi)
