"""Conventional baseline: backward-Euler time discretization of the
solidification system with a per-step fixed-point sweep.

Each step advances the energy balance implicitly, classifies the regime from
the updated temperature, and (in the mushy branch) solves the discrete
solute balance for the solid fraction, which is linear in the unknown. The
sweep repeats until self-consistent. Because the solid fraction feeds back
into the energy balance with gain of order 1/(S*k0), the plain sweep can
diverge for small Stefan numbers; the relaxation factor is then halved
automatically until the sweep contracts.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .physics import ModelParams, exact_state, is_mushy_valid, l2_norm

__all__ = ["FdmConfig", "FdmTrajectory", "FdmStepError", "solve", "convergence_study", "FDM_CSV_COLUMNS"]

FDM_CSV_COLUMNS = [
    "n_steps",
    "max_l2",
    "max_l2_T",
    "max_l2_Cl",
    "max_l2_phi",
    "wall_seconds",
    "inner_iters_mean",
]


class FdmStepError(RuntimeError):
    """Inner iteration failed to converge within the allowed sweeps."""

    def __init__(self, step_index, residual, max_iters):
        super().__init__(
            f"fixed-point sweep at step {step_index} did not converge "
            f"within {max_iters} iterations (residual {residual:.3e})"
        )
        self.step_index = step_index
        self.residual = residual


@dataclass(frozen=True)
class FdmConfig:
    """Grid resolution and inner-sweep controls."""

    n_steps: int
    inner_tol: float = 1e-12
    max_inner_iters: int = 200
    relaxation: float = 1.0  # starting value; halved adaptively on divergence

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass
class FdmTrajectory:
    t: np.ndarray
    T: np.ndarray
    Cl: np.ndarray
    phi: np.ndarray
    inner_iters: np.ndarray  # sweeps used per step


def _candidate(T_n, C_n, phi_n, phi_cur, dt, p: ModelParams):
    """One unrelaxed sweep: implicit energy update, regime classification,
    then the linear solve for the solid fraction in the mushy branch."""
    s, k0, qd = p.stefan, p.k0, p.qdot
    T = T_n + dt * qd + (phi_cur - phi_n) / s
    if T > 0.0:  # superheated: no solid, concentration frozen
        return T, C_n, 0.0
    if T <= -1.0:  # fully solid
        return T, C_n, 1.0
    C = -T
    dC = C - C_n
    a = k0 + (1.0 - k0) * C
    phi = (dC + a * phi_n) / (a + (1.0 - k0) * dC)
    return T, C, phi


def solve(p: ModelParams, cfg: FdmConfig) -> FdmTrajectory:
    """Integrate over [0, 1] on a uniform grid with n_steps steps.

    Raises :class:`FdmStepError` when a step's sweep cannot reach
    self-consistency.
    """
    if not is_mushy_valid(p):
        raise ValueError(f"parameters {p} are not valid for the mushy-regime model")
    n = cfg.n_steps
    dt = 1.0 / n
    T = np.zeros(n + 1)
    C = np.zeros(n + 1)
    phi = np.zeros(n + 1)
    iters = np.zeros(n + 1, dtype=int)

    for step in range(1, n + 1):
        T_n, C_n, phi_n = T[step - 1], C[step - 1], phi[step - 1]
        x = (T_n, C_n, phi_n)  # warm start from the previous node
        omega = cfg.relaxation
        prev_res = np.inf
        converged = False
        for k in range(1, cfg.max_inner_iters + 1):
            cand = _candidate(T_n, C_n, phi_n, x[2], dt, p)
            res = max(abs(cand[0] - x[0]), abs(cand[1] - x[1]), abs(cand[2] - x[2]))
            if res < cfg.inner_tol:
                x = cand
                converged = True
                break
            if res >= prev_res and omega > 1.0 / 4096.0:
                omega *= 0.5  # sweep is cycling or expanding: damp it harder
                prev_res = np.inf
            else:
                prev_res = res
            x = tuple((1.0 - omega) * xi + omega * ci for xi, ci in zip(x, cand))
        if not converged:
            raise FdmStepError(step, res, cfg.max_inner_iters)
        T[step], C[step], phi[step] = x
        iters[step] = k

    t = np.linspace(0.0, 1.0, n + 1)
    return FdmTrajectory(t=t, T=T, Cl=C, phi=phi, inner_iters=iters)


def convergence_study(p: ModelParams, n_steps_list, cfg_template: FdmConfig | None = None, out_csv=None):
    """Error and wall time against the exact solution for several grids.

    Returns one dict per grid (columns of the CSV schema); optionally writes
    them to ``out_csv``.
    """
    rows = []
    for n_steps in n_steps_list:
        if cfg_template is None:
            cfg = FdmConfig(n_steps=int(n_steps))
        else:
            cfg = FdmConfig(
                n_steps=int(n_steps),
                inner_tol=cfg_template.inner_tol,
                max_inner_iters=cfg_template.max_inner_iters,
                relaxation=cfg_template.relaxation,
            )
        t0 = time.perf_counter()
        traj = solve(p, cfg)
        wall = time.perf_counter() - t0
        ex = exact_state(traj.t, p)
        eT = l2_norm(traj.t, traj.T - ex.T)
        eC = l2_norm(traj.t, traj.Cl - ex.Cl)
        ephi = l2_norm(traj.t, traj.phi - ex.phi)
        rows.append(
            {
                "n_steps": int(n_steps),
                "max_l2": max(eT, eC, ephi),
                "max_l2_T": eT,
                "max_l2_Cl": eC,
                "max_l2_phi": ephi,
                "wall_seconds": wall,
                "inner_iters_mean": float(np.mean(traj.inner_iters[1:])),
            }
        )
    if out_csv is not None:
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=FDM_CSV_COLUMNS)
            w.writeheader()
            for row in rows:
                w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()})
    return rows
