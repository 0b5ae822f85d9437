"""Two-phase optimizers: full-batch Adam for the first part of training and
a limited-memory quasi-Newton method (L-BFGS with a strong Wolfe line
search) for the second. The second phase substitutes for a sequential
quadratic programming routine; on this unconstrained problem the two belong
to the same quasi-Newton family, and the substitution is recorded in every
run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Adam", "QuasiNewtonConfig", "QuasiNewtonResult", "quasi_newton_minimize"]


class Adam:
    """Adaptive-moment optimizer with bias correction.

    Hyperparameters are the framework defaults: beta1=0.9, beta2=0.999,
    eps=1e-7. ``step`` is functional on the parameter vector and mutates only
    the internal moment state; identical call sequences give bit-identical
    trajectories.
    """

    def __init__(self, n_params: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if grad.shape != params.shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {params.shape}")
        if not np.isfinite(grad).all():
            raise FloatingPointError(
                f"non-finite gradient at Adam step {self.t + 1} "
                f"({int(grad.size - np.isfinite(grad).sum())} bad entries)"
            )
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class QuasiNewtonConfig:
    """L-BFGS memory, strong Wolfe constants, and stopping rules.

    Besides the usual ftol/gtol/max-iteration rules there is a stagnation
    stop: quit once the loss has failed to shrink by ``stall_ratio`` over the
    trailing ``stall_window`` accepted iterates. The training loss here has
    loss-flat solution families that are not pinned by the initial
    conditions; grinding out the last fractions of a percent per iterate
    walks along those families and corrupts the inferred solution, so
    diminishing returns are treated as convergence. Set ``stall_window=0``
    to disable.
    """

    memory: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    ftol: float = 1e-12  # relative loss change, must hold ftol_iters times in a row
    ftol_iters: int = 5
    gtol: float = 1e-10  # max-abs gradient entry
    max_iters: int = 20000
    stall_window: int = 30
    stall_ratio: float = 0.6
    ls_max_expand: int = 20
    ls_max_zoom: int = 30


@dataclass
class QuasiNewtonResult:
    params: np.ndarray
    loss: float
    n_iters: int
    reason: str
    # per accepted iterate: loss, max-abs gradient, step length, strong Wolfe held
    losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    wolfe_ok: list = field(default_factory=list)


def _two_loop(g, s_list, y_list, rho_list):
    """Implicit application of the inverse Hessian approximation."""
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= np.dot(s, y) / np.dot(y, y)  # standard initial scaling
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def _strong_wolfe(f_and_grad, x, f0, g0, d, cfg):
    """Line search enforcing sufficient decrease and the strong curvature
    condition (bracket then zoom). Returns (alpha, f, g, evals) or None."""
    dphi0 = float(np.dot(g0, d))
    if dphi0 >= 0.0:
        return None
    c1, c2 = cfg.c1, cfg.c2

    def phi(alpha):
        f, g = f_and_grad(x + alpha * d)
        return f, g, float(np.dot(g, d))

    def zoom(lo, f_lo, dphi_lo, hi, f_hi):
        for _ in range(cfg.ls_max_zoom):
            # quadratic interpolation on the lo side, safeguarded by bisection
            denom = 2.0 * (f_hi - f_lo - dphi_lo * (hi - lo))
            if denom != 0.0:
                a = lo + max(
                    0.1, min(0.9, -dphi_lo * (hi - lo) ** 2 / denom / (hi - lo))
                ) * (hi - lo)
            else:
                a = 0.5 * (lo + hi)
            f_a, g_a, dphi_a = phi(a)
            if f_a > f0 + c1 * a * dphi0 or f_a >= f_lo:
                hi, f_hi = a, f_a
            else:
                if abs(dphi_a) <= -c2 * dphi0:
                    return a, f_a, g_a
                if dphi_a * (hi - lo) >= 0.0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, dphi_lo = a, f_a, dphi_a
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    a = 1.0
    for i in range(cfg.ls_max_expand):
        f_a, g_a, dphi_a = phi(a)
        if f_a > f0 + c1 * a * dphi0 or (i > 0 and f_a >= f_prev):
            return zoom(a_prev, f_prev, dphi_prev, a, f_a)
        if abs(dphi_a) <= -c2 * dphi0:
            return a, f_a, g_a
        if dphi_a >= 0.0:
            return zoom(a, f_a, dphi_a, a_prev, f_prev)
        a_prev, f_prev, dphi_prev = a, f_a, dphi_a
        a *= 2.0
    return None


def quasi_newton_minimize(f_and_grad, params0, cfg: QuasiNewtonConfig | None = None, callback=None):
    """Minimize a smooth unconstrained objective from ``params0``.

    ``f_and_grad(x) -> (loss, grad)`` must be deterministic. Accepted
    iterates are monotone non-increasing in loss by construction; pairs with
    non-positive curvature are never stored. ``callback(k, x, f, g)`` fires
    after every accepted iterate.
    """
    cfg = cfg or QuasiNewtonConfig()
    x = np.asarray(params0, dtype=np.float64).copy()
    f, g = f_and_grad(x)
    result = QuasiNewtonResult(params=x, loss=float(f), n_iters=0, reason="")
    if not np.isfinite(f) or not np.isfinite(g).all():
        raise FloatingPointError("non-finite objective at the quasi-Newton start")
    if np.max(np.abs(g)) <= cfg.gtol:
        result.reason = "gtol"
        return result

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    flat_count = 0

    for k in range(1, cfg.max_iters + 1):
        d = -_two_loop(g, s_hist, y_hist, rho_hist)
        if np.dot(d, g) >= 0.0:  # not a descent direction: restart memory
            s_hist, y_hist, rho_hist = [], [], []
            d = -g
        hit = _strong_wolfe(f_and_grad, x, f, g, d, cfg)
        if hit is None:
            result.reason = "line_search_stalled"
            break
        alpha, f_new, g_new = hit
        x_new = x + alpha * d
        # record strong Wolfe satisfaction at the accepted point
        dphi0 = float(np.dot(g, d))
        wolfe = (f_new <= f + cfg.c1 * alpha * dphi0 + 1e-15 * max(1.0, abs(f))) and (
            abs(float(np.dot(g_new, d))) <= -cfg.c2 * dphi0 + 1e-15
        )

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        rel_drop = abs(f - f_new) / max(1.0, abs(f), abs(f_new))
        x, f, g = x_new, float(f_new), g_new

        result.losses.append(f)
        result.grad_norms.append(float(np.max(np.abs(g))))
        result.steps.append(float(alpha))
        result.wolfe_ok.append(bool(wolfe))
        result.params = x
        result.loss = f
        result.n_iters = k
        if callback is not None:
            callback(k, x, f, g)

        if np.max(np.abs(g)) <= cfg.gtol:
            result.reason = "gtol"
            break
        flat_count = flat_count + 1 if rel_drop < cfg.ftol else 0
        if flat_count >= cfg.ftol_iters:
            result.reason = "ftol"
            break
        if (
            cfg.stall_window
            and len(result.losses) > cfg.stall_window
            and result.losses[-1] > cfg.stall_ratio * result.losses[-1 - cfg.stall_window]
        ):
            result.reason = "stagnation"
            break
    else:
        result.reason = "max_iters"
    return result
