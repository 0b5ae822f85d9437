"""Two-phase training orchestration with per-epoch diagnostics.

Phase one minimizes the regularized loss with Adam for a fixed number of
epochs (one full-batch update per epoch); phase two minimizes the standard
loss with the quasi-Newton optimizer until convergence. The logged headline
loss column is always the standard loss so curves are comparable across
regularization settings; the regularized loss is logged in its own column.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteError, loss_gradient
from .loss import LossConfig, TrainingSet, gamma_at, initial_lr
from .network import (
    Network,
    NetworkShape,
    eval_with_tangent,
    init,
    load_snapshot,
    save_snapshot,
)
from .optim import Adam, QuasiNewtonConfig, quasi_newton_minimize
from .physics import ErrorReport, ModelParams, StateTriple, error_norms

__all__ = [
    "TrainSchedule",
    "RunRecord",
    "WeightStats",
    "train",
    "oscillation_metric",
    "weight_stats",
    "evaluate_errors",
    "save_run",
    "load_run",
    "CURVE_COLUMNS",
]

CURVE_COLUMNS = ["epoch", "L_S", "L_R", "L_T", "L_Cl", "L_liq", "L_ic", "phase"]

HIST_BINS = 51


def _package_version() -> str:
    from . import __version__

    return __version__


@dataclass(frozen=True)
class TrainSchedule:
    """Everything that controls one training run besides the model and the
    training points."""

    switch_epoch: int = 15000
    gamma1: float = 1e-4  # 0 disables the first-part regularization
    lr0: float | None = None  # None: width/depth rule
    seed: int = 0
    snapshot_epochs: tuple = ()  # extra epochs; switchover and final are always kept
    snapshot_every: int | None = None  # e.g. 1000 for histogram-evolution studies
    oscillation_window: int = 2000
    reg_squared: bool = True
    pin_phi0: bool = True  # pin the free initial solid fraction (see loss module)
    qn: QuasiNewtonConfig = field(default_factory=QuasiNewtonConfig)
    error_grid: int = 1001

    def __post_init__(self):
        if self.switch_epoch < 0:
            raise ValueError("switch_epoch must be non-negative")
        if self.gamma1 < 0:
            raise ValueError("gamma1 must be non-negative")
        snaps = tuple(sorted(int(e) for e in self.snapshot_epochs))
        if any(e < 0 for e in snaps):
            raise ValueError("snapshot epochs must be non-negative")
        object.__setattr__(self, "snapshot_epochs", snaps)


@dataclass
class WeightStats:
    """Summary statistics over connection weights (biases excluded)."""

    mean: float
    abs_mean: float
    std: float  # population convention
    hist_pct: np.ndarray  # 51 bins, sums to 100
    hist_edges: np.ndarray
    per_layer: list  # (label, pct, edges) per weight matrix


@dataclass
class RunRecord:
    """Full diagnostic record of one training run."""

    shape: NetworkShape
    epochs: np.ndarray
    loss_s: np.ndarray
    loss_r: np.ndarray
    l_T: np.ndarray
    l_Cl: np.ndarray
    l_liq: np.ndarray
    l_ic: np.ndarray
    phase: np.ndarray
    switch_loss: float
    final_loss: float
    phase2_iters: int
    stop_reason: str
    wall_phase1_s: float
    wall_phase2_s: float
    errors: ErrorReport | None
    weights_mean: float
    weights_abs_mean: float
    weights_std: float
    oscillation: float
    snapshots: list  # (epoch, flat parameter vector)
    manifest: dict
    failed: bool = False


def oscillation_metric(loss_curve, window: int) -> float:
    """Oscillation amplitude of a loss curve in log space.

    Over the trailing ``window`` entries, returns the mean absolute
    deviation of log10(loss) from the window median: zero for a flat
    plateau, half a decade for a curve alternating across one decade.
    """
    curve = np.asarray(loss_curve, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be positive")
    if window > curve.size:
        raise ValueError(f"window {window} exceeds curve length {curve.size}")
    tail = np.log10(np.maximum(curve[-window:], 1e-300))
    return float(np.mean(np.abs(tail - np.median(tail))))


def weight_stats(net: Network) -> WeightStats:
    """Distribution summary of the connection weights.

    Histograms use 51 uniform bins over the observed range, normalized to
    percentages; a degenerate range widens to +-0.5 around the single value.
    """
    pooled = net.all_weights()

    def hist(values):
        lo, hi = float(np.min(values)), float(np.max(values))
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(values, bins=HIST_BINS, range=(lo, hi))
        return counts * (100.0 / values.size), edges

    pct, edges = hist(pooled)
    per_layer = []
    labels = [f"h{i + 1}" for i in range(net.shape.depth)] + ["out"]
    for label, w in zip(labels, net.weights):
        lp, le = hist(w.ravel())
        per_layer.append((label, lp, le))
    return WeightStats(
        mean=float(np.mean(pooled)),
        abs_mean=float(np.mean(np.abs(pooled))),
        std=float(np.std(pooled)),
        hist_pct=pct,
        hist_edges=edges,
        per_layer=per_layer,
    )


def evaluate_errors(net, p: ModelParams, n_grid: int = 1001) -> ErrorReport:
    """Prediction error norms of a network on a uniform grid over [0, 1]."""
    t = np.linspace(0.0, 1.0, n_grid)
    vals, tans = eval_with_tangent(net, t)
    pred = StateTriple(
        T=vals[0], Cl=vals[1], phi=vals[2], dT=tans[0], dCl=tans[1], dphi=tans[2]
    )
    return error_norms(t, pred, p)


def _snapshot_plan(sched: TrainSchedule, switch_epoch: int):
    epochs = set(sched.snapshot_epochs)
    epochs.add(switch_epoch)
    if sched.snapshot_every:
        epochs.update(range(0, switch_epoch + 1, sched.snapshot_every))
    return epochs


def train(
    shape: NetworkShape,
    p: ModelParams,
    ts: TrainingSet,
    sched: TrainSchedule,
) -> tuple[Network, RunRecord]:
    """Run two-phase training and return the network plus its record.

    A non-finite loss at any point aborts the run and returns a partial
    record flagged ``failed`` instead of raising.
    """
    lr0 = sched.lr0 if sched.lr0 is not None else initial_lr(shape)
    losscfg = LossConfig(
        gamma1=sched.gamma1,
        switch_epoch=sched.switch_epoch,
        n_train=ts.n,
        reg_squared=sched.reg_squared,
    )
    net = init(shape, sched.seed)
    params = net.flatten()
    adam = Adam(params.size, lr=lr0)

    manifest = {
        "depth": shape.depth,
        "width": shape.width,
        "n_params": shape.n_params,
        "n_train": ts.n,
        "stefan": p.stefan,
        "k0": p.k0,
        "qdot": p.qdot,
        "switch_epoch": sched.switch_epoch,
        "gamma1": sched.gamma1,
        "lambda0": lr0,
        "seed": sched.seed,
        "oscillation_window": sched.oscillation_window,
        "pin_phi0": sched.pin_phi0,
        "regularization": "squared_frobenius" if sched.reg_squared else "frobenius",
        "init": "glorot_uniform, zero biases",
        "optimizer_phase1": "adam(beta1=0.9, beta2=0.999, eps=1e-7)",
        "optimizer_phase2": "lbfgs_strong_wolfe (quasi-Newton stand-in for an SQP-family routine)",
        "qn": {
            "memory": sched.qn.memory,
            "ftol": sched.qn.ftol,
            "ftol_iters": sched.qn.ftol_iters,
            "gtol": sched.qn.gtol,
            "max_iters": sched.qn.max_iters,
        },
        "version": _package_version(),
    }

    rows = []  # (epoch, L_S, L_R, L_T, L_Cl, L_liq, L_ic, phase)
    snapshots = []
    snap_epochs = _snapshot_plan(sched, sched.switch_epoch)

    def partial_record(reason):
        return _finalize(
            shape, p, ts, sched, None, rows, snapshots, float("nan"), 0, reason,
            wall1, wall2, manifest, failed=True,
        )

    # ---- phase 1: Adam on the regularized loss --------------------------
    t0 = time.perf_counter()
    wall1 = wall2 = 0.0
    failed_reason = None
    for n in range(sched.switch_epoch):
        gamma = gamma_at(n, losscfg)
        try:
            bk = loss_gradient(
                net, ts, p, gamma=gamma, reg_squared=sched.reg_squared,
                pin_phi0=sched.pin_phi0,
            )
        except NonFiniteError as exc:
            failed_reason = f"non_finite_loss_epoch_{n}: {exc}"
            break
        rows.append((n, bk.loss_s, bk.loss_r, bk.l_T, bk.l_Cl, bk.l_liq, bk.l_ic, 1))
        if n in snap_epochs:
            snapshots.append((n, params.copy()))
        try:
            params = adam.step(params, bk.grad)
        except FloatingPointError as exc:
            failed_reason = f"non_finite_grad_epoch_{n}: {exc}"
            break
        net = Network.from_flat(shape, params)
    wall1 = time.perf_counter() - t0
    if failed_reason is not None:
        return net, partial_record(failed_reason)

    # ---- switchover state ------------------------------------------------
    try:
        bk0 = loss_gradient(net, ts, p, gamma=0.0, pin_phi0=sched.pin_phi0)
    except NonFiniteError as exc:
        return net, partial_record(f"non_finite_loss_switchover: {exc}")
    switch_epoch = sched.switch_epoch
    rows.append((switch_epoch, bk0.loss_s, bk0.loss_s, bk0.l_T, bk0.l_Cl, bk0.l_liq, bk0.l_ic, 2))
    switch_loss = bk0.loss_s
    snapshots.append((switch_epoch, params.copy()))

    # ---- phase 2: quasi-Newton on the standard loss ----------------------
    last_eval = {}  # reuse the breakdown of the most recent evaluation

    def f_and_grad(x):
        bk = loss_gradient(
            Network.from_flat(shape, x), ts, p, gamma=0.0, pin_phi0=sched.pin_phi0
        )
        last_eval["x"] = x.copy()
        last_eval["bk"] = bk
        return bk.loss_s, bk.grad

    def on_accept(k, x, f, g):
        if "x" in last_eval and np.array_equal(last_eval["x"], x):
            bk = last_eval["bk"]
        else:
            bk = loss_gradient(
                Network.from_flat(shape, x), ts, p, gamma=0.0, pin_phi0=sched.pin_phi0
            )
        rows.append(
            (switch_epoch + k, bk.loss_s, bk.loss_s, bk.l_T, bk.l_Cl, bk.l_liq, bk.l_ic, 2)
        )

    t1 = time.perf_counter()
    try:
        qn = quasi_newton_minimize(f_and_grad, params, sched.qn, callback=on_accept)
    except (FloatingPointError, NonFiniteError) as exc:
        wall2 = time.perf_counter() - t1
        return net, partial_record(f"non_finite_loss_phase2: {exc}")
    wall2 = time.perf_counter() - t1

    params = qn.params
    net = Network.from_flat(shape, params)
    snapshots.append((switch_epoch + qn.n_iters, params.copy()))
    record = _finalize(
        shape, p, ts, sched, net, rows, snapshots, switch_loss,
        qn.n_iters, qn.reason, wall1, wall2, manifest, failed=False,
    )
    return net, record


def _finalize(
    shape, p, ts, sched, net, rows, snapshots, switch_loss,
    phase2_iters, stop_reason, wall1, wall2, manifest, failed,
):
    arr = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 8))
    # oscillation is a property of the optimized objective (the regularized
    # loss during part one), which is the curve whose plateau matters
    phase1_lr = arr[arr[:, 7] == 1][:, 2] if arr.size else np.array([])
    if phase1_lr.size:
        window = min(sched.oscillation_window, phase1_lr.size)
        osc = oscillation_metric(phase1_lr, window)
    else:
        osc = 0.0
    if net is not None and not failed:
        errors = evaluate_errors(net, p, sched.error_grid)
        stats = weight_stats(net)
        w_mean, w_abs, w_std = stats.mean, stats.abs_mean, stats.std
    else:
        errors = None
        w_mean = w_abs = w_std = float("nan")
    final_loss = float(arr[-1, 1]) if arr.size else float("nan")
    return RunRecord(
        shape=shape,
        epochs=arr[:, 0].astype(int),
        loss_s=arr[:, 1].copy(),
        loss_r=arr[:, 2].copy(),
        l_T=arr[:, 3].copy(),
        l_Cl=arr[:, 4].copy(),
        l_liq=arr[:, 5].copy(),
        l_ic=arr[:, 6].copy(),
        phase=arr[:, 7].astype(int),
        switch_loss=float(switch_loss),
        final_loss=final_loss,
        phase2_iters=int(phase2_iters),
        stop_reason=stop_reason,
        wall_phase1_s=float(wall1),
        wall_phase2_s=float(wall2),
        errors=errors,
        weights_mean=w_mean,
        weights_abs_mean=w_abs,
        weights_std=w_std,
        oscillation=float(osc),
        snapshots=snapshots,
        manifest=manifest,
        failed=failed,
    )


# ---------------------------------------------------------------------------
# persistence: run.json + curve.csv + parameter snapshots
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def save_run(record: RunRecord, outdir, curve: bool = True, snapshots: bool = True):
    """Persist a record: ``run.json`` manifest/summary, ``curve.csv`` with
    one row per epoch, and binary parameter snapshots."""
    os.makedirs(outdir, exist_ok=True)
    summary = {
        "manifest": record.manifest,
        "failed": record.failed,
        "switch_loss": record.switch_loss,
        "final_loss": record.final_loss,
        "phase2_iters": record.phase2_iters,
        "stop_reason": record.stop_reason,
        "wall_phase1_s": record.wall_phase1_s,
        "wall_phase2_s": record.wall_phase2_s,
        "oscillation": record.oscillation,
        "weights_mean": record.weights_mean,
        "weights_abs_mean": record.weights_abs_mean,
        "weights_std": record.weights_std,
        "errors": record.errors.as_dict() if record.errors else None,
        "n_epochs_logged": int(record.epochs.size),
    }
    with open(os.path.join(outdir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if curve:
        with open(os.path.join(outdir, "curve.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_COLUMNS)
            for i in range(record.epochs.size):
                w.writerow(
                    [
                        int(record.epochs[i]),
                        _fmt(record.loss_s[i]),
                        _fmt(record.loss_r[i]),
                        _fmt(record.l_T[i]),
                        _fmt(record.l_Cl[i]),
                        _fmt(record.l_liq[i]),
                        _fmt(record.l_ic[i]),
                        int(record.phase[i]),
                    ]
                )
    if snapshots:
        snapdir = os.path.join(outdir, "snapshots")
        os.makedirs(snapdir, exist_ok=True)
        for epoch, flat in record.snapshots:
            net = Network.from_flat(record.shape, flat)
            save_snapshot(
                net,
                os.path.join(snapdir, f"params_{int(epoch):08d}"),
                seed=record.manifest.get("seed"),
                epoch=int(epoch),
            )


def load_run(outdir) -> RunRecord:
    """Rebuild a record from ``save_run`` output (for caching and reports)."""
    with open(os.path.join(outdir, "run.json"), encoding="utf-8") as fh:
        summary = json.load(fh)
    manifest = summary["manifest"]
    shape = NetworkShape(manifest["depth"], manifest["width"])

    cols = {name: [] for name in CURVE_COLUMNS}
    curve_path = os.path.join(outdir, "curve.csv")
    if os.path.exists(curve_path):
        with open(curve_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                for name in CURVE_COLUMNS:
                    cols[name].append(float(row[name]))
    snapshots = []
    snapdir = os.path.join(outdir, "snapshots")
    if os.path.isdir(snapdir):
        for name in sorted(os.listdir(snapdir)):
            if name.endswith(".bin"):
                net, meta = load_snapshot(os.path.join(snapdir, name))
                snapshots.append((int(meta.get("epoch", -1)), net.flatten()))
    err = summary.get("errors")
    errors = (
        ErrorReport(
            err["l2_T"], err["l2_Cl"], err["l2_phi"], err["h1_T"], err["h1_Cl"], err["h1_phi"]
        )
        if err
        else None
    )
    return RunRecord(
        shape=shape,
        epochs=np.asarray(cols["epoch"], dtype=int),
        loss_s=np.asarray(cols["L_S"]),
        loss_r=np.asarray(cols["L_R"]),
        l_T=np.asarray(cols["L_T"]),
        l_Cl=np.asarray(cols["L_Cl"]),
        l_liq=np.asarray(cols["L_liq"]),
        l_ic=np.asarray(cols["L_ic"]),
        phase=np.asarray(cols["phase"], dtype=int),
        switch_loss=summary["switch_loss"],
        final_loss=summary["final_loss"],
        phase2_iters=summary["phase2_iters"],
        stop_reason=summary["stop_reason"],
        wall_phase1_s=summary["wall_phase1_s"],
        wall_phase2_s=summary["wall_phase2_s"],
        errors=errors,
        weights_mean=summary["weights_mean"],
        weights_abs_mean=summary["weights_abs_mean"],
        weights_std=summary["weights_std"],
        oscillation=summary["oscillation"],
        snapshots=snapshots,
        manifest=manifest,
        failed=summary["failed"],
    )
