"""Experiment harness CLI.

Subcommands: ``train`` (one run), ``sweep`` (depth/width grid with family
tagging and optimal-network selection), ``compare`` (trained networks vs the
backward-Euler baseline over point counts), ``fdm`` (baseline convergence
study), ``exact`` (exact-solution export), ``stats`` (weight statistics from
saved snapshots). All artifacts are UTF-8 CSV plus JSON manifests with
stable, documented columns.

Exit codes: 0 success, 1 run failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fdm import FDM_CSV_COLUMNS, FdmConfig, convergence_study
from .loss import make_training_set
from .network import NetworkShape
from .optim import QuasiNewtonConfig
from .physics import ModelParams, exact_state, is_mushy_valid
from .network import load_snapshot
from .trainer import (
    RunRecord,
    TrainSchedule,
    save_run,
    train,
    weight_stats,
)

__all__ = ["main", "classify_family", "spearman", "SWEEP_CSV_COLUMNS", "COMPARE_CSV_COLUMNS"]

SWEEP_CSV_COLUMNS = [
    "depth", "width", "seed", "n_train", "n_params", "family",
    "final_loss", "switch_loss", "max_l2",
    "l2_T", "l2_Cl", "l2_phi", "h1_T", "h1_Cl", "h1_phi",
    "osc_metric", "w_mean", "w_abs_mean", "w_std",
    "phase2_iters", "stop_reason", "wall_phase1_s", "wall_phase2_s",
    "optimal", "failed",
]

COMPARE_CSV_COLUMNS = [
    "method", "depth", "width", "n_points", "seed",
    "final_loss", "max_l2", "wall_seconds",
]

EXACT_CSV_COLUMNS = ["t", "T", "Cl", "phi", "dT", "dCl", "dphi"]

WEIGHT_STATS_COLUMNS = ["epoch", "mean", "abs_mean", "std", "n_weights"]
WEIGHT_HIST_COLUMNS = ["epoch", "layer", "bin_left", "bin_right", "pct"]


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def parse_shape(text: str) -> NetworkShape:
    """'3x2' -> NetworkShape(depth=3, width=2)."""
    try:
        d, w = text.lower().split("x")
        return NetworkShape(int(d), int(w))
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}, expected DxW") from exc


def parse_params(text: str) -> ModelParams:
    """'0.1,0.1,-1' -> ModelParams(stefan, k0, qdot)."""
    try:
        s, k0, qd = (float(v) for v in text.split(","))
        return ModelParams(stefan=s, k0=k0, qdot=qd)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad params {text!r}: {exc}") from exc


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v != ""]


def classify_family(shape: NetworkShape, base: NetworkShape) -> str:
    """Marker class of a grid cell relative to the base shape."""
    if shape == base:
        return "base"
    deeper = shape.depth > base.depth and shape.width <= base.width
    wider = shape.width > base.width and shape.depth <= base.depth
    if deeper:
        return "deeper"
    if wider:
        return "wider"
    if shape.depth > base.depth and shape.width > base.width:
        return "deeper_wider_deep" if shape.depth > shape.width else "deeper_wider_wide"
    return "smaller"


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks on ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        return float("nan")
    rx, ry = _average_ranks(x), _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0.0:
        return float("nan")
    return float(np.sum(rx * ry) / denom)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in columns})


# ---------------------------------------------------------------------------
# training cells (shared by train/sweep/compare)
# ---------------------------------------------------------------------------


def _train_cell(spec: dict) -> dict:
    """Train one configuration; returns a sweep.csv row. Top-level so it can
    run in worker processes."""
    shape = NetworkShape(spec["depth"], spec["width"])
    p = ModelParams(spec["stefan"], spec["k0"], spec["qdot"])
    ts = make_training_set(spec["n_train"], spec.get("sampling", "uniform"), seed=spec["seed"])
    qn = QuasiNewtonConfig(max_iters=spec.get("max_phase2_iters", 20000))
    sched = TrainSchedule(
        switch_epoch=spec["switch_epoch"],
        gamma1=spec["gamma1"],
        lr0=spec.get("lr0"),
        seed=spec["seed"],
        snapshot_epochs=tuple(spec.get("snapshot_epochs", ())),
        snapshot_every=spec.get("snapshot_every"),
        oscillation_window=spec.get("oscillation_window", 2000),
        pin_phi0=spec.get("pin_phi0", True),
        qn=qn,
    )
    net, rec = train(shape, p, ts, sched)
    outdir = spec.get("outdir")
    if outdir:
        save_run(
            rec,
            outdir,
            curve=spec.get("save_curve", False),
            snapshots=spec.get("save_snapshots", False),
        )
    return _row_from_record(rec, spec)


def _row_from_record(rec: RunRecord, spec: dict) -> dict:
    err = rec.errors
    nan = float("nan")
    return {
        "depth": spec["depth"],
        "width": spec["width"],
        "seed": spec["seed"],
        "n_train": spec["n_train"],
        "n_params": rec.shape.n_params,
        "family": spec.get("family", ""),
        "final_loss": rec.final_loss,
        "switch_loss": rec.switch_loss,
        "max_l2": err.max_l2 if err else nan,
        "l2_T": err.l2_T if err else nan,
        "l2_Cl": err.l2_Cl if err else nan,
        "l2_phi": err.l2_phi if err else nan,
        "h1_T": err.h1_T if err else nan,
        "h1_Cl": err.h1_Cl if err else nan,
        "h1_phi": err.h1_phi if err else nan,
        "osc_metric": rec.oscillation,
        "w_mean": rec.weights_mean,
        "w_abs_mean": rec.weights_abs_mean,
        "w_std": rec.weights_std,
        "phase2_iters": rec.phase2_iters,
        "stop_reason": rec.stop_reason,
        "wall_phase1_s": rec.wall_phase1_s,
        "wall_phase2_s": rec.wall_phase2_s,
        "optimal": 0,
        "failed": int(rec.failed),
    }


def _run_cells(specs: list[dict], jobs: int) -> list[dict]:
    """Run cells on a bounded pool; results keep submission order."""
    if jobs <= 1 or len(specs) <= 1:
        rows = []
        for spec in specs:
            rows.append(_train_cell(spec))
            _progress(rows[-1])
        return rows
    rows = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_train_cell, spec) for spec in specs]
        for fut in futures:
            rows.append(fut.result())
            _progress(rows[-1])
    return rows


def _progress(row: dict):
    print(
        f"[ttlab] D{row['depth']}W{row['width']} seed={row['seed']} n={row['n_train']}: "
        f"loss={row['final_loss']:.3e} max_l2={row['max_l2']:.3e} "
        f"({'FAILED' if row['failed'] else row['stop_reason']})",
        file=sys.stderr,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    p = args.params
    if not is_mushy_valid(p):
        print(f"error: parameters {p} are not mushy-regime valid on [0, 1]", file=sys.stderr)
        return 2
    snapshot_epochs, snapshot_every = (), None
    if args.snapshots == "hist":
        snapshot_every = 1000
    elif args.snapshots:
        snapshot_epochs = tuple(_int_list(args.snapshots))
    spec = {
        "depth": args.depth,
        "width": args.width,
        "stefan": p.stefan,
        "k0": p.k0,
        "qdot": p.qdot,
        "n_train": int(args.n_train),
        "sampling": args.sampling,
        "seed": args.seed,
        "switch_epoch": args.switch_epoch,
        "gamma1": args.gamma1,
                        "pin_phi0": not args.no_pin_phi0,
        "lr0": args.lr0,
        "max_phase2_iters": args.max_phase2_iters,
        "snapshot_epochs": snapshot_epochs,
        "snapshot_every": snapshot_every,
        "outdir": args.out,
        "save_curve": True,
        "save_snapshots": True,
    }
    row = _train_cell(spec)
    print(
        f"final_loss={row['final_loss']:.6e} switch_loss={row['switch_loss']:.6e} "
        f"max_l2={row['max_l2']:.6e} osc={row['osc_metric']:.4f} "
        f"wall_s={row['wall_phase1_s'] + row['wall_phase2_s']:.1f} stop={row['stop_reason']}"
    )
    return 1 if row["failed"] else 0


def _sweep_cells(args) -> list[tuple[NetworkShape, int, int]]:
    if args.cells:
        shapes = [parse_shape(c) for c in args.cells.split(",")]
    else:
        depths = _int_list(args.depths)
        widths = _int_list(args.widths)
        shapes = [NetworkShape(d, w) for d in depths for w in widths]
    seeds = [args.seed + i for i in range(args.seeds)]
    n_trains = _int_list(str(args.n_train))
    return [(s, n1, seed) for s in shapes for n1 in n_trains for seed in seeds]


def cmd_sweep(args) -> int:
    p = args.params
    if not is_mushy_valid(p):
        print(f"error: parameters {p} are not mushy-regime valid on [0, 1]", file=sys.stderr)
        return 2
    base = args.base
    cells = _sweep_cells(args)
    if not any(s == base for s, _, _ in cells):
        print(f"error: base shape {base.label()} is not in the sweep grid", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    specs = []
    for shape, n1, seed in cells:
        specs.append(
            {
                "depth": shape.depth,
                "width": shape.width,
                "stefan": p.stefan,
                "k0": p.k0,
                "qdot": p.qdot,
                "n_train": n1,
                "sampling": args.sampling,
                "seed": seed,
                "switch_epoch": args.switch_epoch,
                "gamma1": args.gamma1,
                        "pin_phi0": not args.no_pin_phi0,
                "lr0": args.lr0,
                "max_phase2_iters": args.max_phase2_iters,
                "family": classify_family(shape, base),
                "outdir": os.path.join(args.out, "runs", f"{shape.label()}_n{n1}_s{seed}"),
                "save_curve": args.curves,
            }
        )
    rows = _run_cells(specs, args.jobs)
    summary = finish_sweep(rows, base)
    _write_csv(os.path.join(args.out, "sweep.csv"), SWEEP_CSV_COLUMNS, rows)
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    ok = [r for r in rows if not r["failed"]]
    opt_loss = summary["optimal_loss"] if summary["optimal"] else float("nan")
    print(
        f"sweep: {len(ok)}/{len(rows)} runs converged; "
        f"optimal={summary['optimal'] or 'n/a'} (loss={opt_loss:.3e})"
    )
    return 0 if ok else 1


def finish_sweep(rows: list[dict], base: NetworkShape) -> dict:
    """Tag the optimal network and assemble the sweep summary.

    The optimal network is the lowest-final-loss non-failed run in the
    deeper-but-not-wider family; when that family is absent the base cell
    holds the title by default.
    """
    ok = [r for r in rows if not r["failed"]]
    deeper = [r for r in ok if r["family"] == "deeper"]
    pool = deeper if deeper else [r for r in ok if r["family"] == "base"]
    optimal_row = min(pool, key=lambda r: r["final_loss"]) if pool else None
    if optimal_row is not None:
        for r in rows:
            r["optimal"] = int(r is optimal_row)

    rho = {}
    for family in sorted({r["family"] for r in ok}):
        members = [r for r in ok if r["family"] == family]
        if len(members) >= 2:
            rho[family] = spearman(
                [r["final_loss"] for r in members], [r["max_l2"] for r in members]
            )
    # smallest cell (by parameter count) whose median loss sits within 10x of
    # the best cell median; reported as a starting-point suggestion only
    by_shape: dict = {}
    for r in ok:
        by_shape.setdefault((r["depth"], r["width"]), []).append(r["final_loss"])
    medians = {k: float(np.median(v)) for k, v in by_shape.items()}
    suggestion = None
    if medians:
        best = min(medians.values())
        eligible = [
            k for k, m in medians.items() if m <= 10.0 * best
        ]
        if eligible:
            d, w = min(eligible, key=lambda k: NetworkShape(*k).n_params)
            suggestion = f"D{d}W{w}"
    return {
        "base": base.label(),
        "optimal": (
            f"D{optimal_row['depth']}W{optimal_row['width']}" if optimal_row else None
        ),
        "optimal_loss": optimal_row["final_loss"] if optimal_row else None,
        "optimal_max_l2": optimal_row["max_l2"] if optimal_row else None,
        "spearman_loss_error": rho,
        "base_suggestion": suggestion,
        "n_runs": len(rows),
        "n_failed": len(rows) - len(ok),
    }


def cmd_compare(args) -> int:
    p = args.params
    if not is_mushy_valid(p):
        print(f"error: parameters {p} are not mushy-regime valid on [0, 1]", file=sys.stderr)
        return 2
    shapes = [parse_shape(c) for c in args.shapes.split(",")]
    n_points = _int_list(args.n_points)
    fdm_steps = _int_list(args.fdm_steps) if args.fdm_steps else n_points
    os.makedirs(args.out, exist_ok=True)

    specs = []
    for shape in shapes:
        for n1 in n_points:
            for i in range(args.seeds):
                specs.append(
                    {
                        "depth": shape.depth,
                        "width": shape.width,
                        "stefan": p.stefan,
                        "k0": p.k0,
                        "qdot": p.qdot,
                        "n_train": n1,
                        "sampling": args.sampling,
                        "seed": args.seed + i,
                        "switch_epoch": args.switch_epoch,
                        "gamma1": args.gamma1,
                        "pin_phi0": not args.no_pin_phi0,
                        "lr0": args.lr0,
                        "max_phase2_iters": args.max_phase2_iters,
                    }
                )
    ttn_rows = _run_cells(specs, args.jobs)
    rows = []
    for r in ttn_rows:
        rows.append(
            {
                "method": "ttn",
                "depth": r["depth"],
                "width": r["width"],
                "n_points": r["n_train"],
                "seed": r["seed"],
                "final_loss": r["final_loss"],
                "max_l2": r["max_l2"],
                "wall_seconds": r["wall_phase1_s"] + r["wall_phase2_s"],
            }
        )
    for f in convergence_study(p, fdm_steps):
        rows.append(
            {
                "method": "fdm",
                "depth": 0,
                "width": 0,
                "n_points": f["n_steps"],
                "seed": 0,
                "final_loss": float("nan"),
                "max_l2": f["max_l2"],
                "wall_seconds": f["wall_seconds"],
            }
        )
    _write_csv(os.path.join(args.out, "compare.csv"), COMPARE_CSV_COLUMNS, rows)

    summary = _compare_summary(rows, shapes)
    with open(os.path.join(args.out, "compare_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def _compare_summary(rows: list[dict], shapes: list[NetworkShape]) -> dict:
    """Medians per curve plus the base/optimal ratio and the qualitative
    saturation-vs-first-order contrast."""
    def med(values):
        return float(np.median(values)) if values else None

    ttn = {}
    for shape in shapes:
        per_n = {}
        for n in sorted({r["n_points"] for r in rows if r["method"] == "ttn"}):
            vals = [
                r["max_l2"]
                for r in rows
                if r["method"] == "ttn"
                and r["depth"] == shape.depth
                and r["width"] == shape.width
                and r["n_points"] == n
                and np.isfinite(r["max_l2"])
            ]
            if vals:
                per_n[str(n)] = med(vals)
        ttn[shape.label()] = per_n
    fdm_err = {
        str(r["n_points"]): r["max_l2"] for r in rows if r["method"] == "fdm"
    }
    ratios = {}
    if len(shapes) >= 2:
        base, optimal = shapes[0], shapes[1]
        for n, base_err in ttn.get(base.label(), {}).items():
            opt_err = ttn.get(optimal.label(), {}).get(n)
            if opt_err:
                ratios[n] = base_err / opt_err
    fdm_vals = [fdm_err[k] for k in sorted(fdm_err, key=int)]
    summary = {
        "ttn_median_max_l2": ttn,
        "fdm_max_l2": fdm_err,
        "base_over_optimal_error": ratios,
        "fdm_error_decreases": bool(fdm_vals and fdm_vals[-1] < fdm_vals[0]),
    }
    base_curve = list(ttn.get(shapes[0].label(), {}).values()) if shapes else []
    if len(base_curve) >= 2 and min(base_curve) > 0:
        summary["ttn_error_spread"] = max(base_curve) / min(base_curve)
    return summary


def cmd_fdm(args) -> int:
    p = args.params
    if not is_mushy_valid(p):
        print(f"error: parameters {p} are not mushy-regime valid on [0, 1]", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    cfg = FdmConfig(n_steps=1, inner_tol=args.inner_tol, relaxation=args.relaxation)
    rows = convergence_study(
        p, _int_list(args.n_steps), cfg_template=cfg,
        out_csv=os.path.join(args.out, "fdm.csv"),
    )
    for row in rows:
        print(
            f"N={row['n_steps']:>6d} max_l2={row['max_l2']:.6e} "
            f"wall_s={row['wall_seconds']:.3f} sweeps={row['inner_iters_mean']:.1f}"
        )
    return 0


def cmd_exact(args) -> int:
    p = args.params
    if not is_mushy_valid(p):
        print(f"error: parameters {p} are not mushy-regime valid on [0, 1]", file=sys.stderr)
        return 2
    if args.grid_n < 2:
        print("error: --grid-n must be at least 2", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    t = np.linspace(0.0, 1.0, args.grid_n)
    ex = exact_state(t, p)
    rows = [
        {
            "t": float(t[i]),
            "T": float(ex.T[i]),
            "Cl": float(ex.Cl[i]),
            "phi": float(ex.phi[i]),
            "dT": float(ex.dT[i]),
            "dCl": float(ex.dCl[i]),
            "dphi": float(ex.dphi[i]),
        }
        for i in range(t.size)
    ]
    _write_csv(os.path.join(args.out, "exact.csv"), EXACT_CSV_COLUMNS, rows)
    print(f"wrote {t.size} rows to {os.path.join(args.out, 'exact.csv')}")
    return 0


def cmd_stats(args) -> int:
    snapdir = os.path.join(args.run, "snapshots")
    if not os.path.isdir(snapdir):
        print(f"error: no snapshots directory under {args.run}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    stat_rows, hist_rows = [], []
    for name in sorted(os.listdir(snapdir)):
        if not name.endswith(".bin"):
            continue
        net, meta = load_snapshot(os.path.join(snapdir, name))
        epoch = int(meta.get("epoch", -1))
        stats = weight_stats(net)
        stat_rows.append(
            {
                "epoch": epoch,
                "mean": stats.mean,
                "abs_mean": stats.abs_mean,
                "std": stats.std,
                "n_weights": net.shape.n_weights,
            }
        )
        layers = [("all", stats.hist_pct, stats.hist_edges)] + stats.per_layer
        for label, pct, edges in layers:
            for b in range(pct.size):
                hist_rows.append(
                    {
                        "epoch": epoch,
                        "layer": label,
                        "bin_left": float(edges[b]),
                        "bin_right": float(edges[b + 1]),
                        "pct": float(pct[b]),
                    }
                )
    _write_csv(os.path.join(args.out, "weight_stats.csv"), WEIGHT_STATS_COLUMNS, stat_rows)
    _write_csv(os.path.join(args.out, "weight_hist.csv"), WEIGHT_HIST_COLUMNS, hist_rows)
    print(f"wrote stats for {len(stat_rows)} snapshots to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", type=parse_params, default=parse_params("0.1,0.1,-1"),
                        help="model constants S,k0,qdot (default 0.1,0.1,-1)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="base RNG seed")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes for multi-run commands")
    common.add_argument("--config", default=None,
                        help="JSON file of flag defaults (explicit flags win)")

    train_common = argparse.ArgumentParser(add_help=False)
    train_common.add_argument("--n-train", default="200",
                              help="interior training points (list allowed in sweep)")
    train_common.add_argument("--gamma1", type=float, default=1e-4,
                              help="first-part regularization strength (0 disables)")
    train_common.add_argument("--switch-epoch", type=int, default=15000)
    train_common.add_argument("--lr0", type=float, default=None,
                              help="override the depth/width learning-rate rule")
    train_common.add_argument("--sampling", choices=["uniform", "latin"], default="uniform")
    train_common.add_argument("--max-phase2-iters", type=int, default=20000)
    train_common.add_argument("--no-pin-phi0", action="store_true",
                              help="drop the phi(0) initial-condition term "
                                   "(leaves the solid fraction's integration "
                                   "constant free; expect degenerate minima)")

    ap = argparse.ArgumentParser(prog="ttlab", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", parents=[common, train_common],
                             help="train one network and write run artifacts")
    p_train.add_argument("--depth", type=int, required=True)
    p_train.add_argument("--width", type=int, required=True)
    p_train.add_argument("--snapshots", default="",
                         help="'hist' for every 1000 epochs, or comma-separated epochs")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", parents=[common, train_common],
                             help="train a depth/width grid and tag families")
    p_sweep.add_argument("--depths", default="1,2,3,5,8")
    p_sweep.add_argument("--widths", default="2,4,6,12")
    p_sweep.add_argument("--cells", default="",
                         help="explicit DxW list, overrides --depths/--widths")
    p_sweep.add_argument("--seeds", type=int, default=2, help="replicates per cell")
    p_sweep.add_argument("--base", type=parse_shape, default=parse_shape("1x2"))
    p_sweep.add_argument("--curves", action="store_true",
                         help="also keep per-run curve.csv files")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", parents=[common, train_common],
                           help="trained networks vs the discretization baseline")
    p_cmp.add_argument("--shapes", default="1x2,3x2,2x6",
                       help="DxW list; first is treated as base, second as optimal")
    p_cmp.add_argument("--n-points", default="200,400,1000,2000")
    p_cmp.add_argument("--fdm-steps", default="",
                       help="baseline grid sizes (defaults to --n-points)")
    p_cmp.add_argument("--seeds", type=int, default=1)
    p_cmp.set_defaults(func=cmd_compare)

    p_fdm = sub.add_parser("fdm", parents=[common],
                           help="backward-Euler convergence study")
    p_fdm.add_argument("--n-steps", default="125,250,500,1000,2000")
    p_fdm.add_argument("--inner-tol", type=float, default=1e-12)
    p_fdm.add_argument("--relaxation", type=float, default=1.0)
    p_fdm.set_defaults(func=cmd_fdm)

    p_exact = sub.add_parser("exact", parents=[common],
                             help="export the exact trajectory")
    p_exact.add_argument("--grid-n", type=int, default=1001)
    p_exact.set_defaults(func=cmd_exact)

    p_stats = sub.add_parser("stats", parents=[common],
                             help="weight statistics from run snapshots")
    p_stats.add_argument("--run", required=True, help="run directory with snapshots/")
    p_stats.set_defaults(func=cmd_stats)
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pre-scan for --config and fold the file into parser defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        ap.error("--config needs a path")
    path = argv[i + 1]
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        ap.error(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        ap.error(f"config {path} must hold a JSON object")
    mapped = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest == "params":
            value = parse_params(value)
        elif dest == "base":
            value = parse_shape(value)
        mapped[dest] = value
    used = set()
    for action in ap._subparsers._group_actions:  # push defaults into subparsers
        for sp in action.choices.values():
            known = {a.dest for a in sp._actions}
            hits = {k: v for k, v in mapped.items() if k in known}
            used.update(hits)
            sp.set_defaults(**hits)
    unknown = set(mapped) - used
    if unknown:
        ap.error(f"unknown config keys: {sorted(unknown)}")
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    argv = _apply_config_file(ap, argv)
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
