"""MAE reports, path reconstruction from (dx, dy) and the variant ablation."""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .datamodel import Trajectory
from .nn import VARIANTS, ModelConfig, TrainConfig, TrainingDiverged, fit, predict, save_model
from .nn.train import write_history

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaeReport:
    model_name: str
    dataset_name: str
    mae_dx: float
    mae_dy: float
    n_windows: int


def mae_report(pred, truth, model_name="", dataset_name=""):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, 2)
    if pred.shape != truth.shape:
        raise ValueError(f"{len(pred)} predictions for {len(truth)} labels")
    if len(pred) == 0:
        raise ValueError("need at least one window")
    err = np.abs(pred - truth).mean(axis=0)
    return MaeReport(model_name, dataset_name, float(err[0]), float(err[1]), len(pred))


def reconstruct_trajectory(steps, start=(0.0, 0.0), period=2.0):
    """Chain ``(t_start, dx, dy)`` displacements from ``start``.

    Returns one point at the first window start and one at every window end.
    Windows must be ordered and must not overlap.
    """
    steps = np.asarray(steps, dtype=np.float64).reshape(-1, 3)
    if len(steps) == 0:
        return Trajectory([0.0], [start[0]], [start[1]])
    t0 = steps[:, 0]
    if np.any(t0[1:] < t0[:-1] + period - 1e-9):
        raise ValueError("label windows overlap or are out of order; reconstruct from consecutive windows")
    xy = np.vstack([start, np.asarray(start) + np.cumsum(steps[:, 1:], axis=0)])
    t = np.concatenate([[t0[0]], t0 + period])
    return Trajectory(t, xy[:, 0], xy[:, 1])


def stability(history):
    """Std of epoch-to-epoch changes in validation MAE (training epochs only)."""
    val = np.array([r["val_mae"] for r in history if r["epoch"] >= 1])
    return float(np.std(np.diff(val))) if len(val) > 2 else 0.0


def mean_baseline(split, target, subset="test"):
    """MAE of always predicting the training-set mean."""
    _, y_tr = split.arrays("train", target)
    _, y = split.arrays(subset, target)
    return float(np.mean(np.abs(y - y_tr.mean())))


@dataclass
class VariantResult:
    name: str
    reports: dict = field(default_factory=dict)  # dataset -> MaeReport
    histories: dict = field(default_factory=dict)  # target -> history rows
    stability: dict = field(default_factory=dict)  # target -> float
    params: dict = field(default_factory=dict)  # target -> ModelParams
    error: str = ""


def ablation_run(variants, split, cfg=None, model_overrides=None, out_dir=None, targets=("dx", "dy")):
    """Train every variant on both targets with identical data and seeds.

    Variants may be names from ``VARIANTS`` or ``(name, ModelConfig)`` pairs.
    A variant whose training diverges is reported with ``error`` set; the
    others still run.
    """
    cfg = cfg or TrainConfig()
    model_overrides = dict(model_overrides or {})
    resolved = []
    for v in variants:
        if isinstance(v, tuple):
            resolved.append(v)
        elif v in VARIANTS:
            resolved.append((v, ModelConfig.for_variant(v, **model_overrides)))
        else:
            raise KeyError(f"unknown variant {v!r}; known variants: {', '.join(VARIANTS)}")
    if len(resolved) < 2:
        raise ValueError("an ablation needs at least two variants")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    results = []
    for name, mcfg in resolved:
        res = VariantResult(name)
        preds = {}
        try:
            for target in targets:
                X_tr, y_tr = split.arrays("train", target)
                X_va, y_va = split.arrays("val", target)
                log.info("ablation: training %s for %s", name, target)
                params, hist = fit(X_tr, y_tr, X_va, y_va, model_cfg=mcfg, cfg=cfg)
                res.params[target] = params
                res.histories[target] = hist
                res.stability[target] = stability(hist)
                for subset in ("val", "test"):
                    X, _ = split.arrays(subset, target)
                    if len(X):
                        preds.setdefault(subset, {})[target] = predict(params, X)
                if out_dir:
                    write_history(hist, os.path.join(out_dir, f"history_{name}_{target}.csv"))
                    save_model(params, os.path.join(out_dir, f"model_{name}_{target}.txt"))
        except TrainingDiverged as exc:
            res.error = str(exc)
            results.append(res)
            continue
        for subset, p in preds.items():
            if set(p) == {"dx", "dy"}:
                truth = np.column_stack([split.arrays(subset, t)[1] for t in ("dx", "dy")])
                res.reports[subset] = mae_report(np.column_stack([p["dx"], p["dy"]]), truth, name, subset)
        results.append(res)
    if out_dir:
        write_ablation_table(results, os.path.join(out_dir, "ablation.csv"))
    return results


def write_ablation_table(results, path):
    with open(path, "w") as f:
        f.write("variant,dataset,mae_dx,mae_dy,n_windows,stability_dx,stability_dy,error\n")
        for r in results:
            if r.error or not r.reports:
                f.write(f"{r.name},,,,,,,{r.error.replace(',', ';')}\n")
                continue
            for subset, rep in r.reports.items():
                f.write(
                    f"{r.name},{subset},{float(rep.mae_dx)!r},{float(rep.mae_dy)!r},{rep.n_windows},"
                    f"{float(r.stability.get('dx', float('nan')))!r},{float(r.stability.get('dy', float('nan')))!r},\n"
                )
