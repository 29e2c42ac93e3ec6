"""Displacement metrics for single- and multi-agent, multi-modal predictions.

Joint metrics apply one mode index to every vehicle of a scene at once
(the INTERACTION-challenge convention) and report the best such index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .predict import PredictionSet


class LengthMismatch(ValueError):
    pass


class ModeCountMismatch(ValueError):
    pass


class VehicleMismatch(ValueError):
    pass


def _check(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != 2 or len(pred) < 1:
        raise LengthMismatch(f"prediction {pred.shape} and truth {truth.shape} must both be (F, 2), F >= 1")
    return pred, truth


def ade(pred, truth) -> float:
    """Mean Euclidean error over the horizon."""
    pred, truth = _check(pred, truth)
    return float(np.hypot(*(pred - truth).T).mean())


def fde(pred, truth) -> float:
    """Euclidean error at the last step."""
    pred, truth = _check(pred, truth)
    return float(np.hypot(*(pred[-1] - truth[-1])))


@dataclass(frozen=True)
class MetricReport:
    """Scene-level metrics.

    ``ade``/``fde`` average each vehicle's own best mode; the joint values
    hold one mode for all vehicles.  For an aggregated report the fields
    are means over windows, so ``min_joint_ade`` is the mean of per-window
    minima rather than the minimum of ``joint_ade_per_mode``.
    """

    ade: float
    fde: float
    joint_ade_per_mode: tuple[float, ...]
    joint_fde_per_mode: tuple[float, ...]
    min_joint_ade: float
    min_joint_fde: float
    n_agents: int
    n_windows: int = 1


def displacement_errors(preds: PredictionSet, truth: Mapping[int, np.ndarray]) -> np.ndarray:
    """Per-step errors, shape [N, K, F]."""
    missing = [t for t in preds.track_ids if t not in truth]
    if missing:
        raise VehicleMismatch(f"no ground truth for vehicles {missing}")
    gt = np.stack([np.asarray(truth[t], dtype=float) for t in preds.track_ids])
    if gt.shape != (len(preds.track_ids), preds.F, 2):
        raise LengthMismatch(f"truth shape {gt.shape} does not match horizon F={preds.F}")
    diff = preds.positions - gt[:, None]
    return np.hypot(diff[..., 0], diff[..., 1])


def joint_metrics(preds: PredictionSet, truth: Mapping[int, np.ndarray], K: int | None = None) -> MetricReport:
    """ADE/FDE and their joint multi-agent variants for one scene.

    ``K`` optionally asserts the expected mode count.
    """
    if K is not None and preds.K != K:
        raise ModeCountMismatch(f"prediction has {preds.K} modes, expected {K}")
    err = displacement_errors(preds, truth)
    ade_nk = err.mean(axis=2)
    fde_nk = err[:, :, -1]
    joint_ade = ade_nk.mean(axis=0)
    joint_fde = fde_nk.mean(axis=0)
    return MetricReport(
        ade=float(ade_nk.min(axis=1).mean()),
        fde=float(fde_nk.min(axis=1).mean()),
        joint_ade_per_mode=tuple(float(v) for v in joint_ade),
        joint_fde_per_mode=tuple(float(v) for v in joint_fde),
        min_joint_ade=float(joint_ade.min()),
        min_joint_fde=float(joint_fde.min()),
        n_agents=len(preds.track_ids),
    )


def aggregate(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted mean over windows."""
    if not reports:
        raise ValueError("nothing to aggregate")
    Ks = {len(r.joint_ade_per_mode) for r in reports}
    if len(Ks) != 1:
        raise ModeCountMismatch(f"reports mix mode counts {sorted(Ks)}")
    n = sum(r.n_windows for r in reports)
    w = np.array([r.n_windows for r in reports], dtype=float) / n

    def mean(attr):
        return float(np.dot(w, [getattr(r, attr) for r in reports]))

    return MetricReport(
        ade=mean("ade"),
        fde=mean("fde"),
        joint_ade_per_mode=tuple(np.dot(w, [r.joint_ade_per_mode for r in reports]).tolist()),
        joint_fde_per_mode=tuple(np.dot(w, [r.joint_fde_per_mode for r in reports]).tolist()),
        min_joint_ade=mean("min_joint_ade"),
        min_joint_fde=mean("min_joint_fde"),
        n_agents=sum(r.n_agents for r in reports),
        n_windows=n,
    )
