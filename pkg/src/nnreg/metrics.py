"""Landmark-shape errors, CDF/AUC curves, classification error and run aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AUC_MAX_ERROR = 0.5
AUC_STEP = 1e-3


class DegenerateShapeError(ValueError):
    pass


@dataclass(frozen=True)
class RunStats:
    mean: float
    std: float
    kept: tuple

    def __str__(self):
        return f"{self.mean:.2f}±{self.std:.3f}"


def _as_points(shape) -> np.ndarray:
    pts = np.asarray(shape, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError(f"a shape is a list of at least two 2-D points, got {pts.shape}")
    return pts


def nrmse(pred, truth, ref=(0, 1)) -> float:
    """Mean point-to-point distance divided by the truth's reference distance.

    Shapes are ``(N, 2)`` arrays or flat ``[x0, y0, x1, y1, ...]`` vectors.
    ``ref`` holds the two point indices whose distance normalizes the error.
    """
    p, g = _as_points(pred), _as_points(truth)
    if p.shape != g.shape:
        raise ValueError(f"shapes have different point counts: {p.shape} vs {g.shape}")
    i, j = ref
    if i == j:
        raise ValueError("reference points must be distinct")
    d = float(np.linalg.norm(g[i] - g[j]))
    if d == 0:
        raise DegenerateShapeError("reference points of the ground truth coincide")
    return float(np.sum(np.linalg.norm(p - g, axis=1)) / (p.shape[0] * d))


def nrmse_batch(pred, truth, ref=(0, 1)) -> np.ndarray:
    """Row-wise :func:`nrmse` for flat ``(n_samples, 2N)`` arrays."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(truth, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"prediction {p.shape} and truth {g.shape} differ")
    p = p.reshape(p.shape[0], -1, 2)
    g = g.reshape(g.shape[0], -1, 2)
    d = np.linalg.norm(g[:, ref[0]] - g[:, ref[1]], axis=1)
    if np.any(d == 0):
        raise DegenerateShapeError("reference points of a ground truth coincide")
    return np.linalg.norm(p - g, axis=2).sum(axis=1) / (p.shape[1] * d)


def cdf_at(errors, x: float) -> float:
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise ValueError("errors must be nonempty")
    return float(np.count_nonzero(e <= x) / e.size)


def auc_grid() -> np.ndarray:
    per_unit = int(round(1.0 / AUC_STEP))
    # i / 1000 is the correctly rounded grid point; i * 0.001 can be off by an ulp
    return np.arange(int(round(AUC_MAX_ERROR * per_unit)) + 1) / per_unit


def auc_cdf(errors) -> float:
    """Mean of the error CDF over 0, 0.001, ..., 0.5 (501 points), in [0, 1]."""
    e = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise ValueError("errors must be nonempty")
    counts = np.searchsorted(e, auc_grid(), side="right")
    return float(np.mean(counts / e.size))


def aggregate_runs(values, expected: int | None = None) -> RunStats:
    """Drop one best and one worst value, report mean and population std."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 3:
        raise ValueError(f"need at least 3 runs to aggregate, got {v.size}")
    if expected is not None and v.size != expected:
        raise ValueError(f"expected {expected} runs, got {v.size}")
    kept = np.sort(v)[1:-1]
    return RunStats(float(np.mean(kept)), float(np.std(kept)), tuple(kept.tolist()))


def classification_error(predictions, truth) -> float:
    p = np.asarray(predictions).ravel()
    t = np.asarray(truth).ravel()
    if p.size != t.size:
        raise ValueError(f"{p.size} predictions for {t.size} labels")
    if p.size == 0:
        return 0.0
    return float(100.0 * np.count_nonzero(p != t) / p.size)
