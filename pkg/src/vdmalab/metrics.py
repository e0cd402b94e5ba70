"""Curve-batch error metrics for surrogate evaluation.

Batches are arrays of shape (n_batch, n_seq): one row per curve, one
column per frequency point, truth and prediction sharing the shape.  Two
percentage-error flavors are provided because the common reading of
"weighted MAPE" (batch-sum normalization per point) and a literal
sum-of-pointwise-ratios differ whenever n_batch > 1; both reduce to the
plain MAPE for a single-curve batch.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class DegenerateBatch(ValueError):
    """Truth values sum to zero at some point index, so the batch-weighted
    percentage error is undefined there."""


class DegeneratePoint(ValueError):
    """All truth values of a sequence fall below the magnitude floor."""


def _as_batches(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: truth {t.shape} vs pred {p.shape}")
    return t, p


def wmape(truth, pred) -> float:
    """Batch-weighted mean absolute percentage error.

    Per point index j, the summed absolute error over the batch is divided
    by the summed absolute truth, then averaged over the sequence:
    (1/N_seq) sum_j [ sum_i |y_ij - p_ij| / sum_i |y_ij| ].
    """
    t, p = _as_batches(truth, pred)
    denom = np.sum(np.abs(t), axis=0)
    bad = np.flatnonzero(denom == 0.0)
    if bad.size:
        raise DegenerateBatch(f"zero truth magnitude at point indices {bad.tolist()}")
    return float(np.mean(np.sum(np.abs(t - p), axis=0) / denom))


def mape_sum_over_batch(truth, pred) -> float:
    """Literal sum-of-ratios variant: (1/N_seq) sum_j sum_i |y-p|/|y|.

    Grows with the batch size; kept alongside wmape for comparison since
    the two only coincide for n_batch = 1.
    """
    t, p = _as_batches(truth, pred)
    bad = np.argwhere(t == 0.0)
    if bad.size:
        raise DegenerateBatch(f"zero truth value at (sequence, point) {bad.tolist()[:5]}")
    return float(np.mean(np.sum(np.abs(t - p) / np.abs(t), axis=0)))


def mae(truth, pred) -> float:
    """Mean absolute error over batch and sequence (GPa)."""
    t, p = _as_batches(truth, pred)
    return float(np.mean(np.abs(t - p)))


class MapeResult(NamedTuple):
    value: float
    excluded: tuple[int, ...]   # point indices below the truth-magnitude floor


def mape_per_sample(truth, pred, floor: float = 1e-12) -> MapeResult:
    """Plain MAPE of one sequence, excluding near-zero-truth points.

    Points with |y_j| < floor are dropped from the mean and reported, since
    percentage errors diverge where the loss modulus approaches zero.
    Raises DegeneratePoint if no points survive.
    """
    t = np.asarray(truth, dtype=np.float64).ravel()
    p = np.asarray(pred, dtype=np.float64).ravel()
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: truth {t.shape} vs pred {p.shape}")
    keep = np.abs(t) >= floor
    excluded = tuple(int(i) for i in np.flatnonzero(~keep))
    if not np.any(keep):
        raise DegeneratePoint(f"all {t.size} points below floor {floor}")
    value = float(np.mean(np.abs(t[keep] - p[keep]) / np.abs(t[keep])))
    return MapeResult(value=value, excluded=excluded)


def group_stats(values, groups) -> dict:
    """Mean and population std of values per group key (e.g. MAPE per
    volume fraction), for error-versus-fraction summaries."""
    out: dict = {}
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups)
    for key in sorted(set(groups.tolist())):
        member = values[groups == key]
        out[key] = {
            "mean": float(member.mean()),
            "std": float(member.std()),
            "count": int(member.size),
        }
    return out
