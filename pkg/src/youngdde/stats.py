"""Batch-means confidence intervals and least-squares slopes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

MIN_BATCHES = 20


@dataclass(frozen=True)
class ErgodicEstimate:
    """A Monte Carlo or time-average estimate with a 95% half-width."""

    name: str
    value: float
    ci: float
    samples: int
    batches: int = 0

    def as_dict(self):
        return {"name": self.name, "value": self.value, "ci": self.ci,
                "samples": self.samples, "batches": self.batches}


def batch_means(samples, level: float = 0.95):
    """Mean, CI half-width and batch count of a 1-d sample sequence.

    The series is cut into ``max(20, floor(sqrt(n)))`` contiguous batches of
    nearly equal size.  With fewer than 20 samples the half-width is ``inf``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    mean = float(np.mean(x))
    if n < MIN_BATCHES:
        return mean, float("inf"), 0
    nb = max(MIN_BATCHES, int(np.sqrt(n)))
    bm = np.array([b.mean() for b in np.array_split(x, nb)])
    se = float(np.std(bm, ddof=1) / np.sqrt(nb))
    q = float(_st.t.ppf(0.5 + level / 2, nb - 1))
    return mean, q * se, nb


def estimate(name, samples, level: float = 0.95) -> ErgodicEstimate:
    mean, ci, nb = batch_means(samples, level)
    return ErgodicEstimate(name, mean, ci, int(np.size(samples)), nb)


def ls_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        return 0.0
    xc = x - x.mean()
    return float((xc * (y - y.mean())).sum() / (xc * xc).sum())
