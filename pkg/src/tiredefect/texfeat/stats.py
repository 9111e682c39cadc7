"""Six-number statistical summary shared by every feature family."""

from __future__ import annotations

import numpy as np

STAT_NAMES = ("mean", "median", "min", "max", "std", "energy")


def stats_summary(values: np.ndarray) -> np.ndarray:
    """Summarize along the last axis: mean, median, min, max, std, energy.

    ``std`` uses the population convention and ``energy`` is the sum of
    squares. Leading axes are kept, so a ``(n, k)`` batch gives ``(n, 6)``.
    """
    v = np.ascontiguousarray(values, dtype=np.float64)
    lo, hi = v.min(axis=-1), v.max(axis=-1)
    return np.stack(
        [
            # rounding can push the mean of a near-constant sequence one ulp outside
            np.clip(v.mean(axis=-1), lo, hi),
            np.median(v, axis=-1),
            lo,
            hi,
            v.std(axis=-1),
            np.square(v).sum(axis=-1),
        ],
        axis=-1,
    )
