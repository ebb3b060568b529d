"""Select-small masking and the kept-energy penalty.

Given a non-negative vector (squared embedding components or squared
interaction components), the entries are ranked ascending, the longest
prefix whose cumulative sum stays within a threshold is dropped, and only
the surviving (large) components are penalized.  The dropped energy is
bounded by the threshold, so sparsification perturbs the total by at most
that much.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ABSOLUTE = "absolute"
RELATIVE = "relative"


@dataclass(frozen=True)
class ThresholdMode:
    """Energy budget for dropped components.

    ``absolute`` uses the value as-is; ``relative`` interprets it as a
    fraction of the vector's total, so the budget scales with the vector.
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in (ABSOLUTE, RELATIVE):
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if not np.isfinite(self.value):
            raise ValueError("threshold value must be finite")
        if self.kind == ABSOLUTE and self.value < 0:
            raise ValueError("absolute threshold must be >= 0")
        if self.kind == RELATIVE and not 0.0 <= self.value <= 1.0:
            raise ValueError("relative fraction must lie in [0, 1]")

    @classmethod
    def absolute(cls, delta: float) -> "ThresholdMode":
        return cls(ABSOLUTE, float(delta))

    @classmethod
    def relative(cls, fraction: float) -> "ThresholdMode":
        return cls(RELATIVE, float(fraction))

    def effective(self, total):
        """Effective threshold for a vector (or per-row totals) summing to ``total``."""
        if self.kind == ABSOLUTE:
            return self.value if np.isscalar(total) else np.full_like(total, self.value)
        return self.value * total


@dataclass
class SparseMask:
    """Binary drop mask for one non-negative vector.

    ``mask[d] == 1`` marks a dropped entry.  ``cutoff_s`` is the number of
    dropped entries, ``dropped_sum`` their total (bounded by the effective
    threshold), and ``kept_sum`` the surviving total.
    """

    mask: np.ndarray
    cutoff_s: int
    dropped_sum: float
    kept_sum: float

    def __post_init__(self):
        if self.cutoff_s != int(self.mask.sum()):
            raise ValueError("cutoff_s does not match the number of set mask bits")


def _check_input(x: np.ndarray, allow_negative: bool = False) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains a non-finite entry")
    if not allow_negative and x.size and x.min() < 0:
        raise ValueError("input contains a negative entry")
    return x


def keep_weights(x: np.ndarray, threshold: ThresholdMode):
    """Vectorized select-small over the rows of a (B, D) array.

    Returns ``(keep, dropped_sum, kept_sum, cutoff)`` where ``keep`` is the
    float matrix ``1 - mask``.  Row semantics are identical to
    :func:`select_small`: entries sorted ascending (ties by original index),
    the longest prefix with cumulative sum <= the row's effective threshold
    is dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains a non-finite entry")
    n, d = x.shape
    totals = np.sum(x, axis=1)
    delta_eff = np.asarray(threshold.effective(totals), dtype=np.float64)

    order = np.argsort(x, axis=1, kind="stable")
    csum = np.cumsum(np.take_along_axis(x, order, axis=1), axis=1)
    cutoff = np.sum(csum <= delta_eff[:, None], axis=1)
    # A threshold covering the whole vector drops everything, independent of
    # prefix-sum rounding; likewise a full prefix leaves nothing kept.
    cutoff = np.where(delta_eff >= totals, d, cutoff)

    keep = np.ones_like(x)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(d), (n, d)).copy(), axis=1)
    keep[ranks < cutoff[:, None]] = 0.0

    full = cutoff == d
    partial = (cutoff > 0) & ~full
    dropped = np.zeros(n)
    dropped[full] = totals[full]
    dropped[partial] = csum[partial, cutoff[partial] - 1]
    kept = totals - dropped
    return keep, dropped, kept, cutoff


def select_small(x: np.ndarray, threshold: ThresholdMode) -> SparseMask:
    """Mask the ascending-ranked prefix of ``x`` whose sum fits the threshold.

    ``x`` must be non-negative and finite (callers supply squared
    quantities).  Ties are broken by ascending original index, so masks are
    reproducible and monotone in the threshold.
    """
    x = _check_input(x)
    keep, dropped, kept, cutoff = keep_weights(x[None, :], threshold)
    mask = (1.0 - keep[0]).astype(np.uint8)
    return SparseMask(mask=mask, cutoff_s=int(cutoff[0]),
                      dropped_sum=float(dropped[0]), kept_sum=float(kept[0]))


def sparsify(x: np.ndarray, mask: SparseMask) -> np.ndarray:
    """Zero the masked entries: ``x * (1 - mask)``."""
    x = _check_input(x)
    if mask.mask.shape != x.shape:
        raise ValueError(f"mask length {mask.mask.shape} does not match vector {x.shape}")
    return x * (1.0 - mask.mask)


def sparse_penalty(e: np.ndarray, threshold: ThresholdMode):
    """Kept squared energy of ``e`` and its fixed-mask gradient.

    The mask is selected on ``e**2`` and then treated as constant, so the
    gradient is ``2 * e`` on kept coordinates and 0 on dropped ones.
    Returns ``(value, grad)``.
    """
    e = _check_input(e, allow_negative=True)
    keep, _, kept, _ = keep_weights((e * e)[None, :], threshold)
    return float(kept[0]), 2.0 * e * keep[0]
