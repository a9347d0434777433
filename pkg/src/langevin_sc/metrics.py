"""Evaluation quantities: KL to the spike-and-slab prior, NL-MSE, recovery, activity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, UsageError
from .model import ModelParams, _arr

MAP_ZERO_TOL = 1e-8


@dataclass
class Histogram:
    """Binned coefficient samples.

    Slab bin ``n`` covers (n*width, (n+1)*width]; the last bin also pools
    everything beyond.  Exact zeros (up to ``zero_tol``) go to ``zero_atom``
    and negative values to ``negative``.
    """

    width: float
    counts: np.ndarray
    zero_atom: int
    negative: int = 0

    @property
    def total(self) -> int:
        return int(self.zero_atom + self.negative + self.counts.sum())

    @property
    def edges(self) -> np.ndarray:
        return self.width * np.arange(len(self.counts) + 1)


def slab_bin_count(lam: float, width: float, quantile: float = 0.999) -> int:
    """Bins needed to reach the ``quantile`` of Exponential(lam)."""
    return max(1, math.ceil(-math.log(1.0 - quantile) / lam / width))


def histogram(samples, width: float, n_bins: int, zero_tol: float = 0.0) -> Histogram:
    s = np.asarray(samples, dtype=np.float64).ravel()
    zero = np.abs(s) <= zero_tol
    neg = (s < 0) & ~zero
    pos = s[~zero & ~neg]
    idx = np.minimum(np.ceil(pos / width).astype(np.int64) - 1, n_bins - 1)
    idx = np.maximum(idx, 0)
    counts = np.bincount(idx, minlength=n_bins)
    return Histogram(width, counts, int(zero.sum()), int(neg.sum()))


def prior_cell_masses(pi: float, lam: float, width: float, n_bins: int) -> np.ndarray:
    """[zero atom, slab bins..., negative] masses of the spike-and-slab prior."""
    lo = width * np.arange(n_bins)
    upper = np.exp(-lam * lo)
    lower = np.append(np.exp(-lam * (lo[1:])), 0.0)
    return np.concatenate([[1.0 - pi], pi * (upper - lower), [0.0]])


def kl_histograms(p, q) -> float:
    """Discrete KL(p || q) in nats; cells with p == 0 contribute nothing."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError("histograms must have the same number of cells")
    m = p > 0
    if np.any(q[m] <= 0):
        return math.inf
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def kl_to_prior(samples, p: ModelParams, width: Optional[float] = None,
                pi: Optional[float] = None, zero_tol: float = 0.0,
                alpha: Optional[float] = None) -> float:
    """KL from the spike-and-slab prior to the empirical coefficient histogram.

    The prior is (pi, p.lam) with pi = exp(-lam * u0) unless given.  Bin
    width defaults to 0.1 / lam, the slab is truncated at its 99.9th
    percentile, and empirical frequencies are smoothed by ``alpha``
    (default 1 / number of samples) so the estimate stays finite.
    """
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise UsageError("empty sample reservoir")
    lam = p.lam
    pi = p.pi if pi is None else pi
    width = 0.1 / lam if width is None else width
    n_bins = slab_bin_count(lam, width)
    h = histogram(s, width, n_bins, zero_tol)
    counts = np.concatenate([[h.zero_atom], h.counts, [h.negative]]).astype(np.float64)
    alpha = 1.0 / s.size if alpha is None else alpha
    q = (counts / s.size + alpha) / (1.0 + alpha * counts.size)
    return kl_histograms(prior_cell_masses(pi, lam, width, n_bins), q)


def nl_mse(a, s, x) -> float:
    """-log of the per-dimension mean squared reconstruction error."""
    a, s, x = _arr(a), _arr(s), _arr(x)
    if a.shape[1] != s.shape[0] or a.shape[0] != x.shape[0] or s.shape[1] != x.shape[1]:
        raise DimensionError("incompatible shapes for reconstruction")
    r = a @ s - x
    eps = float(np.sum(r * r)) / (x.shape[0] * x.shape[1])
    return -math.log(max(eps, 1e-300))


@dataclass
class Recovery:
    mean_cosine: float
    assignment: np.ndarray
    cosines: np.ndarray


def _unit_columns(a):
    a = np.asarray(_arr(a), dtype=np.float64)
    n = np.linalg.norm(a, axis=0)
    return a / np.where(n > 0, n, 1.0)


def dictionary_recovery(learned, truth) -> Recovery:
    """Greedy max-|cosine| matching of truth columns to learned columns.

    ``assignment[i]`` is the learned column matched to truth column ``i``.
    """
    lu, tu = _unit_columns(learned), _unit_columns(truth)
    if lu.shape[0] != tu.shape[0]:
        raise DimensionError("dictionaries have different data dimension")
    if tu.shape[1] > lu.shape[1]:
        raise DimensionError("truth has more columns than the learned dictionary")
    c = np.abs(tu.T @ lu)
    work = c.copy()
    kt = tu.shape[1]
    assignment = np.full(kt, -1, dtype=np.int64)
    matched = np.zeros(kt)
    for _ in range(kt):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        assignment[i] = j
        matched[i] = c[i, j]
        work[i, :] = -1.0
        work[:, j] = -1.0
    return Recovery(float(matched.mean()), assignment, matched)


def activity_estimate(samples, zero_tol: float = 0.0) -> float:
    """Fraction of coefficients with magnitude above ``zero_tol``."""
    s = np.asarray(samples).ravel()
    if s.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(s) > zero_tol)) / s.size


def column_norms(a) -> np.ndarray:
    return np.linalg.norm(_arr(a), axis=0)


def duplicate_pairs(a, threshold: float = 0.95, min_norm: float = 0.0):
    """Column pairs (i, j), i < j, with |cosine| above ``threshold``.

    Columns with norm at most ``min_norm`` are ignored.
    """
    a = _arr(a)
    keep = np.flatnonzero(column_norms(a) > min_norm)
    u = _unit_columns(a[:, keep])
    c = np.abs(u.T @ u)
    ii, jj = np.nonzero(np.triu(c > threshold, k=1))
    return [(int(keep[i]), int(keep[j])) for i, j in zip(ii, jj)]


def percentile_spread(values, lo: float = 10, hi: float = 90):
    v = np.asarray(values, dtype=np.float64)
    return float(np.percentile(v, lo)), float(np.percentile(v, hi))


def log_norm_slope(times, norms) -> float:
    """Least-squares slope of the mean log column norm against time."""
    t = np.asarray(times, dtype=np.float64)
    y = np.log(np.asarray(norms, dtype=np.float64)).mean(axis=1)
    if t.size < 2:
        return 0.0
    return float(np.polyfit(t, y, 1)[0])
