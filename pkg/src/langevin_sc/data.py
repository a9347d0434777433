"""Synthetic bars data, spike-and-slab sampling, patch ingestion and ZCA whitening."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import noise
from .errors import ConfigurationError, DimensionError, NumericalError, UsageError
from .model import Batch, Dictionary


@dataclass(frozen=True)
class BarsSpec:
    """Bars dataset: 2p unit-norm vertical/horizontal bars on a p x p grid."""

    p: int = 8
    pi: float = 0.3
    lam: float = 1.0
    sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise ConfigurationError("bars grid side p must be an integer >= 2")
        if not 0 < self.pi <= 1:
            raise ConfigurationError("pi must lie in (0, 1]")
        if self.lam <= 0:
            raise ConfigurationError("lambda must be > 0")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")

    @property
    def d(self) -> int:
        return self.p * self.p

    @property
    def k(self) -> int:
        return 2 * self.p


def bars_dictionary(p: int) -> Dictionary:
    """Vertical bars first (column j of the grid), then horizontal bars.

    Pixels are flattened row-major and every bar has value 1/sqrt(p).
    """
    a = np.zeros((p * p, 2 * p))
    v = 1.0 / np.sqrt(p)
    for j in range(p):
        img = np.zeros((p, p))
        img[:, j] = v
        a[:, j] = img.ravel()
        img = np.zeros((p, p))
        img[j, :] = v
        a[:, p + j] = img.ravel()
    return Dictionary(a)


def bars_gram(p: int) -> np.ndarray:
    """Closed-form Gram matrix of :func:`bars_dictionary`.

    Bars of the same orientation are disjoint; a vertical and a horizontal
    bar share one pixel, contributing 1/p.
    """
    g = np.zeros((2 * p, 2 * p))
    g[:p, p:] = 1.0 / p
    g[p:, :p] = 1.0 / p
    g[np.diag_indices(2 * p)] = 1.0
    return g


def sample_spike_slab(k: int, n: int, pi: float, lam: float,
                      seed: Union[int, np.random.Generator, None] = None) -> np.ndarray:
    """K x N matrix: zero with probability 1 - pi, else Exponential(lam)."""
    if not 0 <= pi <= 1:
        raise ConfigurationError("pi must lie in [0, 1]")
    if lam <= 0:
        raise ConfigurationError("lambda must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    active = rng.random((k, n)) < pi
    values = rng.exponential(1.0 / lam, size=(k, n))
    return np.where(active, values, 0.0)


def generate_bars(spec: BarsSpec, n: int, index: int = 0) -> Batch:
    """Draw ``n`` samples X = A_bars S + sigma Z.

    ``index`` selects an independent batch from the same seed, which is how
    training streams address fresh data deterministically.
    """
    if n < 0:
        raise UsageError("n must be >= 0")
    rng = noise.rng_for(spec.seed, noise.DATA, index)
    truth = bars_dictionary(spec.p)
    s = sample_spike_slab(spec.k, n, spec.pi, spec.lam, rng)
    x = truth.a @ s
    if spec.sigma > 0:
        x = x + spec.sigma * rng.standard_normal(x.shape)
    return Batch(x, ground_truth_s=s, generator=spec, dictionary=truth)


def bars_pixel_variance(spec: BarsSpec) -> np.ndarray:
    """Closed-form per-pixel variance of generated bars data."""
    var_s = 2.0 * spec.pi / spec.lam ** 2 - (spec.pi / spec.lam) ** 2
    a = bars_dictionary(spec.p).a
    return spec.sigma ** 2 + (a * a).sum(axis=1) * var_s


class BarsSource:
    """Infinite stream of fresh bars batches addressed by batch index."""

    def __init__(self, spec: BarsSpec, batch_size: int):
        self.spec = spec
        self.batch_size = int(batch_size)
        self.truth = bars_dictionary(spec.p)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def k_ref(self) -> int:
        """Size of a complete dictionary for this source (number of bars)."""
        return self.spec.k

    def batch(self, index: int) -> Batch:
        return generate_bars(self.spec, self.batch_size, index)

    def holdout(self, index: int) -> Batch:
        # offset keeps held-out batches disjoint from the training stream
        return generate_bars(self.spec, self.batch_size, (1 << 62) + index)


class ArraySource:
    """Batches drawn without replacement from a fixed N x D sample array."""

    def __init__(self, samples: np.ndarray, batch_size: int, seed: int = 0,
                 truth: Optional[Dictionary] = None):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise DimensionError("samples must be a non-empty N x D array")
        self.samples = samples
        self.batch_size = int(batch_size)
        self.seed = int(seed)
        self.truth = truth

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def k_ref(self) -> int:
        return self.truth.k if self.truth is not None else self.d

    def _draw(self, stream, index):
        rng = noise.rng_for(self.seed, stream, index)
        n = self.samples.shape[0]
        idx = rng.choice(n, size=self.batch_size, replace=self.batch_size > n)
        return Batch(self.samples[idx].T.copy(), dictionary=self.truth)

    def batch(self, index: int) -> Batch:
        return self._draw(noise.DATA, index)

    def holdout(self, index: int) -> Batch:
        return self._draw(noise.HOLDOUT, index)


@dataclass
class ZCATransform:
    """Affine whitening map ``(x - mean) @ matrix`` on N x D rows."""

    mean: np.ndarray
    matrix: np.ndarray
    eps: float

    def apply(self, patches: np.ndarray) -> np.ndarray:
        return (np.asarray(patches, dtype=np.float64) - self.mean) @ self.matrix


def whiten_zca(patches: np.ndarray, eps: Optional[float] = None):
    """ZCA-whiten N x D patches.

    Covariance uses the 1/N normalisation.  ``eps`` is added to every
    eigenvalue before the inverse square root; the default is 1% of the
    mean eigenvalue.

    Returns:
        (whitened patches, ZCATransform)
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2:
        raise DimensionError("patches must be N x D")
    n, d = patches.shape
    if n < d:
        raise UsageError(f"insufficient patches for covariance estimate (N={n} < D={d})")
    if not np.isfinite(patches).all():
        raise NumericalError("patches contain non-finite values", tensor="patches")
    mean = patches.mean(axis=0)
    centered = patches - mean
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals, 0.0, None)
    if eps is None:
        eps = 1e-2 * float(evals.mean())
    if eps < 0:
        raise ConfigurationError("eps must be >= 0")
    denom = evals + eps
    # rank-deficient data with eps == 0: leave null directions at zero
    scale = np.where(denom > 0, 1.0 / np.sqrt(np.where(denom > 0, denom, 1.0)), 0.0)
    w = (evecs * scale) @ evecs.T
    t = ZCATransform(mean, w, float(eps))
    return centered @ w, t


@dataclass(frozen=True)
class PatchSource:
    path: Path
    whitening: str = "none"
    eps: Optional[float] = None


def load_patches(source: PatchSource) -> Batch:
    """Read an N x D tensor file and return it as a D x N batch."""
    from .io import read_tensor

    patches = read_tensor(source.path)
    if patches.ndim != 2:
        raise DimensionError("patch file must hold a 2-d N x D tensor")
    patches = patches.astype(np.float64)
    meta = {"path": str(source.path), "whitening": source.whitening}
    if source.whitening == "zca":
        patches, t = whiten_zca(patches, source.eps)
        meta["zca"] = t
    elif source.whitening != "none":
        raise ConfigurationError(f"unknown whitening {source.whitening!r}")
    return Batch(patches.T.copy(), meta=meta)
