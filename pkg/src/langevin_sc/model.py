"""Generative model, energies, threshold nonlinearities and analytic gradients.

Matrix conventions: the dictionary ``A`` is D x K, coefficients ``S`` and
auxiliary variables ``U`` are K x N, data ``X`` is D x N.  All energies are
summed over the batch; parameter gradients that feed learning rules are
batch means.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericalError


@dataclass(frozen=True)
class ModelParams:
    """Scalar model and dynamics parameters.

    ``tau_sigma`` and ``tau_lambda`` default to ``tau_a`` when left as None.
    """

    sigma: float = 0.5
    lam: float = 1.0
    u0: float = 0.0
    temperature: float = 1.0
    tau_s: float = 1.0
    tau_a: float = 100.0
    tau_u0: float = 100.0
    tau_x: float = 10.0
    dt: float = 0.01
    tau_sigma: Optional[float] = None
    tau_lambda: Optional[float] = None

    def __post_init__(self):
        for name in ("sigma", "lam", "u0", "temperature", "tau_s", "tau_a",
                     "tau_u0", "tau_x", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if self.sigma <= 0:
            raise ConfigurationError("sigma must be > 0")
        # lam == 0 is allowed for L1 energies (pure quadratic test problems);
        # the spike-and-slab prior itself requires lam > 0.
        if self.lam < 0:
            raise ConfigurationError("lam must be >= 0")
        if self.u0 < 0:
            raise ConfigurationError("u0 must be >= 0")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if min(self.tau_s, self.tau_a, self.tau_u0, self.tau_x) <= 0:
            raise ConfigurationError("time constants must be > 0")
        if not 0 < self.dt < self.tau_s:
            raise ConfigurationError("dt must satisfy 0 < dt < tau_s")
        if self.tau_a < self.tau_s:
            warnings.warn("tau_a < tau_s violates the two-timescale assumption",
                          RuntimeWarning, stacklevel=3)

    @property
    def pi(self) -> float:
        """Activation probability implied by the threshold, exp(-lam * u0)."""
        return math.exp(-self.lam * self.u0)

    @property
    def tau_sigma_eff(self) -> float:
        return self.tau_a if self.tau_sigma is None else self.tau_sigma

    @property
    def tau_lambda_eff(self) -> float:
        return self.tau_a if self.tau_lambda is None else self.tau_lambda

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)


@dataclass
class Dictionary:
    """D x K dictionary with column-norm bookkeeping."""

    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        if self.a.ndim != 2 or min(self.a.shape) < 1:
            raise DimensionError(f"dictionary must be a non-empty 2-d array, got shape {self.a.shape}")
        if not np.isfinite(self.a).all():
            raise NumericalError("dictionary has non-finite entries", tensor="A")

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def k(self) -> int:
        return self.a.shape[1]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.a, axis=0)

    def normalize(self) -> "Dictionary":
        """Rescale every column to unit Euclidean norm, in place."""
        self.a = normalize_columns(self.a)
        return self

    def copy(self) -> "Dictionary":
        return Dictionary(self.a.copy())


@dataclass
class LatentState:
    """Latent variables for a batch.

    ``u`` holds the pre-threshold auxiliary variables (L0 solvers, LCA and
    L1-LSC); it is None for DSC/SSC where ``s`` is the free variable.
    """

    u: Optional[np.ndarray]
    s: np.ndarray

    def copy(self) -> "LatentState":
        return LatentState(None if self.u is None else self.u.copy(), self.s.copy())


@dataclass
class Batch:
    """Data batch (D x N) with optional generator metadata."""

    x: np.ndarray
    ground_truth_s: Optional[np.ndarray] = None
    generator: Any = None
    dictionary: Optional[Dictionary] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise DimensionError("batch data must be 2-d (D x N)")

    @property
    def n(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class EnergyBreakdown:
    recon: float
    sparsity: float
    total: float


def _arr(obj) -> np.ndarray:
    if isinstance(obj, Dictionary):
        return obj.a
    if isinstance(obj, Batch):
        return obj.x
    return np.asarray(obj, dtype=np.float64)


def _check(a, s, x):
    a, s, x = _arr(a), _arr(s), _arr(x)
    if a.ndim != 2 or s.ndim != 2 or x.ndim != 2:
        raise DimensionError("A, S and X must all be 2-d")
    d, k = a.shape
    if s.shape[0] != k or x.shape[0] != d or s.shape[1] != x.shape[1]:
        raise DimensionError(
            f"incompatible shapes A{a.shape}, S{s.shape}, X{x.shape}")
    for name, m in (("A", a), ("S", s), ("X", x)):
        if not np.isfinite(m).all():
            raise NumericalError(f"{name} has non-finite entries", tensor=name)
    return a, s, x


def normalize_columns(a: np.ndarray) -> np.ndarray:
    """Return ``a`` with unit-norm columns; zero columns are left at zero."""
    norms = np.linalg.norm(a, axis=0)
    return a / np.where(norms > 0, norms, 1.0)


def threshold_f(u, u0: float):
    """Biased ReLU on magnitudes: 0 where |u| < u0, |u| - u0 otherwise."""
    return np.maximum(np.abs(u) - u0, 0.0)


def threshold_g_lca(u, lam: float):
    """Signed soft threshold used by LCA: sign(u) * max(|u| - lam, 0)."""
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def heaviside(z):
    """Step function with the convention H(0) = 1."""
    return (np.asarray(z) >= 0).astype(np.float64)


def energy_l1(a, s, x, p: ModelParams) -> EnergyBreakdown:
    a, s, x = _check(a, s, x)
    r = x - a @ s
    recon = float(np.sum(r * r)) / (2.0 * p.sigma ** 2)
    sparsity = p.lam * float(np.sum(np.abs(s)))
    return EnergyBreakdown(recon, sparsity, recon + sparsity)


def energy_l0(a, u, x, p: ModelParams) -> EnergyBreakdown:
    """Energy in terms of auxiliary variables: s = f(|u|), sparsity on |u|."""
    a, u, x = _check(a, u, x)
    r = x - a @ threshold_f(u, p.u0)
    recon = float(np.sum(r * r)) / (2.0 * p.sigma ** 2)
    sparsity = p.lam * float(np.sum(np.abs(u)))
    return EnergyBreakdown(recon, sparsity, recon + sparsity)


def grad_s_l1(a, s, x, p: ModelParams) -> np.ndarray:
    """Gradient of :func:`energy_l1` with respect to S (sign(0) = 0)."""
    return _grad_s_l1(*_check(a, s, x), p)


def grad_u_l0(a, u, x, p: ModelParams) -> np.ndarray:
    """Exact gradient of :func:`energy_l0` with respect to U.

    The reconstruction term only acts on units at or above threshold and
    carries the sign(u) factor from differentiating |u|.
    """
    return _l0_parts(*_check(a, u, x), p)[0]


def grad_a(a, s, x, p: ModelParams) -> np.ndarray:
    """Gradient of the batch energy with respect to A, summed over the batch."""
    a, s, x = _check(a, s, x)
    return (a @ s - x) @ s.T / p.sigma ** 2


def grad_u0(a, s, x, p: ModelParams) -> float:
    """Batch mean of -dE/du0, the ascent direction for the threshold."""
    a, s, x = _check(a, s, x)
    return _grad_u0(a.T @ (a @ s - x) / p.sigma ** 2, s)


# Unchecked kernels shared with the integrators.  Keeping a single
# expression for each quantity makes engine steps bit-identical to the
# public step functions.

def _l1_parts(a, s, x, p):
    """(grad_s, residual A s - x, feedback A^T residual / sigma^2)."""
    r = a @ s - x
    feedback = a.T @ r / p.sigma ** 2
    return feedback + p.lam * np.sign(s), r, feedback


def _grad_s_l1(a, s, x, p):
    return _l1_parts(a, s, x, p)[0]


def _l0_parts(a, u, x, p):
    """(grad_u, s, residual A s - x, feedback A^T residual / sigma^2)."""
    s = threshold_f(u, p.u0)
    r = a @ s - x
    feedback = a.T @ r / p.sigma ** 2
    sgn = np.sign(u)
    grad = sgn * heaviside(np.abs(u) - p.u0) * feedback + p.lam * sgn
    return grad, s, r, feedback


def _grad_u0(feedback, s):
    return float(np.sum(feedback * (s > 0))) / s.shape[1]


def grad_sigma(a, s, x, p: ModelParams) -> float:
    """Per-dimension mean squared residual minus sigma^2.

    Proportional to the log-likelihood gradient in sigma; the exact
    derivative of the per-sample log joint is ``D / sigma**3`` times this.
    """
    a, s, x = _check(a, s, x)
    r = x - a @ s
    return float(np.sum(r * r)) / (a.shape[0] * s.shape[1]) - p.sigma ** 2


def expected_cost_under_prior(p: ModelParams, prior: str = "laplace") -> float:
    """Closed-form prior mean of C(s) = |s|.

    Both the Laplacian prior on s and the exponential prior on the L0
    auxiliary variables have mean magnitude 1/lam.
    """
    if prior not in ("laplace", "exponential"):
        raise ConfigurationError(f"no closed-form expectation for prior {prior!r}")
    if p.lam <= 0:
        raise ConfigurationError("prior expectation requires lam > 0")
    return 1.0 / p.lam


def grad_lambda_l1(s, p: ModelParams, prior: str = "laplace") -> float:
    """Posterior mean cost per unit minus its prior expectation.

    Positive values mean the coefficients are larger than the prior
    expects, so ``lam`` should decrease: learning steps move against this.
    For the L0 model pass the magnitudes |u| of the auxiliary variables.
    """
    s = _arr(s)
    if s.ndim != 2:
        raise DimensionError("coefficients must be K x N")
    cost = float(np.sum(np.abs(s))) / s.size
    return cost - expected_cost_under_prior(p, prior)


def prior_l0_pdf_components(p: ModelParams) -> tuple[float, float]:
    """(pi, rate) of the spike-and-slab prior induced by threshold u0."""
    return math.exp(-p.lam * p.u0), p.lam


def u0_from_pi(pi: float, lam: float) -> float:
    """Inverse of pi = exp(-lam * u0)."""
    if not 0 < pi <= 1:
        raise ConfigurationError("pi must lie in (0, 1]")
    if lam <= 0:
        raise ConfigurationError("lam must be > 0")
    return -math.log(pi) / lam


def neg_log_joint_l1(a, s, x, p: ModelParams) -> float:
    """Normalised -log p(X, S | A, sigma, lam) under the Laplacian prior.

    Unlike :func:`energy_l1` this keeps the sigma- and lam-dependent
    normalisers, so its derivatives in sigma and lam are the likelihood
    gradients that :func:`grad_sigma` and :func:`grad_lambda_l1` track.
    """
    a, s, x = _check(a, s, x)
    d, n = x.shape
    k = s.shape[0]
    e = energy_l1(a, s, x, p).total
    return (e + n * d * math.log(p.sigma * math.sqrt(2 * math.pi))
            - n * k * math.log(p.lam / 2.0))
