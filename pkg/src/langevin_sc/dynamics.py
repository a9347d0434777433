"""Time integration for the five solvers.

Deterministic flows use explicit Euler, Langevin flows Euler-Maruyama with
per-step noise variance ``2 T dt / tau_s``.  DSC and LCA run as nested
loops (inference to convergence, then one dictionary step); SSC and the
LSC variants advance latents and parameters together on one clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import noise as _noise
from .errors import ConfigurationError, NumericalError, UsageError
from .model import (Dictionary, EnergyBreakdown, LatentState, ModelParams, _arr,
                    _check, _grad_u0, _l0_parts, _l1_parts, energy_l0, energy_l1,
                    normalize_columns, threshold_f, threshold_g_lca)
from .noise import NoiseSource


class SolverKind(str, Enum):
    DSC = "dsc"
    LCA = "lca"
    SSC = "ssc"
    LSC_L1 = "lsc"
    LSC_L0 = "l0lsc"

    @property
    def nested(self) -> bool:
        return self in (SolverKind.DSC, SolverKind.LCA)

    @property
    def sampler(self) -> bool:
        return self in (SolverKind.LSC_L1, SolverKind.LSC_L0)

    @property
    def l0(self) -> bool:
        return self is SolverKind.LSC_L0


@dataclass(frozen=True)
class LearnFlags:
    a: bool = True
    u0: bool = False
    sigma: bool = False
    lam: bool = False


@dataclass
class StepReport:
    t: float
    energy: EnergyBreakdown
    latent_update_norm: float
    dictionary_update_norm: float


def steps_for(duration: float, dt: float) -> int:
    """Number of dt steps spanning ``duration``; it must be a multiple of dt."""
    n = round(duration / dt)
    if abs(n * dt - duration) > 1e-9 * max(1.0, abs(duration)):
        raise ConfigurationError(f"duration {duration} is not a multiple of dt={dt}")
    return int(n)


def init_dictionary(d: int, k: int, seed: int) -> Dictionary:
    """i.i.d. N(0, 1/D) entries, then unit-normalised columns."""
    rng = _noise.rng_for(seed, _noise.DICT_INIT)
    return Dictionary(rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, k))).normalize()


def init_latents(kind: SolverKind, k: int, n: int, p: ModelParams,
                 seed: int = 0, index: int = 0) -> LatentState:
    """Fresh latents for batch ``index``: U ~ N(0, 1) for samplers, zeros otherwise."""
    kind = SolverKind(kind)
    if kind.sampler:
        u = _noise.rng_for(seed, _noise.INIT, index).standard_normal((k, n))
        s = threshold_f(u, p.u0) if kind.l0 else u
        return LatentState(u, s)
    if kind is SolverKind.LCA:
        return LatentState(np.zeros((k, n)), np.zeros((k, n)))
    return LatentState(None, np.zeros((k, n)))


ZERO_RULES = ("sign", "sliding")


def _ode_step(state, a, x, p, kind, zero_rule="sign"):
    rate = p.dt / p.tau_s
    if kind is SolverKind.LCA:
        u = state.u
        s = threshold_g_lca(u, p.lam)
        du = a.T @ (x - a @ s) / p.sigma ** 2 - (u - s)
        u = u + rate * du
        return LatentState(u, threshold_g_lca(u, p.lam))
    s = state.s
    grad, _, feedback = _l1_parts(a, s, x, p)
    if zero_rule == "sign":
        return LatentState(None, s - rate * grad)
    # minimum-norm subgradient at s == 0, and stop exactly at zero crossings
    at_zero = s == 0
    rest = np.sign(feedback) * np.maximum(np.abs(feedback) - p.lam, 0.0)
    new = s - rate * np.where(at_zero, rest, grad)
    return LatentState(None, np.where(~at_zero & (new * s < 0), 0.0, new))


def step_latents_ode(state: LatentState, a, x, p: ModelParams, kind,
                     zero_rule: str = "sign") -> LatentState:
    """One Euler step of the MAP latent dynamics for DSC, SSC or LCA.

    ``zero_rule`` controls the L1 kink for DSC/SSC: ``"sign"`` uses
    sign(0) = 0 verbatim; ``"sliding"`` uses the minimum-norm subgradient
    at exact zeros and clamps coefficients that would cross zero, so
    inactive units sit at exactly 0 instead of chattering around it.
    """
    kind = SolverKind(kind)
    if zero_rule not in ZERO_RULES:
        raise ConfigurationError(f"unknown zero rule {zero_rule!r}")
    if kind not in (SolverKind.DSC, SolverKind.SSC, SolverKind.LCA):
        raise UsageError(f"step_latents_ode does not handle solver {kind.value!r}")
    if kind is SolverKind.LCA and state.u is None:
        raise UsageError("LCA needs the internal variable u")
    a, _, x = _check(a, state.u if kind is SolverKind.LCA else state.s, x)
    return _ode_step(state, a, x, p, kind, zero_rule)


def step_latents_langevin(state: LatentState, a, x, p: ModelParams,
                          noise: NoiseSource, step: int,
                          kind=SolverKind.LSC_L0) -> LatentState:
    """One Euler-Maruyama step of the Langevin latent dynamics.

    For L0-LSC ``u`` is the auxiliary variable and ``s = f(|u|)``; for
    L1-LSC ``u`` is the coefficient itself.  With ``temperature == 0`` no
    noise is drawn and the step is exactly the SSC gradient step.
    """
    kind = SolverKind(kind)
    if not kind.sampler:
        raise UsageError(f"{kind.value!r} is not a Langevin solver")
    u = state.s if state.u is None else state.u
    a, u, x = _check(a, u, x)
    rate = p.dt / p.tau_s
    grad = _l0_parts(a, u, x, p)[0] if kind.l0 else _l1_parts(a, u, x, p)[0]
    u = u - rate * grad
    if p.temperature > 0:
        u = u + math.sqrt(2.0 * p.temperature * rate) * noise.normal(step, u.shape)
    return LatentState(u, threshold_f(u, p.u0) if kind.l0 else u)


def _dict_step(a, r, s, p, rate):
    return a - rate * (r @ s.T / p.sigma ** 2) / s.shape[1]


def step_dictionary(a, state: LatentState, x, p: ModelParams,
                    rate: Optional[float] = None) -> Dictionary:
    """A <- A - rate (A S - X) S^T / (N sigma^2), rate defaulting to dt / tau_a."""
    a, s, x = _check(a, state.s, x)
    if rate is None:
        rate = p.dt / p.tau_a
    return Dictionary(_dict_step(a, a @ s - x, s, p, rate))


def _finite(name, arr, step):
    if not math.isfinite(float(np.sum(arr))) and not np.isfinite(arr).all():
        raise NumericalError(f"non-finite values in {name} at step {step}",
                             tensor=name, step=step)


def _normalized(a, step):
    # an overflowing column norm would silently turn the column into zeros
    if not np.isfinite(np.linalg.norm(a, axis=0)).all():
        raise NumericalError(f"dictionary column norm overflowed at step {step}",
                             tensor="A", step=step)
    return normalize_columns(a)


class NestedEngine:
    """DSC / LCA: per outer iteration draw a batch, run ``n_s`` inner latent
    steps from zero, then one dictionary step and (optionally) normalise."""

    def __init__(self, source, params: ModelParams, kind=SolverKind.DSC, *,
                 n_s: int = 300, eta_a: float = 0.1, seed: int = 0,
                 a0=None, k: Optional[int] = None, normalize: bool = True,
                 learn_a: bool = True, zero_rule: str = "sliding"):
        self.kind = SolverKind(kind)
        if not self.kind.nested:
            raise UsageError(f"{self.kind.value!r} is not a nested-loop solver")
        if n_s < 1:
            raise ConfigurationError("n_s must be >= 1")
        self.source = source
        self.params = params
        self.n_s = int(n_s)
        self.eta_a = float(eta_a)
        self.seed = int(seed)
        self.normalize = normalize
        self.learn_a = learn_a
        if zero_rule not in ZERO_RULES:
            raise ConfigurationError(f"unknown zero rule {zero_rule!r}")
        self.zero_rule = zero_rule
        if a0 is None:
            a0 = init_dictionary(source.d, k if k is not None else source.k_ref, seed)
        self.a = _arr(a0).copy()
        self.iteration = 0
        self.state: Optional[LatentState] = None
        self.x: Optional[np.ndarray] = None

    @property
    def t(self) -> float:
        return self.iteration * self.n_s * self.params.dt

    def infer(self, x) -> tuple[LatentState, float]:
        """MAP inference on ``x`` with the current dictionary.

        Returns the final state and the norm of the last latent update,
        which indicates how far the inner loop is from convergence.
        """
        x = _arr(x)
        k, n = self.a.shape[1], x.shape[1]
        state = init_latents(self.kind, k, n, self.params)
        step = lambda st: _ode_step(st, self.a, x, self.params, self.kind, self.zero_rule)
        for _ in range(self.n_s - 1):
            state = step(state)
        new = step(state)
        return new, float(np.linalg.norm(new.s - state.s))

    def outer_step(self, s=None) -> StepReport:
        """One outer iteration; pass ``s`` to skip inference and use fixed latents."""
        x = self.source.batch(self.iteration).x
        if s is None:
            state, delta = self.infer(x)
        else:
            state, delta = LatentState(None, _arr(s)), 0.0
        p = self.params
        r = self.a @ state.s - x
        energy = energy_l1(self.a, state.s, x, p)
        a_old = self.a
        if self.learn_a:
            self.a = _dict_step(self.a, r, state.s, p, self.eta_a)
            _finite("A", self.a, self.iteration + 1)
            if self.normalize:
                self.a = _normalized(self.a, self.iteration + 1)
        self.iteration += 1
        _finite("A", self.a, self.iteration)
        self.state, self.x = state, x
        return StepReport(self.t, energy, delta, float(np.linalg.norm(self.a - a_old)))


class SimultaneousEngine:
    """SSC, L1-LSC and L0-LSC on a single clock.

    A fresh batch is presented every ``tau_x``; latents are re-initialised
    at each presentation unless ``warm_start``.  All enabled parameters are
    updated from the same pre-step state, so the order of the updates
    within a step does not matter.
    """

    def __init__(self, source, params: ModelParams, kind=SolverKind.LSC_L0, *,
                 learn: LearnFlags = LearnFlags(), seed: int = 0, a0=None,
                 k: Optional[int] = None, warm_start: bool = False,
                 normalize: Optional[bool] = None):
        self.kind = SolverKind(kind)
        if self.kind.nested:
            raise UsageError(f"{self.kind.value!r} is a nested-loop solver")
        if learn.u0 and not self.kind.l0:
            raise ConfigurationError("u0 learning requires the l0lsc solver")
        if (learn.sigma or learn.lam) and not self.kind.sampler:
            raise ConfigurationError("sigma/lambda learning requires a sampling solver")
        self.source = source
        self.params = params
        self.learn = learn
        self.seed = int(seed)
        self.warm_start = warm_start
        self.normalize = self.kind is SolverKind.SSC if normalize is None else normalize
        if a0 is None:
            a0 = init_dictionary(source.d, k if k is not None else source.k_ref, seed)
        self.a = _arr(a0).copy()
        self.noise = NoiseSource(seed, _noise.LATENT)
        self.steps_per_batch = steps_for(params.tau_x, params.dt)
        self.step = 0
        self.u: Optional[np.ndarray] = None
        self.s: Optional[np.ndarray] = None
        self.x: Optional[np.ndarray] = None
        self.batch_index = -1

    @property
    def t(self) -> float:
        return self.step * self.params.dt

    def _present(self, b):
        self.x = self.source.batch(b).x
        self.batch_index = b
        if self.u is None or not self.warm_start:
            st = init_latents(self.kind, self.a.shape[1], self.x.shape[1],
                              self.params, self.seed, b)
            self.u, self.s = st.u, st.s

    def ensure_batch(self):
        """Load the batch for the current step if a presentation starts here."""
        b = self.step // self.steps_per_batch
        if b != self.batch_index:
            self._present(b)

    def advance(self):
        self.ensure_batch()
        p, kind, learn = self.params, self.kind, self.learn
        a, x = self.a, self.x
        rate = p.dt / p.tau_s
        if kind.l0:
            grad, s, r, feedback = _l0_parts(a, self.u, x, p)
            u = self.u
        else:
            u = self.s if self.u is None else self.u
            s = u
            grad, r, feedback = _l1_parts(a, u, x, p)
        u_new = u - rate * grad
        if kind.sampler and p.temperature > 0:
            u_new = u_new + math.sqrt(2.0 * p.temperature * rate) * self.noise.normal(
                self.step, u.shape)

        a_new = a
        if learn.a:
            a_new = _dict_step(a, r, s, p, p.dt / p.tau_a)
            _finite("A", a_new, self.step + 1)
            if self.normalize:
                a_new = _normalized(a_new, self.step + 1)
        changes = {}
        if learn.u0:
            changes["u0"] = max(0.0, p.u0 + p.dt / p.tau_u0 * _grad_u0(feedback, s))
        if learn.sigma:
            g = float(np.sum(r * r)) / r.size - p.sigma ** 2
            changes["sigma"] = max(1e-6, p.sigma + p.dt / p.tau_sigma_eff * g)
        if learn.lam:
            g = float(np.mean(np.abs(u))) - 1.0 / p.lam
            changes["lam"] = max(1e-6, p.lam - p.dt / p.tau_lambda_eff * g)
        if changes:
            self.params = p.replace(**changes)

        self.step += 1
        _finite("U" if self.u is not None else "S", u_new, self.step)
        _finite("A", a_new, self.step)
        if kind.l0:
            self.u, self.s = u_new, threshold_f(u_new, self.params.u0)
        elif kind.sampler:
            self.u, self.s = u_new, u_new
        else:
            self.s = u_new
        self.a = a_new

    def run(self, n_steps: int, callback: Optional[Callable] = None):
        for _ in range(int(n_steps)):
            self.advance()
            if callback is not None:
                callback(self)

    def energy(self) -> EnergyBreakdown:
        """Energy of the current latents on the batch they were inferred from."""
        if self.x is None:
            self.ensure_batch()
        if self.kind.l0:
            return energy_l0(self.a, self.u, self.x, self.params)
        return energy_l1(self.a, self.s, self.x, self.params)


def run_dsc(source, p: ModelParams, n_a: int, n_s: int, *, kind=SolverKind.DSC,
            eta_a: float = 0.1, seed: int = 0, a0=None, k=None, normalize=True):
    """Nested-loop sparse coding (DSC or LCA inner loop).

    Returns:
        (Dictionary, list of StepReport), one report per outer iteration.
    """
    if n_a < 0:
        raise UsageError("n_a must be >= 0")
    eng = NestedEngine(source, p, kind, n_s=n_s, eta_a=eta_a, seed=seed, a0=a0,
                       k=k, normalize=normalize)
    traces = [eng.outer_step() for _ in range(n_a)]
    return Dictionary(eng.a), traces


def run_simultaneous(source, p: ModelParams, kind, t_max: float,
                     learn: LearnFlags = LearnFlags(), *, seed: int = 0, a0=None,
                     k=None, warm_start=False, normalize=None, report_every=None):
    """Simultaneous latent/parameter dynamics up to ``t_max``.

    Returns:
        (Dictionary, final ModelParams, list of StepReport) with a report at
        the end of every data presentation (or every ``report_every`` steps).
    """
    if t_max <= 0:
        raise UsageError("t_max must be > 0")
    eng = SimultaneousEngine(source, p, kind, learn=learn, seed=seed, a0=a0, k=k,
                             warm_start=warm_start, normalize=normalize)
    n = steps_for(t_max, p.dt)
    every = report_every or eng.steps_per_batch
    traces = []
    prev_a = eng.a
    prev_u = None
    for i in range(n):
        eng.advance()
        if (i + 1) % every == 0:
            cur = eng.u if eng.u is not None else eng.s
            lat = 0.0 if prev_u is None or prev_u.shape != cur.shape else float(
                np.linalg.norm(cur - prev_u))
            traces.append(StepReport(eng.t, eng.energy(), lat,
                                     float(np.linalg.norm(eng.a - prev_a))))
            prev_a, prev_u = eng.a, cur
    return Dictionary(eng.a), eng.params, traces
