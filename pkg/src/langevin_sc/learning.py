"""Training orchestration: configs, traces, sample reservoir, snapshots, sweeps.

``train`` wraps the two engines in :mod:`langevin_sc.dynamics` with a
common clock.  Simultaneous solvers evaluate every ``eval_period`` time
units; nested solvers (DSC, LCA) evaluate every
``round(eval_period / (n_s * dt))`` outer iterations, their time being
``iterations * n_s * dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import noise as _noise
from .dynamics import (LearnFlags, NestedEngine, SimultaneousEngine, SolverKind,
                       ZERO_RULES, init_dictionary, steps_for)
from .errors import ConfigurationError, FormatError, NumericalError, UsageError
from .metrics import (MAP_ZERO_TOL, activity_estimate, column_norms,
                      dictionary_recovery, nl_mse)
from .model import Dictionary, ModelParams, energy_l0, energy_l1, u0_from_pi

TRACE_COLUMNS = ("t", "energy_recon", "energy_sparse", "nl_mse", "mean_cosine",
                 "pi_hat", "u0", "sigma", "lambda", "norm_min", "norm_median",
                 "norm_max")

_PARAM_KEYS = {"sigma": "sigma", "lambda": "lam", "u0": "u0",
               "temperature": "temperature", "tau_s": "tau_s", "tau_a": "tau_a",
               "tau_u0": "tau_u0", "tau_x": "tau_x", "dt": "dt",
               "tau_sigma": "tau_sigma", "tau_lambda": "tau_lambda"}


def _is_multiple(value: float, dt: float) -> bool:
    n = round(value / dt)
    return n >= 1 and abs(n * dt - value) <= 1e-9 * max(1.0, value)


@dataclass
class TrainConfig:
    """Everything needed to reproduce a training run.

    ``batch_size`` and ``eval_period`` left as None resolve to solver
    defaults: 100 samples and ``10 * n_s * dt`` for nested solvers, 64
    samples and ``tau_x`` for simultaneous ones.  ``k`` None means the data
    source's reference size (``2p`` for bars, ``D`` for patch data).
    """

    solver: SolverKind
    params: ModelParams = field(default_factory=ModelParams)
    learn: LearnFlags = field(default_factory=LearnFlags)
    seed: int = 0
    batch_size: Optional[int] = None
    k: Optional[int] = None
    t_max: float = 1000.0
    n_a: int = 800
    n_s: int = 300
    eta_a: float = 0.1
    zero_rule: str = "sliding"
    normalize: Optional[bool] = None
    warm_start: bool = False
    eval_period: Optional[float] = None
    snapshot_period: Optional[float] = None
    reservoir_size: int = 1_000_000
    burn_in: float = 5.0
    thin: float = 1.0

    def __post_init__(self):
        self.solver = SolverKind(self.solver)
        p = self.params
        if self.batch_size is None:
            self.batch_size = 100 if self.solver.nested else 64
        if self.eval_period is None:
            self.eval_period = (10 * self.n_s * p.dt if self.solver.nested
                                else p.tau_x)
        if self.normalize is None:
            self.normalize = self.solver in (SolverKind.DSC, SolverKind.LCA,
                                             SolverKind.SSC)
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.k is not None and self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.t_max < 0 or self.n_a < 0:
            raise ConfigurationError("t_max and n_a must be >= 0")
        if self.n_s < 1:
            raise ConfigurationError("n_s must be >= 1")
        if self.zero_rule not in ZERO_RULES:
            raise ConfigurationError(f"zero_rule must be one of {ZERO_RULES}")
        if self.reservoir_size < 1:
            raise ConfigurationError("reservoir_size must be >= 1")
        for name in ("eval_period", "snapshot_period", "burn_in", "thin"):
            v = getattr(self, name)
            if v is None:
                continue
            if name == "burn_in" and v == 0:
                continue
            if not _is_multiple(v, p.dt):
                raise ConfigurationError(f"{name}={v} must be a positive multiple of dt={p.dt}")
        if not self.solver.nested:
            steps_for(p.tau_x, p.dt)
            steps_for(self.t_max, p.dt)
        if self.learn.u0 and self.solver is not SolverKind.LSC_L0:
            raise ConfigurationError("learn_u0 requires solver l0lsc")
        if (self.learn.sigma or self.learn.lam) and not self.solver.sampler:
            raise ConfigurationError("learn_sigma/learn_lambda require a sampling solver")
        if self.solver.nested and (self.learn.u0 or self.learn.sigma or self.learn.lam):
            raise ConfigurationError("nested solvers only learn the dictionary")

    @property
    def total_time(self) -> float:
        if self.solver.nested:
            return self.n_a * self.n_s * self.params.dt
        return self.t_max

    def replace(self, **changes) -> "TrainConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return TrainConfig(**d)

    def to_kv(self) -> dict:
        """Canonical flat key/value form (every key present, fixed order)."""
        p = self.params
        out = {"solver": self.solver.value, "seed": self.seed,
               "batch_size": self.batch_size, "k": self.k}
        for key, attr in _PARAM_KEYS.items():
            out[key] = getattr(p, attr)
        out.update({"learn_a": self.learn.a, "learn_u0": self.learn.u0,
                    "learn_sigma": self.learn.sigma, "learn_lambda": self.learn.lam,
                    "normalize": self.normalize, "warm_start": self.warm_start,
                    "t_max": self.t_max, "n_a": self.n_a, "n_s": self.n_s,
                    "eta_a": self.eta_a, "zero_rule": self.zero_rule,
                    "eval_period": self.eval_period,
                    "snapshot_period": self.snapshot_period,
                    "reservoir_size": self.reservoir_size,
                    "burn_in": self.burn_in, "thin": self.thin})
        return out

    @classmethod
    def from_kv(cls, kv: Mapping[str, object], solver=None) -> "TrainConfig":
        """Build a config from parsed ``key=value`` pairs.

        Values may be strings (as parsed from a file) or Python values.
        ``pi`` may be given instead of ``u0``; with neither, an L0 model
        starts at pi = 0.5.  Unknown keys are rejected.
        """
        kv = dict(kv)
        if solver is not None:
            kv["solver"] = solver
        if "solver" not in kv:
            raise ConfigurationError("missing required key 'solver'")
        known = set(TrainConfig.__dataclass_fields__) | set(_PARAM_KEYS) | {
            "pi", "learn_a", "learn_u0", "learn_sigma", "learn_lambda"}
        known -= {"params", "learn"}
        unknown = sorted(set(kv) - known)
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
        try:
            kind = SolverKind(str(kv["solver"]))
        except ValueError:
            raise ConfigurationError(f"unknown solver {kv['solver']!r}") from None

        def get(key, conv, default=None):
            if key not in kv:
                return default
            raw = kv[key]
            if raw is None:
                return None
            if isinstance(raw, str):
                raw = raw.strip()
                if raw.lower() == "none":
                    return None
            try:
                return conv(raw)
            except (TypeError, ValueError):
                raise ConfigurationError(f"bad value for {key}: {kv[key]!r}") from None

        pk = {}
        for key, attr in _PARAM_KEYS.items():
            v = get(key, float)
            if v is not None:
                pk[attr] = v
        if "pi" in kv and "u0" in kv:
            raise ConfigurationError("give either pi or u0, not both")
        lam = pk.get("lam", ModelParams.lam)
        if "pi" in kv:
            pk["u0"] = u0_from_pi(get("pi", float), lam)
        elif "u0" not in pk and kind is SolverKind.LSC_L0:
            pk["u0"] = u0_from_pi(0.5, lam)
        try:
            params = ModelParams(**pk)
        except TypeError as e:
            raise ConfigurationError(str(e)) from None
        learn = LearnFlags(a=get("learn_a", _bool, True), u0=get("learn_u0", _bool, False),
                           sigma=get("learn_sigma", _bool, False),
                           lam=get("learn_lambda", _bool, False))
        opts = {}
        for name, conv in (("seed", int), ("batch_size", int), ("k", int),
                           ("t_max", float), ("n_a", int), ("n_s", int),
                           ("eta_a", float), ("zero_rule", str),
                           ("normalize", _bool), ("warm_start", _bool),
                           ("eval_period", float), ("snapshot_period", float),
                           ("reservoir_size", _int_like), ("burn_in", float),
                           ("thin", float)):
            if name in kv:
                opts[name] = get(name, conv)
        return cls(solver=kind, params=params, learn=learn, **opts)


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(v)


def _int_like(v) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(v)
    return int(f)


@dataclass
class TraceRecord:
    t: float
    energy_recon: float
    energy_sparse: float
    nl_mse: float
    mean_cosine: Optional[float]
    pi_hat: float
    u0: float
    sigma: float
    lam: float
    norm_min: float
    norm_median: float
    norm_max: float

    def row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]

    @classmethod
    def from_row(cls, row: Sequence) -> "TraceRecord":
        vals = [None if (v is None or (isinstance(v, float) and math.isnan(v)))
                else float(v) for v in row]
        return cls(*vals)


class Reservoir:
    """Uniform fixed-size sample of scalars (Algorithm R) with their times.

    Replacement indices come from the RESERVOIR stream addressed by the
    number of ``add`` calls, so the content is a pure function of the
    sequence of additions.
    """

    def __init__(self, capacity: int, seed: int = 0):
        self.capacity = int(capacity)
        self.seed = int(seed)
        self.values = np.zeros(self.capacity)
        self.times = np.zeros(self.capacity)
        self.seen = 0
        self.events = 0

    @property
    def size(self) -> int:
        return min(self.seen, self.capacity)

    def add(self, samples, t: float) -> None:
        v = np.asarray(samples, dtype=np.float64).ravel()
        m = v.size
        n_fill = int(np.clip(self.capacity - self.seen, 0, m))
        if n_fill:
            self.values[self.seen:self.seen + n_fill] = v[:n_fill]
            self.times[self.seen:self.seen + n_fill] = t
        if n_fill < m:
            idx = self.seen + np.arange(n_fill, m, dtype=np.float64)
            rng = _noise.rng_for(self.seed, _noise.RESERVOIR, self.events)
            j = np.floor(rng.random(m - n_fill) * (idx + 1)).astype(np.int64)
            keep = np.flatnonzero(j < self.capacity)
            pos = j[keep]
            # sequential semantics: the latest item written to a slot wins
            _, last = np.unique(pos[::-1], return_index=True)
            sel = keep[len(keep) - 1 - last]
            self.values[j[sel]] = v[n_fill:][sel]
            self.times[j[sel]] = t
        self.seen += m
        self.events += 1

    def samples(self, until: Optional[float] = None, since: Optional[float] = None):
        vals, times = self.values[:self.size], self.times[:self.size]
        m = np.ones(vals.size, dtype=bool)
        if until is not None:
            m &= times <= until
        if since is not None:
            m &= times > since
        return vals[m]

    def state(self) -> dict:
        return {"res_values": self.values[:self.size].copy(),
                "res_times": self.times[:self.size].copy(),
                "res_meta": np.array([self.capacity, self.seed, self.seen, self.events],
                                     dtype=np.int64)}

    @classmethod
    def from_state(cls, st) -> "Reservoir":
        cap, seed, seen, events = (int(v) for v in st["res_meta"])
        r = cls(cap, seed)
        n = len(st["res_values"])
        r.values[:n] = st["res_values"]
        r.times[:n] = st["res_times"]
        r.seen, r.events = seen, events
        return r


@dataclass
class RunArtifact:
    """Result of :func:`train`.

    ``reservoir_kind`` is ``"posterior"`` for Langevin solvers, ``"map"``
    for nested solvers (their per-iteration MAP codes) and None for SSC.
    """

    config: TrainConfig
    dictionary: Dictionary
    params: ModelParams
    traces: list
    reservoir: Optional[Reservoir]
    reservoir_kind: Optional[str]
    initial_dictionary: Optional[Dictionary] = None
    final_codes: Optional[np.ndarray] = None
    snapshots: list = field(default_factory=list)

    def trace_column(self, name: str) -> np.ndarray:
        attr = "lam" if name == "lambda" else name
        return np.array([np.nan if getattr(r, attr) is None else getattr(r, attr)
                         for r in self.traces], dtype=np.float64)

    def converged_pi(self, fraction: float = 0.1):
        """(mean, p10, p90) of pi_hat over the final ``fraction`` of the trace."""
        return tail_summary(self.trace_column("pi_hat"), fraction)


def tail_summary(values, fraction: float = 0.1):
    """Mean and 10-90 percentile range of the final ``fraction`` of a series."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise UsageError("empty series")
    tail = v[-max(1, int(math.ceil(fraction * v.size))):]
    return float(tail.mean()), float(np.percentile(tail, 10)), float(np.percentile(tail, 90))


def _make_record(t, a, s, u, x, p: ModelParams, kind: SolverKind, truth) -> TraceRecord:
    if kind.l0:
        e = energy_l0(a, u, x, p)
        pi_hat = p.pi
    else:
        e = energy_l1(a, s, x, p)
        pi_hat = activity_estimate(s, MAP_ZERO_TOL)
    norms = column_norms(a)
    cos = None
    if truth is not None and truth.k <= a.shape[1] and truth.d == a.shape[0]:
        cos = dictionary_recovery(a, truth).mean_cosine
    return TraceRecord(float(t), e.recon, e.sparsity, nl_mse(a, s, x), cos, pi_hat,
                       p.u0, p.sigma, p.lam, float(norms.min()),
                       float(np.median(norms)), float(norms.max()))


def _truth_of(source):
    t = getattr(source, "truth", None)
    return t if isinstance(t, Dictionary) else None


def _save_npz(path: Path, arrays: dict) -> None:
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def _params_array(p: ModelParams) -> np.ndarray:
    return np.array([p.sigma, p.lam, p.u0], dtype=np.float64)


def _trace_array(traces) -> np.ndarray:
    rows = [[np.nan if v is None else v for v in r.row()] for r in traces]
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(TRACE_COLUMNS))


def load_snapshot(path) -> dict:
    """Read a snapshot written by :func:`train`."""
    try:
        with np.load(path, allow_pickle=False) as z:
            return {k: z[k] for k in z.files}
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read snapshot {path}: {e}") from None


def latest_snapshot(directory) -> Optional[Path]:
    snaps = sorted(Path(directory).glob("snapshot_*.npz"))
    return snaps[-1] if snaps else None


def train(config: TrainConfig, source, *, truth: Optional[Dictionary] = None,
          a0=None, snapshot_dir=None, resume=None,
          callback: Optional[Callable] = None) -> RunArtifact:
    """Run the configured solver on ``source``.

    Args:
        config: run configuration.
        source: data source with ``batch(i)``, ``d`` and ``k_ref``.
        truth: generating dictionary for the mean_cosine trace column;
            defaults to ``source.truth`` when present.
        a0: initial dictionary (defaults to the seeded random init).
        snapshot_dir: where snapshots are written every ``snapshot_period``.
        resume: a snapshot path (or dict from :func:`load_snapshot`) to
            continue from; the continuation is bit-identical to an
            uninterrupted run.
        callback: called with the engine after every step / outer iteration.

    Raises:
        NumericalError: a state tensor became non-finite; the message names
            the tensor and step.
    """
    cfg = config
    truth = truth if truth is not None else _truth_of(source)
    k = cfg.k if cfg.k is not None else source.k_ref
    if a0 is None:
        a0 = init_dictionary(source.d, k, cfg.seed)
    a0 = Dictionary(a0.a if isinstance(a0, Dictionary) else a0)
    if a0.d != source.d:
        raise UsageError(f"dictionary has D={a0.d} but data has D={source.d}")
    if cfg.solver.nested:
        return _train_nested(cfg, source, truth, a0, snapshot_dir, resume, callback)
    return _train_simultaneous(cfg, source, truth, a0, snapshot_dir, resume, callback)


def _period_steps(period, unit) -> Optional[int]:
    if period is None:
        return None
    return max(1, int(round(period / unit)))


def _train_nested(cfg, source, truth, a0, snapshot_dir, resume, callback):
    p = cfg.params
    eng = NestedEngine(source, p, cfg.solver, n_s=cfg.n_s, eta_a=cfg.eta_a,
                       seed=cfg.seed, a0=a0.a, normalize=cfg.normalize,
                       learn_a=cfg.learn.a, zero_rule=cfg.zero_rule)
    unit = cfg.n_s * p.dt
    every = _period_steps(cfg.eval_period, unit)
    snap_every = _period_steps(cfg.snapshot_period, unit)
    reservoir = Reservoir(cfg.reservoir_size, cfg.seed)
    traces = []
    if resume is not None:
        st = load_snapshot(resume) if not isinstance(resume, dict) else resume
        eng.a = st["a"].copy()
        eng.iteration = int(st["step"])
        reservoir = Reservoir.from_state(st)
        traces = [TraceRecord.from_row(r) for r in st["traces"]]
    else:
        x0 = source.batch(0).x
        s0 = np.zeros((eng.a.shape[1], x0.shape[1]))
        traces.append(_make_record(0.0, eng.a, s0, None, x0, p, cfg.solver, truth))
    snapshots = []
    while eng.iteration < cfg.n_a:
        eng.outer_step()
        if callback is not None:
            callback(eng)
        it = eng.iteration
        reservoir.add(eng.state.s, eng.t)
        if it % every == 0 or it == cfg.n_a:
            traces.append(_make_record(eng.t, eng.a, eng.state.s, None, eng.x, p,
                                       cfg.solver, truth))
        if snapshot_dir is not None and snap_every and it % snap_every == 0:
            snapshots.append(_write_snapshot(snapshot_dir, it, eng.a, None, None, p,
                                             -1, reservoir, traces))
    codes = eng.state.s.copy() if eng.state is not None else None
    return RunArtifact(cfg, Dictionary(eng.a), p, traces, reservoir, "map", a0,
                       codes, snapshots)


def _train_simultaneous(cfg, source, truth, a0, snapshot_dir, resume, callback):
    p = cfg.params
    eng = SimultaneousEngine(source, p, cfg.solver, learn=cfg.learn, seed=cfg.seed,
                             a0=a0.a, warm_start=cfg.warm_start,
                             normalize=cfg.normalize)
    n_total = steps_for(cfg.t_max, p.dt)
    every = _period_steps(cfg.eval_period, p.dt)
    snap_every = _period_steps(cfg.snapshot_period, p.dt)
    spb = eng.steps_per_batch
    burn = int(round(cfg.burn_in / p.dt))
    thin = _period_steps(cfg.thin, p.dt)
    sampling = cfg.solver.sampler
    reservoir = Reservoir(cfg.reservoir_size, cfg.seed) if sampling else None
    traces = []
    if resume is not None:
        st = load_snapshot(resume) if not isinstance(resume, dict) else resume
        eng.a = st["a"].copy()
        eng.step = int(st["step"])
        sigma, lam, u0 = (float(v) for v in st["params"])
        eng.params = p.replace(sigma=sigma, lam=lam, u0=u0)
        eng.u = st["u"].copy() if st["u"].size else None
        eng.s = st["s"].copy()
        b = int(st["batch_index"])
        eng.x, eng.batch_index = source.batch(b).x, b
        if sampling:
            reservoir = Reservoir.from_state(st)
        traces = [TraceRecord.from_row(r) for r in st["traces"]]
    else:
        eng.ensure_batch()
        traces.append(_make_record(0.0, eng.a, eng.s, eng.u, eng.x, eng.params,
                                   cfg.solver, truth))
    snapshots = []
    while eng.step < n_total:
        eng.advance()
        if callback is not None:
            callback(eng)
        step = eng.step
        if sampling:
            local = step - eng.batch_index * spb
            if local >= burn and (local - burn) % thin == 0:
                reservoir.add(eng.s, eng.t)
        if step % every == 0 or step == n_total:
            traces.append(_make_record(eng.t, eng.a, eng.s, eng.u, eng.x, eng.params,
                                       cfg.solver, truth))
        if snapshot_dir is not None and snap_every and step % snap_every == 0:
            snapshots.append(_write_snapshot(snapshot_dir, step, eng.a, eng.u, eng.s,
                                             eng.params, eng.batch_index, reservoir,
                                             traces))
    return RunArtifact(cfg, Dictionary(eng.a), eng.params, traces, reservoir,
                       "posterior" if sampling else None, a0,
                       None if eng.s is None else eng.s.copy(), snapshots)


def _write_snapshot(directory, step, a, u, s, p, batch_index, reservoir, traces) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    arrays = {"step": np.array(step, dtype=np.int64), "a": a,
              "u": np.zeros(0) if u is None else u,
              "s": np.zeros(0) if s is None else s,
              "params": _params_array(p),
              "batch_index": np.array(batch_index, dtype=np.int64),
              "traces": _trace_array(traces)}
    if reservoir is not None:
        arrays.update(reservoir.state())
    path = d / f"snapshot_{step:012d}.npz"
    _save_npz(path, arrays)
    return path


# ---------------------------------------------------------------- sweeps

SWEEP_PARAMS = ("lambda", "u0", "overcompleteness")


@dataclass
class SweepSpec:
    """A one-parameter grid over a base config.

    ``overrides`` maps a grid position to extra config keys for that point.
    """

    param: str
    values: Sequence[float]
    base: TrainConfig
    overrides: dict = field(default_factory=dict)
    holdout_batches: int = 4

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigurationError(f"sweep parameter must be one of {SWEEP_PARAMS}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.size == 0:
            raise ConfigurationError("sweep grid is empty")
        d = np.diff(v)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigurationError("sweep grid must be strictly monotone")
        self.values = [float(x) for x in v]

    def point_config(self, i: int, source=None) -> TrainConfig:
        value = self.values[i]
        kv = self.base.to_kv()
        kv.update(self.overrides.get(i, {}))
        if self.param == "lambda":
            kv["lambda"] = value
        elif self.param == "u0":
            kv["u0"] = value
        else:
            if source is None:
                raise UsageError("overcompleteness sweep needs the data source")
            kv["k"] = max(1, int(round(value * source.k_ref)))
        return TrainConfig.from_kv(kv)


def measure_activity(dictionary, config: TrainConfig, source, n_batches: int = 4) -> float:
    """Fraction of held-out MAP codes with |s| > MAP_ZERO_TOL."""
    eng = NestedEngine(source, config.params, config.solver, n_s=config.n_s,
                       a0=dictionary.a if isinstance(dictionary, Dictionary) else dictionary,
                       zero_rule=config.zero_rule)
    codes = [eng.infer(source.holdout(i).x)[0].s for i in range(n_batches)]
    return activity_estimate(np.concatenate(codes, axis=1), MAP_ZERO_TOL)


def monotonicity_violations(values, tol: float = 0.01) -> int:
    """Adjacent increases larger than ``tol`` in a should-be non-increasing series."""
    v = np.asarray(values, dtype=np.float64)
    return int(np.sum(np.diff(v) > tol))


@dataclass
class SweepRow:
    value: float
    metric: float
    lo: float
    hi: float
    extra: float
    status: str = "ok"


def _run_points(spec: SweepSpec, source, measure, on_point=None):
    rows = []
    for i, value in enumerate(spec.values):
        cfg = None
        try:
            cfg = spec.point_config(i, source)
            art = train(cfg, source)
            row = measure(cfg, art)
        except (NumericalError, ConfigurationError, UsageError) as e:
            row = SweepRow(value, math.nan, math.nan, math.nan, math.nan,
                           f"failed: {e}")
            art = None
        else:
            row.value = value
        rows.append(row)
        if on_point is not None:
            on_point(i, cfg, art, row)
    return rows


def sweep_lambda_vs_pi(spec: SweepSpec, source, on_point=None):
    """Train a nested solver at each lambda and measure held-out MAP activity.

    Returns:
        (rows, number of monotonicity violations beyond 0.01)
    """
    if spec.param != "lambda":
        raise ConfigurationError("sweep_lambda_vs_pi sweeps 'lambda'")
    if not spec.base.solver.nested:
        raise ConfigurationError("sweep_lambda_vs_pi needs solver dsc or lca")

    def measure(cfg, art):
        act = measure_activity(art.dictionary, cfg, source, spec.holdout_batches)
        return SweepRow(0.0, act, act, act, art.trace_column("mean_cosine")[-1])

    rows = _run_points(spec, source, measure, on_point=on_point)
    ok = [r.metric for r in rows if r.status == "ok"]
    order = np.argsort([r.value for r in rows if r.status == "ok"])
    return rows, monotonicity_violations(np.asarray(ok)[order])


def sweep_overcompleteness(spec: SweepSpec, source, on_point=None):
    """Train L0-LSC with u0 learning at each overcompleteness.

    Each row holds the converged pi (final-10% mean, 10-90% range) and in
    ``extra`` the mean active count pi * K.
    """
    if spec.param != "overcompleteness":
        raise ConfigurationError("sweep_overcompleteness sweeps 'overcompleteness'")
    if spec.base.solver is not SolverKind.LSC_L0 or not spec.base.learn.u0:
        raise ConfigurationError("overcompleteness sweep needs l0lsc with learn_u0")

    def measure(cfg, art):
        mean, lo, hi = art.converged_pi()
        return SweepRow(0.0, mean, lo, hi, mean * art.dictionary.k)

    return _run_points(spec, source, measure, on_point=on_point)


def run_sweep(spec: SweepSpec, source, on_point=None):
    """Dispatch on the swept parameter; lambda/u0 on samplers report pi_hat."""
    if spec.param == "overcompleteness":
        return sweep_overcompleteness(spec, source, on_point), 0
    if spec.param == "lambda" and spec.base.solver.nested:
        return sweep_lambda_vs_pi(spec, source, on_point)

    def measure(cfg, art):
        mean, lo, hi = art.converged_pi()
        return SweepRow(0.0, mean, lo, hi, art.trace_column("mean_cosine")[-1])

    return _run_points(spec, source, measure, on_point=on_point), 0
