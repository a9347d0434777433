"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 I/O or format error,
3 numerical failure.

Data files are tensor files holding an N x D matrix (one sample per row).
A data argument of the form ``bars:p=8,pi=0.3,lambda=1,sigma=0.5,seed=0``
(any subset of keys, or just ``bars``) generates bars batches on the fly.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import ArraySource, BarsSource, BarsSpec, generate_bars, whiten_zca
from .errors import (ConfigurationError, FormatError, LSCError, NumericalError,
                     UsageError)
from .io import (decode_tensor, dump_kv, git_blob_hash, parse_kv, read_csv, read_tensor, write_csv,
                 write_tensor)
from .learning import (TRACE_COLUMNS, Reservoir, SweepSpec, TrainConfig,
                       latest_snapshot, run_sweep, train)
from .metrics import (MAP_ZERO_TOL, dictionary_recovery, histogram, kl_to_prior,
                      slab_bin_count)
from .model import Dictionary

# run directory layout
CONFIG = "config.txt"
MANIFEST = "manifest.txt"
TRACE = "trace.csv"
DICT = "dictionary.lsct"
DICT_INIT = "dictionary_init.lsct"
TRUTH = "truth.lsct"
CODES = "codes.lsct"
RESERVOIR = "reservoir.npz"
SNAPDIR = "snapshots"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------------ data

def _parse_bars(spec: str) -> BarsSpec:
    body = spec[len("bars"):].lstrip(":")
    kv = {}
    for part in filter(None, body.split(",")):
        if "=" not in part:
            raise UsageError(f"--data: expected key=value in bars spec, got {part!r}")
        key, value = part.split("=", 1)
        kv[key.strip()] = value.strip()
    conv = {"p": int, "pi": float, "lambda": float, "sigma": float, "seed": int}
    args = {}
    for key, value in kv.items():
        if key not in conv:
            raise UsageError(f"--data: unknown bars key {key!r}")
        try:
            args["lam" if key == "lambda" else key] = conv[key](value)
        except ValueError:
            raise UsageError(f"--data: bad value for {key}: {value!r}") from None
    try:
        return BarsSpec(**args)
    except ConfigurationError as e:
        raise UsageError(f"--data: {e}") from None


def _bars_token(b: BarsSpec) -> str:
    return f"bars:p={b.p},pi={b.pi!r},lambda={b.lam!r},sigma={b.sigma!r},seed={b.seed}"


def open_source(data: str, batch_size: int, seed: int, truth_path=None):
    """Return (source, truth Dictionary or None, canonical data token, input hash)."""
    if data == "bars" or data.startswith("bars:"):
        spec = _parse_bars(data)
        src = BarsSource(spec, batch_size)
        token = _bars_token(spec)
        return src, src.truth, token, git_blob_hash(token.encode())
    path = Path(data)
    if path.is_dir():
        path = path / "x.lsct"
    if truth_path is None and (path.parent / TRUTH).exists():
        # gen-bars output directory layout
        truth_path = path.parent / TRUTH
    raw = path.read_bytes()
    samples = decode_tensor(raw).astype(np.float64)
    if samples.ndim != 2:
        raise UsageError("--data: tensor file must hold an N x D matrix")
    truth = Dictionary(read_tensor(truth_path).astype(np.float64)) if truth_path else None
    src = ArraySource(samples, batch_size, seed, truth)
    return src, truth, str(path), git_blob_hash(raw)


# ------------------------------------------------------------------ gen-bars

def cmd_gen_bars(args) -> int:
    checks = [("--p", args.p >= 2, "must be an integer >= 2"),
              ("--pi", 0 < args.pi <= 1, "must lie in (0, 1]"),
              ("--lambda", args.lam > 0, "must be > 0"),
              ("--sigma", args.sigma >= 0, "must be >= 0"),
              ("--n", args.n >= 0, "must be >= 0")]
    for flag, ok, msg in checks:
        if not ok:
            raise UsageError(f"{flag} {msg}")
    spec = BarsSpec(args.p, args.pi, args.lam, args.sigma, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    batch = generate_bars(spec, args.n)
    write_tensor(out / "x.lsct", batch.x.T)
    write_tensor(out / "s.lsct", batch.ground_truth_s.T)
    write_tensor(out / TRUTH, batch.dictionary.a)
    manifest = {"run.command": "gen-bars", "run.version": __version__,
                "data.p": spec.p, "data.pi": spec.pi, "data.lambda": spec.lam,
                "data.sigma": spec.sigma, "data.seed": spec.seed, "data.n": args.n,
                "file.x": "x.lsct", "file.s": "s.lsct", "file.truth": TRUTH,
                "hash.x": git_blob_hash((out / "x.lsct").read_bytes())}
    (out / MANIFEST).write_text(dump_kv(manifest, "bars dataset (rows are samples)"))
    return 0


# ------------------------------------------------------------------ train

def _load_config_file(path) -> tuple[dict, str | None]:
    """Config keys (and data token) from a config file or a run manifest."""
    kv = parse_kv(Path(path).read_text())
    data = kv.pop("data", None)
    if any(k.startswith("config.") for k in kv):
        data = data or kv.get("run.data")
        kv = {k[len("config."):]: v for k, v in kv.items() if k.startswith("config.")}
    return kv, data


def _write_outputs(out: Path, art, manifest: dict) -> None:
    rows = [r.row() for r in art.traces]
    write_csv(out / TRACE, list(TRACE_COLUMNS), rows)
    write_tensor(out / DICT, art.dictionary.a)
    if art.final_codes is not None:
        write_tensor(out / CODES, art.final_codes.T)
    if art.reservoir is not None:
        np.savez(out / RESERVOIR, kind=np.array(art.reservoir_kind), **art.reservoir.state())
    last = art.traces[-1]
    manifest.update({"run.status": "ok", "run.t_final": last.t,
                     "metric.nl_mse": last.nl_mse, "metric.mean_cosine": last.mean_cosine,
                     "metric.pi_hat": last.pi_hat, "metric.norm_min": last.norm_min,
                     "metric.norm_max": last.norm_max,
                     "file.trace": TRACE, "file.dictionary": DICT,
                     "file.snapshots": ";".join(p.name for p in art.snapshots) or None})
    (out / MANIFEST).write_text(dump_kv(manifest, "langevin-sc run manifest"))


def run_training(cfg: TrainConfig, data: str, out: Path, *, resume: bool = False,
                 truth_path=None):
    if resume and truth_path is None and (out / TRUTH).exists():
        truth_path = out / TRUTH
    src, truth, token, digest = open_source(data, cfg.batch_size, cfg.seed, truth_path)
    out.mkdir(parents=True, exist_ok=True)
    cfg_kv = cfg.to_kv()
    (out / CONFIG).write_text(dump_kv({**cfg_kv, "data": token}, "training config"))
    if truth is not None:
        write_tensor(out / TRUTH, truth.a)
    manifest = {"run.command": "train", "run.version": __version__, "run.data": token,
                "run.input_hash": digest}
    manifest.update({f"config.{k}": v for k, v in cfg_kv.items()})
    snap = None
    if resume:
        snap = latest_snapshot(out / SNAPDIR)
        if snap is None:
            raise UsageError(f"--resume: no snapshots in {out / SNAPDIR}")
        manifest["run.resumed_from"] = snap.name
    try:
        art = train(cfg, src, truth=truth, snapshot_dir=out / SNAPDIR,
                    resume=snap)
    except NumericalError as e:
        manifest.update({"run.status": "failed", "run.failure_step": e.step,
                         "run.failure_tensor": e.tensor, "run.failure": str(e)})
        (out / MANIFEST).write_text(dump_kv(manifest, "langevin-sc run manifest"))
        raise
    if not resume:
        write_tensor(out / DICT_INIT, art.initial_dictionary.a)
    _write_outputs(out, art, manifest)
    return art


def cmd_train(args) -> int:
    out = Path(args.out)
    if args.resume:
        kv, data = _load_config_file(out / CONFIG)
    elif args.config:
        kv, data = _load_config_file(args.config)
    else:
        kv, data = {}, None
    if args.solver:
        kv["solver"] = args.solver
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    data = args.data or data
    if data is None:
        raise UsageError("--data is required (file, run directory or bars:...)")
    if "solver" not in kv:
        raise UsageError("--solver is required")
    cfg = TrainConfig.from_kv(kv)
    art = run_training(cfg, data, out, resume=args.resume, truth_path=args.truth)
    last = art.traces[-1]
    print(f"t={last.t:g} nl_mse={last.nl_mse:.4f} pi_hat={last.pi_hat:.4f}"
          + ("" if last.mean_cosine is None else f" mean_cosine={last.mean_cosine:.4f}"))
    return 0


# ------------------------------------------------------------------ eval

def _load_reservoir(run: Path):
    path = run / RESERVOIR
    if not path.exists():
        return None, None
    with np.load(path, allow_pickle=False) as z:
        st = {k: z[k] for k in z.files}
    return Reservoir.from_state(st), str(st["kind"])


def _run_config(run: Path) -> TrainConfig:
    if not (run / CONFIG).exists():
        raise UsageError(f"--run: {run} is not a run directory (no {CONFIG})")
    kv, _ = _load_config_file(run / CONFIG)
    return TrainConfig.from_kv(kv)


def _emit(lines, out):
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_eval(args) -> int:
    run = Path(args.run)
    cfg = _run_config(run)
    _, trace_rows = read_csv(run / TRACE)
    final_params = cfg.params
    if trace_rows:
        last = trace_rows[-1]
        final_params = cfg.params.replace(u0=float(last[6]), sigma=float(last[7]),
                                          lam=float(last[8]))
    if args.mode == "recovery":
        truth_path = Path(args.truth) if args.truth else run / TRUTH
        if truth_path.is_dir():
            truth_path = truth_path / (DICT if (truth_path / DICT).exists() else TRUTH)
        if not truth_path.exists():
            raise UsageError("--truth: no truth dictionary given and none stored in the run")
        rec = dictionary_recovery(read_tensor(run / DICT), read_tensor(truth_path))
        _emit([f"mean_cosine={rec.mean_cosine!r}",
               "assignment=" + ",".join(str(int(i)) for i in rec.assignment)], args.out)
        return 0
    res, kind = _load_reservoir(run)
    if args.mode == "kl":
        if res is None or kind != "posterior":
            raise UsageError(
                f"kl mode needs posterior samples; solver {cfg.solver.value!r} "
                "stores MAP codes only - use --mode distr to inspect them")
        times = [float(r[0]) for r in trace_rows]
        lines = ["t,n_samples,kl"]
        for t in times:
            since = None if args.window is None else t - args.window
            s = res.samples(until=t, since=since)
            kl = kl_to_prior(s, final_params, width=args.width) if s.size else math.nan
            lines.append(f"{t!r},{s.size},{kl!r}")
        _emit(lines, args.out)
        return 0
    # distr
    if res is not None:
        s = res.samples()
    elif (run / CODES).exists():
        s, kind = read_tensor(run / CODES).astype(np.float64).ravel(), "map"
    else:
        raise UsageError(f"run {run} has no stored coefficients")
    lam = final_params.lam
    width = args.width or 0.1 / lam
    n_bins = slab_bin_count(lam, width)
    zero_tol = MAP_ZERO_TOL if kind == "map" else 0.0
    h = histogram(s, width, n_bins, zero_tol)
    lines = [f"# kind={kind} samples={s.size} width={width!r}",
             f"zero_atom,{h.zero_atom}", f"negative,{h.negative}", "lo,hi,count"]
    edges = h.edges
    lines += [f"{float(edges[i])!r},{float(edges[i + 1])!r},{int(c)}"
              for i, c in enumerate(h.counts)]
    _emit(lines, args.out)
    return 0


# ------------------------------------------------------------------ sweep

def parse_sweep_spec(path):
    """SweepSpec plus data token from a flat key=value file.

    Keys: ``sweep.param``, ``sweep.values`` (comma separated),
    optional ``sweep.holdout_batches``, ``point.<i>.<key>`` per-point
    overrides, ``data``, and any training config key.
    """
    kv = parse_kv(Path(path).read_text())
    data = kv.pop("data", None)
    try:
        param = kv.pop("sweep.param")
        values = [float(v) for v in kv.pop("sweep.values").split(",") if v.strip()]
    except KeyError as e:
        raise ConfigurationError(f"sweep spec missing key {e.args[0]!r}") from None
    except ValueError:
        raise ConfigurationError("sweep.values must be comma-separated numbers") from None
    holdout = int(kv.pop("sweep.holdout_batches", "4"))
    overrides = {}
    for key in [k for k in kv if k.startswith("point.")]:
        _, idx, name = key.split(".", 2)
        overrides.setdefault(int(idx), {})[name] = kv.pop(key)
    base = TrainConfig.from_kv(kv)
    return SweepSpec(param, values, base, overrides, holdout), data


def cmd_sweep(args) -> int:
    spec, data = parse_sweep_spec(args.spec)
    data = args.data or data
    if data is None:
        raise UsageError("sweep needs a data source (--data or 'data=' in the spec)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src, truth, token, _ = open_source(data, spec.base.batch_size, spec.base.seed)

    def on_point(i, cfg, art, row):
        d = out / f"point_{i:03d}"
        d.mkdir(exist_ok=True)
        if cfg is not None:
            (d / CONFIG).write_text(dump_kv({**cfg.to_kv(), "data": token}))
        if art is not None:
            _write_outputs(d, art, {"run.command": "sweep-point", "run.data": token,
                                    **{f"config.{k}": v for k, v in cfg.to_kv().items()}})
        else:
            print(f"warning: sweep point {i} {row.status}", file=sys.stderr)

    rows, violations = run_sweep(spec, src, on_point)
    metric = "activity" if spec.param == "lambda" and spec.base.solver.nested else "pi_hat"
    extra = "active_count" if spec.param == "overcompleteness" else "mean_cosine"
    write_csv(out / "sweep.csv", [spec.param, metric, "p10", "p90", extra, "status"],
              [[r.value, r.metric, r.lo, r.hi, r.extra, r.status] for r in rows])
    (out / MANIFEST).write_text(dump_kv(
        {"run.command": "sweep", "run.data": token, "sweep.param": spec.param,
         "sweep.values": ",".join(repr(v) for v in spec.values),
         "sweep.monotonicity_violations": violations,
         "sweep.failed_points": sum(r.status != "ok" for r in rows)}))
    for r in rows:
        print(f"{spec.param}={r.value:g} {metric}={r.metric:.4f} [{r.lo:.4f}, {r.hi:.4f}] {r.status}")
    return 0


# ------------------------------------------------------------------ whiten

def cmd_whiten(args) -> int:
    if args.eps is not None and args.eps < 0:
        raise UsageError("--eps must be >= 0")
    patches = read_tensor(args.inp).astype(np.float64)
    if patches.ndim != 2:
        raise UsageError("--in: tensor file must hold an N x D matrix")
    white, t = whiten_zca(patches, args.eps)
    out = Path(args.out)
    write_tensor(out, white)
    write_tensor(out.with_name(out.name + ".zca_mean.lsct"), t.mean[None, :])
    write_tensor(out.with_name(out.name + ".zca_matrix.lsct"), t.matrix)
    out.with_name(out.name + ".zca.txt").write_text(dump_kv(
        {"eps": t.eps, "mean": out.name + ".zca_mean.lsct",
         "matrix": out.name + ".zca_matrix.lsct",
         "input_hash": git_blob_hash(Path(args.inp).read_bytes())},
        "ZCA transform: white = (x - mean) @ matrix"))
    return 0


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="langevin-sc", description="Probabilistic sparse coding with Langevin inference.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-bars", help="generate a bars dataset")
    g.add_argument("--p", type=int, default=8)
    g.add_argument("--pi", type=float, default=0.3)
    g.add_argument("--lambda", dest="lam", type=float, default=1.0)
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_bars)

    t = sub.add_parser("train", help="train a dictionary")
    t.add_argument("--solver", choices=["dsc", "lca", "ssc", "lsc", "l0lsc"])
    t.add_argument("--config")
    t.add_argument("--data")
    t.add_argument("--truth", help="truth dictionary (D x K tensor) for mean_cosine")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--resume", action="store_true",
                   help="continue the run in --out from its latest snapshot")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a finished run")
    e.add_argument("--run", required=True)
    e.add_argument("--mode", choices=["kl", "recovery", "distr"], required=True)
    e.add_argument("--truth")
    e.add_argument("--width", type=float, help="histogram bin width (default 0.1/lambda)")
    e.add_argument("--window", type=float, help="kl over samples from the last WINDOW time units")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--spec", required=True)
    s.add_argument("--data")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    w = sub.add_parser("whiten", help="ZCA-whiten a patch file")
    w.add_argument("--in", dest="inp", required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--eps", type=float)
    w.set_defaults(func=cmd_whiten)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except LSCError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
