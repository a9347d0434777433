import math

import numpy as np
import pytest

from langevin_sc.data import BarsSource, BarsSpec
from langevin_sc.dynamics import SolverKind, init_dictionary
from langevin_sc.errors import ConfigurationError, NumericalError
from langevin_sc.learning import (Reservoir, SweepSpec, TraceRecord, TrainConfig,
                                  monotonicity_violations, run_sweep, sweep_lambda_vs_pi,
                                  sweep_overcompleteness, tail_summary, train)
from langevin_sc.model import ModelParams


def small_bars(n=16):
    return BarsSource(BarsSpec(p=4), n)


def test_config_round_trip():
    cfg = TrainConfig.from_kv({"solver": "l0lsc", "pi": "0.3", "learn_u0": "true",
                               "t_max": "200", "tau_x": "5", "seed": "7"})
    assert cfg.params.pi == pytest.approx(0.3)
    kv = {k: str(v) for k, v in cfg.to_kv().items()}
    again = TrainConfig.from_kv(kv)
    assert again == cfg
    assert again.to_kv() == cfg.to_kv()


def test_config_defaults_by_solver():
    dsc = TrainConfig(SolverKind.DSC)
    assert dsc.batch_size == 100 and dsc.normalize
    assert dsc.eval_period == pytest.approx(10 * 300 * 0.01)
    lsc = TrainConfig.from_kv({"solver": "l0lsc"})
    assert lsc.batch_size == 64 and not lsc.normalize
    assert lsc.params.pi == pytest.approx(0.5)


@pytest.mark.parametrize("kv", [
    {"solver": "nope"},
    {"solver": "dsc", "bogus": "1"},
    {"solver": "l0lsc", "pi": "0.3", "u0": "1"},
    {"solver": "lsc", "learn_u0": "true"},
    {"solver": "dsc", "learn_sigma": "true"},
    {"solver": "l0lsc", "eval_period": "0.015"},
    {"solver": "l0lsc", "t_max": "abc"},
    {"solver": "l0lsc", "sigma": "-1"},
])
def test_config_rejects(kv):
    with pytest.raises(ConfigurationError):
        TrainConfig.from_kv(kv)


def test_t_max_zero_keeps_initial_state():
    src = small_bars()
    cfg = TrainConfig.from_kv({"solver": "l0lsc", "t_max": "0"})
    art = train(cfg, src)
    assert len(art.traces) == 1 and art.traces[0].t == 0.0
    assert (art.dictionary.a == init_dictionary(16, 8, 0).a).all()
    assert art.reservoir.size == 0


def test_dsc_zero_iterations_equals_seeded_init():
    art = train(TrainConfig.from_kv({"solver": "dsc", "n_a": "0", "seed": "4"}), small_bars())
    assert (art.dictionary.a == init_dictionary(16, 8, 4).a).all()


def test_trace_schedule_and_contents():
    src = small_bars()
    cfg = TrainConfig.from_kv({"solver": "l0lsc", "pi": "0.3", "t_max": "30",
                               "eval_period": "10"})
    art = train(cfg, src)
    assert [r.t for r in art.traces] == [0.0, 10.0, 20.0, 30.0]
    last = art.traces[-1]
    assert last.pi_hat == pytest.approx(0.3)
    assert 0 <= last.mean_cosine <= 1
    assert last.norm_min <= last.norm_median <= last.norm_max


def test_reservoir_burn_in_and_thinning():
    src = small_bars(4)
    cfg = TrainConfig.from_kv({"solver": "l0lsc", "t_max": "20", "burn_in": "5",
                               "thin": "1"})
    art = train(cfg, src)
    # per 10-unit presentation samples at local times 5, 6, ..., 10
    times = np.unique(art.reservoir.times[:art.reservoir.size])
    assert np.allclose(times, [5, 6, 7, 8, 9, 10, 15, 16, 17, 18, 19, 20])
    assert art.reservoir.seen == 12 * 8 * 4


def test_reservoir_is_uniform():
    # each of 100 items should survive in a 10-slot reservoir w.p. 0.1
    hits = np.zeros(100)
    for seed in range(2000):
        r = Reservoir(10, seed)
        for chunk in range(10):
            r.add(np.arange(chunk * 10, chunk * 10 + 10), float(chunk))
        hits[r.values[:r.size].astype(int)] += 1
    freq = hits / 2000
    assert np.abs(freq - 0.1).max() < 0.025
    assert abs(freq[:10].mean() - freq[90:].mean()) < 0.01


def test_snapshot_resume_is_bit_exact(tmp_path):
    src = small_bars()
    cfg = TrainConfig.from_kv({"solver": "l0lsc", "t_max": "40", "snapshot_period": "15",
                               "learn_u0": "true", "reservoir_size": "500"})
    full = train(cfg, src, snapshot_dir=tmp_path)
    assert len(full.snapshots) == 2
    resumed = train(cfg, src, resume=full.snapshots[0])
    assert resumed.dictionary.a.tobytes() == full.dictionary.a.tobytes()
    assert [r.row() for r in resumed.traces] == [r.row() for r in full.traces]
    assert resumed.reservoir.values.tobytes() == full.reservoir.values.tobytes()
    assert resumed.params == full.params


def test_nested_resume_is_bit_exact(tmp_path):
    src = small_bars()
    cfg = TrainConfig.from_kv({"solver": "lca", "n_a": "6", "n_s": "20",
                               "snapshot_period": "0.6", "eval_period": "0.4"})
    full = train(cfg, src, snapshot_dir=tmp_path)
    resumed = train(cfg, src, resume=full.snapshots[0])
    assert resumed.dictionary.a.tobytes() == full.dictionary.a.tobytes()
    assert [r.row() for r in resumed.traces] == [r.row() for r in full.traces]


def test_nan_abort_names_tensor_and_step():
    src = small_bars()
    cfg = TrainConfig(SolverKind.SSC, params=ModelParams(sigma=0.01, dt=0.5, tau_x=500.0),
                      t_max=5000.0)
    with pytest.raises(NumericalError) as err, np.errstate(over="ignore", invalid="ignore"):
        train(cfg, src)
    assert err.value.step is not None
    assert err.value.tensor in ("S", "A")


def test_trace_record_row_round_trip():
    r = TraceRecord(1.0, 2.0, 3.0, 4.0, None, 0.3, 1.2, 0.5, 1.0, 0.9, 1.0, 1.1)
    assert TraceRecord.from_row(r.row()) == r


def test_tail_summary():
    mean, lo, hi = tail_summary(np.r_[np.zeros(90), np.arange(10.0)])
    assert mean == pytest.approx(4.5)
    assert lo == pytest.approx(0.9) and hi == pytest.approx(8.1)


def test_sweep_spec_validation():
    base = TrainConfig(SolverKind.DSC)
    with pytest.raises(ConfigurationError):
        SweepSpec("lambda", [], base)
    with pytest.raises(ConfigurationError):
        SweepSpec("lambda", [1.0, 0.5, 2.0], base)
    with pytest.raises(ConfigurationError):
        SweepSpec("sigma", [1.0], base)
    assert SweepSpec("lambda", [2.0, 1.0], base).values == [2.0, 1.0]


def test_monotonicity_violations():
    assert monotonicity_violations([0.5, 0.4, 0.405, 0.3]) == 0
    assert monotonicity_violations([0.5, 0.4, 0.45, 0.3]) == 1


def test_lambda_sweep_activity_limits():
    src = BarsSource(BarsSpec(p=4, seed=1), 32)
    base = TrainConfig.from_kv({"solver": "lca", "n_a": "5", "n_s": "100"})
    rows, violations = sweep_lambda_vs_pi(SweepSpec("lambda", [1e-3, 1.0, 1e3], base), src)
    acts = [r.metric for r in rows]
    assert acts[0] > 0.9          # vanishing threshold: dense codes
    assert acts[-1] == 0.0        # huge threshold: everything silent
    assert violations == 0


def test_single_point_sweep_equals_train():
    src = small_bars()
    base = TrainConfig.from_kv({"solver": "l0lsc", "t_max": "20", "learn_u0": "true"})
    rows = sweep_overcompleteness(SweepSpec("overcompleteness", [1.0], base), src)
    art = train(base, src)
    assert len(rows) == 1
    assert rows[0].metric == pytest.approx(art.converged_pi()[0])
    assert rows[0].extra == pytest.approx(rows[0].metric * 8)


def test_sweep_records_failures_and_continues():
    src = small_bars()
    base = TrainConfig(SolverKind.SSC, params=ModelParams(dt=0.5, sigma=0.01, tau_x=500.0),
                       t_max=1000.0)
    spec = SweepSpec("u0", [0.1, 0.2], base)
    with np.errstate(over="ignore", invalid="ignore"):
        rows, _ = run_sweep(spec, src)
    assert len(rows) == 2
    assert all(r.status.startswith("failed") for r in rows)
    assert all(math.isnan(r.metric) for r in rows)
