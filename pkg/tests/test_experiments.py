import csv
import math

import numpy as np
import pytest

from sgcsim.datagen import SynthConfig
from sgcsim.engine import InverseLambdaStep, RunTrace
from sgcsim.experiments import (
    AutoL2Step,
    CsvSource,
    ExperimentConfig,
    error_floor,
    read_traces,
    run_experiment,
    summarize,
    l2_bound_check,
    strongly_convex_bound_check,
    write_traces,
)


def small_cfg(**kw):
    base = dict(
        data=SynthConfig(m=60, ell=4, feature_std=1.0),
        n=6, d=2, schemes=("SGC", "BGC", "ErasureHead", "IgnoreStragglers"),
        p_values=(0.0, 0.5), nu_values=(1, 3), T=50, repetitions=2, floor_window=10,
        batch_columns=7,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_error_floor_examples():
    assert error_floor(np.full(20, 3.5), 7) == 3.5
    assert error_floor(np.array([9.0, 1.0, 2.0, 4.0]), 1) == 4.0
    assert error_floor(np.array([9.0, 2.0, 4.0]), 2) == 3.0
    with pytest.raises(ValueError):
        error_floor(np.array([]), 1)
    with pytest.raises(ValueError):
        error_floor(np.ones(3), 4)


def test_write_traces_examples(tmp_path):
    tr = RunTrace("SGC", 0.5, 1, 0, np.array([1.0, 0.5, 0.25]))
    tpath, spath = write_traces([tr], summarize([tr], 2), tmp_path)
    lines = tpath.read_text().splitlines()
    assert lines[0] == "scheme,p,nu,run,iteration,error"
    assert lines[1:] == ["SGC,0.5,1,0,0,1", "SGC,0.5,1,0,1,0.5", "SGC,0.5,1,0,2,0.25"]
    assert spath.read_text().splitlines() == [
        "scheme,p,nu,mean_final_error,mean_floor_error",
        "SGC,0.5,1,0.25,0.375",
    ]
    empty = tmp_path / "empty"
    tpath, spath = write_traces([], [], empty)
    assert tpath.read_text() == "scheme,p,nu,run,iteration,error\n"
    assert spath.read_text() == "scheme,p,nu,mean_final_error,mean_floor_error\n"


def test_write_traces_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_traces([], [], blocker / "sub")


def test_seventeen_digit_round_trip(tmp_path):
    e = np.array([1 / 3, math.pi, 1e-300, 2.0**-40])
    write_traces([RunTrace("SGC", 0.1, 1, 0, e)], [], tmp_path)
    back = read_traces(tmp_path / "traces.csv")[0]
    assert np.array_equal(back.errors, e)


def test_single_cell_summary_equals_trace():
    cfg = small_cfg(schemes=("SGC",), p_values=(0.3,), nu_values=(1,), repetitions=1)
    res = run_experiment(cfg)
    assert len(res.traces) == 1 and len(res.summary) == 1
    tr, row = res.traces[0], res.summary[0]
    assert np.array_equal(row.mean_trace, tr.errors)
    assert row.mean_final_error == tr.errors[-1]
    assert row.mean_floor_error == error_floor(tr, cfg.floor_window)


def test_summary_round_trip_through_files(tmp_path):
    res = run_experiment(small_cfg())
    write_traces(res.traces, res.summary, tmp_path)
    traces = read_traces(tmp_path / "traces.csv")
    with (tmp_path / "summary.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 * 2 * 2
    for row in rows:
        mine = [t for t in traces if (t.scheme, t.p, t.nu) == (row["scheme"], float(row["p"]), int(row["nu"]))]
        assert len(mine) == 2
        final = np.mean([t.errors[-1] for t in mine])
        floor = np.mean([t.errors[-10:].mean() for t in mine])
        assert float(row["mean_final_error"]) == pytest.approx(final, rel=1e-12)
        assert float(row["mean_floor_error"]) == pytest.approx(floor, rel=1e-12)


def test_deterministic_and_thread_independent(tmp_path):
    cfg = small_cfg()
    a = run_experiment(cfg, threads=1)
    b = run_experiment(cfg, threads=3)
    write_traces(a.traces, a.summary, tmp_path / "a")
    write_traces(b.traces, b.summary, tmp_path / "b")
    for name in ("traces.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_adding_a_scheme_leaves_other_cells_unchanged():
    a = run_experiment(small_cfg(schemes=("SGC",)))
    b = run_experiment(small_cfg(schemes=("IgnoreStragglers", "SGC")))
    sgc_b = [t for t in b.traces if t.scheme == "SGC"]
    assert len(sgc_b) == len(a.traces)
    for x, y in zip(sorted(a.traces, key=lambda t: (t.p, t.nu, t.run)), sorted(sgc_b, key=lambda t: (t.p, t.nu, t.run))):
        assert np.allclose(x.errors, y.errors, rtol=1e-12)


def test_divergent_cell_is_recorded_and_others_survive():
    cfg = small_cfg(schemes=("SGC", "IgnoreStragglers"), schedule=InverseLambdaStep(1e-30),
                    p_values=(0.5,), nu_values=(1,), T=400)
    res = run_experiment(cfg)
    assert res.failures and not res.traces
    assert all(r.failed == r.runs + r.failed for r in res.summary)
    ok = small_cfg(p_values=(0.5,), nu_values=(1,))
    assert not run_experiment(ok).failures


def test_config_dict_round_trip():
    cfg = small_cfg(schedule=AutoL2Step(0.1))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    csv_cfg = ExperimentConfig(data=CsvSource("x.csv", True))
    assert ExperimentConfig.from_dict(csv_cfg.to_dict()).data == CsvSource("x.csv", True)


@pytest.mark.parametrize(
    "kw",
    [dict(repetitions=0), dict(p_values=(1.0,)), dict(nu_values=(0,)), dict(schemes=("Nope",)), dict(d=11)],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        small_cfg(**kw)


def test_unknown_config_keys_rejected():
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({"repetitons": 3})


def test_csv_data_source(tmp_path):
    r = np.random.default_rng(0)
    X = r.standard_normal((30, 3))
    y = X @ np.array([1.0, 2.0, 3.0]) + 0.1 * r.standard_normal(30)
    f = tmp_path / "d.csv"
    np.savetxt(f, np.column_stack([X, y]), delimiter=",")
    cfg = small_cfg(data=CsvSource(str(f)), schemes=("SGC",), p_values=(0.2,), nu_values=(1,), T=200,
                    schedule=AutoL2Step(0.1))
    res = run_experiment(cfg)
    assert res.traces[0].errors[-1] < res.traces[0].errors[0]


def test_l2_bound_check_small():
    c = l2_bound_check(runs=50)
    assert c.holds and c.T == 10


def test_strongly_convex_bound_check_small():
    checks = strongly_convex_bound_check(T_grid=(100, 200), runs=20)
    assert all(c.mean_sq_error <= c.bound for c in checks)


def test_send_all_floor_not_above_sgc_on_default_recipe():
    from dataclasses import replace

    from sgcsim.cli import load_config, shipped_config

    cfg, _ = load_config(shipped_config("paper_fig2.cfg"))
    cfg = replace(cfg, schemes=("SGC", "SGCSendAll"), p_values=(0.1, 0.3, 0.5), repetitions=4)
    table = {(r.scheme, r.p): r.mean_floor_error for r in run_experiment(cfg).summary}
    for p in cfg.p_values:
        assert table[("SGCSendAll", p)] <= table[("SGC", p)]
