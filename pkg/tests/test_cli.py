import io

import pytest
import yaml

from sgcsim.cli import main, shipped_config

SMALL = ["--set", "data.synthetic.m=60", "--set", "data.synthetic.ell=4", "--set", "T=40",
         "--set", "repetitions=2", "--set", "p_values=[0.0,0.4]"]


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def test_shipped_configs_parse():
    for name in ("paper_fig2.cfg", "paper_fig4.cfg", "consistent_l2.cfg"):
        assert shipped_config(name).exists()
        code, out = run(["inspect-assignment", "--config", str(shipped_config(name)), "--set", "T=1"])
        assert code == 0


def test_overrides_are_echoed(tmp_path):
    code, out = run(["sweep", "--out", str(tmp_path), "--seed", "77", *SMALL])
    assert code == 0
    echoed = yaml.safe_load(out.split("---\n")[0])
    assert echoed["T"] == 40 and echoed["seed"] == 77
    assert echoed["data"]["synthetic"]["m"] == 60 and echoed["p_values"] == [0.0, 0.4]
    assert (tmp_path / "traces.csv").exists() and (tmp_path / "summary.csv").exists()


def test_p_zero_runs_agree():
    base = ["run", "--p", "0", *SMALL]
    _, a = run(base + ["--scheme", "SGC"])
    _, b = run(base + ["--scheme", "ExactGD"])
    fa = float(a.split("final_error=")[1])
    fb = float(b.split("final_error=")[1])
    assert abs(fa - fb) <= 1e-9


def test_bounds_consistent_system(tmp_path):
    code, out = run(["bounds", "--config", str(shipped_config("consistent_l2.cfg")), "--out", str(tmp_path)])
    assert code == 0
    line = [l for l in out.splitlines() if l.startswith("p=0.2")][0]
    t3 = float(line.split("thm3_bound=")[1].split()[0])
    norm_sq = float(out.split("||beta0-beta*||^2=")[1].split()[0])
    assert t3 == pytest.approx(0.01 * norm_sq, rel=1e-9)


def test_bounds_reports_empirical_after_sweep(tmp_path):
    cfg = str(shipped_config("consistent_l2.cfg"))
    assert run(["sweep", "--config", cfg, "--out", str(tmp_path), "--set", "repetitions=20"])[0] == 0
    code, out = run(["bounds", "--config", cfg, "--out", str(tmp_path)])
    assert code == 0 and "empirical_sq_error[nu=1]=" in out


def test_inspect_assignment_output():
    code, out = run(["inspect-assignment", *SMALL])
    assert code == 0
    assert "avg_degree=" in out and "overlap mean=" in out
    assert out.strip().splitlines()[-1].startswith("59,")


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep", "--bogus"],
        ["frobnicate"],
        ["run", "--config", "/nonexistent/x.cfg"],
        ["run", "--set", "n=0"],
        ["run", "--set", "nokey"],
        ["run", "--threads", "0"],
        ["run", "--seed", "-3"],
        ["run", "--p", "1.5"],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv, out=io.StringIO()) == 1
    assert capsys.readouterr().err.strip()


def test_bad_yaml_is_usage_error(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("T: [1,\n")
    assert main(["run", "--config", str(f)], out=io.StringIO()) == 1


def test_divergence_exit_2(tmp_path, capsys):
    argv = ["run", *SMALL, "--set", "T=500", "--p", "0.4",
            "--set", "schedule={kind: inverse_lambda_t, lambda: 1.0e-30}"]
    assert main(argv, out=io.StringIO()) == 2
    assert "diverge" in capsys.readouterr().err
