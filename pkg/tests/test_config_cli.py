import json
import math

import numpy as np
import pytest

from critmax import cli
from critmax.config import ConfigError, parse_config
from critmax.reporting import dumps, read_csv, write_csv

TINY = """
[run]
seed = 11
output = {out}
workers = {workers}

[model]
family = {family}

[sim]
max_depth = 20
prune_log_weight = -4
replicas = 600

[tail]
alpha_t_lo = 2
alpha_t_hi = 20

[poisson]
x_lo = -4
x_hi = 6
step = 0.1
draws = 1024
groups = 8

[walk]
ladder_budget = 2000
tilt_draws = 20000
w_budget = 500
w_max_steps = 2000

[verify]
m2o_mode = {mode}
m2o_n = 1, 2
m2o_budget = 200
nt_depth = 15
nt_replicas = 1000
nt_walk_budget = 2000
"""


def write_cfg(tmp_path, name="cfg.ini", workers=1, family="LognormalFixedN", mode="mc", out=None):
    out = out or tmp_path / "out"
    p = tmp_path / name
    p.write_text(TINY.format(out=out, workers=workers, family=family, mode=mode))
    return p


@pytest.mark.parametrize("text", [
    "[run]\nseed = 1\n[bogus]\n",
    "[run]\nseed = 1\nturbo = 1\n",
    "[run]\noutput = x\n",
    "[run]\nseed = 1\n[sim]\nreplicas = 0\n",
    "[run]\nseed = 1\nworkers = 0\n",
    "[run]\nseed = 1\n[model]\nfamily = LognormalFixedN\nstep_df = 3\n",
    "[run]\nseed = 1\n[model]\nb_law = gamma 2\n",
    "[run]\nseed = 1.5\n",
    "[run]\nseed = 1\n[tail]\nwindow = 5, 2\n",
    "[run]\nseed = 1\n[verify]\nm2o_mode = maybe\n",
])
def test_strict_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_defaults_and_resolved_view():
    cfg = parse_config("[run]\nseed = 3\nworkers = 4\n")
    assert cfg.sim.replicas == 200_000 and cfg.model.params == {"b": 2, "sigma": 1.0}
    resolved = cfg.resolved()
    assert "workers" not in resolved["run"] and resolved["run"]["seed"] == 3
    assert json.loads(cfg.resolved_json()) == json.loads(json.dumps(resolved))


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\n")
    assert cli.main(["calibrate", str(bad)]) == cli.CONFIG_ERROR
    assert cli.main(["calibrate", str(tmp_path / "missing.ini")]) == cli.CONFIG_ERROR


def test_report_without_artifacts_exits_2(tmp_path):
    assert cli.main(["report", str(write_cfg(tmp_path))]) == cli.CONFIG_ERROR


def test_poisson_without_sample_exits_2(tmp_path):
    assert cli.main(["poisson", str(write_cfg(tmp_path))]) == cli.CONFIG_ERROR


def test_calibrate_two_point(tmp_path):
    cfg = write_cfg(tmp_path, family="TwoPointFixedN", mode="exact")
    assert cli.main(["calibrate", str(cfg)]) == cli.OK
    d = json.loads((tmp_path / "out" / "calibrate.json").read_text())
    assert d["schema_version"] == 1 and d["oracle"]["pass"]
    assert d["config"]["model"]["family"] == "TwoPointFixedN"


def test_m2o_exact_via_cli(tmp_path):
    cfg = write_cfg(tmp_path, family="TwoPointFixedN", mode="exact")
    assert cli.main(["verify-m2o", str(cfg)]) == cli.OK


DETERMINISTIC = ["calibrate", "simulate", "tail", "verify-nt", "poisson", "renewal"]


def run_all(cfg):
    for sub in DETERMINISTIC:
        assert cli.main([sub, str(cfg)]) in (cli.OK, cli.FAILED)


def test_artifacts_are_byte_identical_across_runs_and_workers(tmp_path):
    a = write_cfg(tmp_path, "a.ini", workers=1, out=tmp_path / "shared")
    run_all(a)
    first = {p.name: p.read_bytes() for p in (tmp_path / "shared").iterdir()}
    assert {"simulate.csv", "tail.csv", "poisson.csv", "renewal.json"} <= set(first)
    run_all(write_cfg(tmp_path, "b.ini", workers=2, out=tmp_path / "shared"))
    second = {p.name: p.read_bytes() for p in (tmp_path / "shared").iterdir()}
    assert first == second


def test_csv_round_trip(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.1), (2, math.pi)], '{"k":1}')
    lines = p.read_text().splitlines()
    assert lines[0] == "# schema_version: 1" and lines[1] == '# config: {"k":1}'
    header, data = read_csv(p)
    assert header == ["a", "b"] and data[1, 1] == math.pi


def test_json_handles_numpy_and_nonfinite():
    doc = json.loads(dumps({"b": np.float64(np.inf), "a": np.arange(2), "c": np.bool_(True)}))
    assert doc == {"a": [0, 1], "b": "inf", "c": True}
