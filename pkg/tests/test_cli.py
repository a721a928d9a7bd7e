import csv
import json
import math

import numpy as np
import pytest

from growthflow.cli import main

EXP = "growthflow.experiment/1"


def write_config(path, **body):
    path.write_text(json.dumps({"schema": EXP, **body}))
    return path


def read_trace(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_optimize_rastrigin_1d(tmp_path):
    cfg = write_config(tmp_path / "c.json", objective={"name": "rastrigin", "dims": 1}, dynamics={"nu": 0.01})
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(cfg), "--out", str(out), "--snapshot", "0", "--snapshot", "50"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["argmax"] == [1.0]
    assert report["oracle_agreement"] is True
    assert report["stop_reason"] == "converged"
    assert (out / "snapshot_000000.csv").exists() and (out / "snapshot_000050.csv").exists()

    rows = read_trace(out / "trace.csv")
    assert list(rows[0]) == ["step", "time", "entropy", "max_mass", "argmax_x0", "expected_q", "energy"]
    last = rows[-1]
    # report numbers come straight from the trace
    assert int(last["step"]) == report["steps"]
    assert float(last["max_mass"]) == report["max_mass"]
    assert float(last["entropy"]) == report["entropy"]
    assert float(last["expected_q"]) == report["expected_q"]
    assert float(last["energy"]) == report["energy"]
    assert [float(last["argmax_x0"])] == report["argmax"]

    with open(out / "snapshot_000000.csv") as fh:
        snap = list(csv.reader(fh))
    assert snap[0] == ["x0", "h"]
    assert len(snap) == 502
    assert sum(float(h) for _, h in snap[1:]) * 0.02 == pytest.approx(1.0)


def test_optimize_constant_objective(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        objective={"name": "constant", "dims": 1},
        grid={"lower": 0, "upper": 1, "points": 21},
    )
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["stop_reason"] == "stationary"
    for row in read_trace(out / "trace.csv"):
        assert float(row["entropy"]) == pytest.approx(math.log(21), rel=1e-14)


@pytest.mark.parametrize(
    "body",
    [
        "{not json",
        json.dumps({"schema": EXP}),
        json.dumps({"schema": "other/1", "objective": {"name": "rastrigin"}}),
        json.dumps({"schema": EXP, "objective": {"name": "nope"}}),
        json.dumps({"schema": EXP, "objective": {"name": "rastrigin"}, "dynamics": {"dt": 5, "tau": 1}}),
        json.dumps({"schema": EXP, "objective": {"name": "rastrigin"}, "grid": {"lower": 1, "upper": 0, "points": 5}}),
    ],
)
def test_optimize_malformed_config(tmp_path, body, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(body)
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_optimize_table_csv_and_disagreement(tmp_path):
    (tmp_path / "q.csv").write_text("0\n1\n2\n")
    cfg = write_config(tmp_path / "c.json", objective={"table": "q.csv"}, dynamics={"nu": 0.1})
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    # with a huge nu the nu*h term dominates, so a random start that is
    # heavier on the worse cell (seed 0 gives h = (0.33, 0.67)) locks onto it
    cfg = write_config(
        tmp_path / "d.json",
        objective={"values": [0.0, 0.01]},
        dynamics={"nu": 100.0},
        init={"kind": "random", "seed": 0},
    )
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 2
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert report["oracle_agreement"] is False and report["argmax"] == [1.0]


def test_optimize_sample_measurement(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        objective={"values": [2.0, 0.0, 1.0]},
        measurement={"mode": "sample", "seed": 3},
    )
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["measurement"]["mode"] == "sample"
    assert report["measurement"]["coordinate"] in ([0.0], [1.0], [2.0])


def test_sort_linear(tmp_path):
    (tmp_path / "v.csv").write_text("3\n1\n2\n")
    out = tmp_path / "out"
    assert main(["sort", str(tmp_path / "v.csv"), "--mode", "linear", "--out", str(out)]) == 0
    with open(out / "ordering.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in rows] == [1, 2, 3]
    with open(out / "events.csv") as fh:
        events = list(csv.DictReader(fh))
    assert [e["event"] for e in events] == ["extracted"] * 3
    stats = json.loads((out / "messages.json").read_text())
    assert stats["messages_total"] == sum(2 * r["active"] * r["ticks"] for r in stats["rounds"])


def test_sort_linear_64_random(tmp_path):
    rng = np.random.default_rng(9)
    v = np.sort(rng.uniform(0, 0.5, 64)) + np.arange(64) / 128
    (tmp_path / "v.csv").write_text("\n".join(repr(float(x)) for x in rng.permutation(v)))
    assert main(["sort", str(tmp_path / "v.csv"), "--mode", "linear", "--out", str(tmp_path / "o")]) == 0


def test_sort_constant_and_config(tmp_path):
    (tmp_path / "v.csv").write_text("0.9\n0.2\n0.5\n")
    (tmp_path / "s.json").write_text(json.dumps({"schema": "growthflow.sort/1", "ramp_rate": 0.002}))
    out = tmp_path / "out"
    assert main(["sort", str(tmp_path / "v.csv"), "--mode", "constant", "--config", str(tmp_path / "s.json"), "--out", str(out)]) == 0
    with open(out / "events.csv") as fh:
        events = list(csv.DictReader(fh))
    assert [int(e["agent"]) for e in events] == [1, 2, 0]
    assert all(e["event"] == "activated" for e in events)


def test_sort_equal_values_constant_mode(tmp_path, capsys):
    (tmp_path / "v.csv").write_text("1\n1\n1\n")
    assert main(["sort", str(tmp_path / "v.csv"), "--mode", "constant", "--out", str(tmp_path / "o")]) == 3
    assert "unresolved" in capsys.readouterr().err


def test_sort_bad_config(tmp_path):
    (tmp_path / "v.csv").write_text("1\n2\n")
    (tmp_path / "s.json").write_text(json.dumps({"schema": "growthflow.sort/1", "bogus": 1}))
    assert main(["sort", str(tmp_path / "v.csv"), "--config", str(tmp_path / "s.json")]) == 1


def test_oracle_command(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", objective={"name": "rastrigin", "dims": 1})
    assert main(["oracle", "--config", str(cfg)]) == 0
    r = json.loads(capsys.readouterr().out)
    assert r["argmin_coordinates"] == [[1.0]] and r["q_min"] == 0.0

    cfg = write_config(tmp_path / "t.json", objective={"values": [0, 0, 5]})
    assert main(["oracle", "--config", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["tie"] is True

    cfg = write_config(tmp_path / "r2.json", objective={"name": "rastrigin", "dims": 2})
    assert main(["oracle", "--config", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["argmin_coordinates"] == [[1.0, 1.0]]


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "growthflow", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "optimize" in res.stdout
