from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from bvss.cli import main
from bvss.panel import write_panel
from conftest import make_panel


@pytest.fixture
def panel_csv(tmp_path):
    p = make_panel(M=20, N=5, M_post=6, seed=1)
    path = tmp_path / "panel.csv"
    write_panel(p, path)
    return path


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


class TestFit:
    def test_outputs(self, tmp_path, panel_csv):
        out = tmp_path / "o"
        rc = main(["fit", "--data", str(panel_csv), "--treatment-at", "20", "--out", str(out),
                   "--iters", "60", "--burnin", "20", "--seed", "3"])
        assert rc == 0
        assert set(_files(out)) == {"trace.csv", "summary.json", "counterfactual.csv"}
        s = json.loads((out / "summary.json").read_text())
        assert s["metadata"]["seed"] == 3 and "config_hash" in s["metadata"]
        assert s["metadata"]["panel"] == {"N": 5, "M": 20, "M_post": 6}
        assert len(s["inclusion"]) == 5
        trace = (out / "trace.csv").read_text().splitlines()
        assert trace[0] == "# seed=3" and trace[2].startswith("# version=")
        assert len(trace) == 3 + 1 + 40
        cf = list(csv.reader((out / "counterfactual.csv").read_text().splitlines()[3:]))
        assert cf[0] == ["time", "period", "observed", "counterfactual_mean", "lo", "hi"]
        assert len(cf) == 27 and cf[-1][1] == "post"

    def test_deterministic(self, tmp_path, panel_csv):
        args = ["fit", "--data", str(panel_csv), "--treatment-at", "20", "--iters", "50", "--burnin", "10"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert _files(tmp_path / "a") == _files(tmp_path / "b")

    def test_config_and_flag_precedence(self, tmp_path, panel_csv):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "data": str(panel_csv), "treatment_at": 20, "iters": 40, "burnin": 10,
            "seed": 1, "hyperparams": {"theta": 0.25},
        }))
        out = tmp_path / "o"
        assert main(["fit", "--config", str(cfg), "--out", str(out), "--seed", "9", "--theta", "0.3"]) == 0
        s = json.loads((out / "summary.json").read_text())
        assert s["metadata"]["seed"] == 9
        assert s["metadata"]["hyperparams"]["theta"] == 0.3
        assert s["diagnostics"]["n_draws"] == 30

    def test_baselines_in_summary(self, tmp_path, panel_csv):
        out = tmp_path / "o"
        assert main(["fit", "--data", str(panel_csv), "--treatment-at", "20", "--out", str(out),
                     "--iters", "30", "--burnin", "10", "--methods", "bvs_ss,ols,qp,lasso"]) == 0
        s = json.loads((out / "summary.json").read_text())
        assert set(s["baselines"]) == {"ols", "qp", "lasso"}


class TestErrors:
    def _run(self, capsys, args):
        rc = main(args)
        err = capsys.readouterr().err.strip().splitlines()
        return rc, err

    def test_missing_file(self, capsys, tmp_path):
        rc, err = self._run(capsys, ["fit", "--data", str(tmp_path / "x.csv"), "--treatment-at", "3"])
        assert rc != 0 and len(err) == 1 and err[0].startswith("error: code=io ")

    def test_bounds(self, capsys, panel_csv):
        rc, err = self._run(capsys, ["fit", "--data", str(panel_csv), "--treatment-at", "26"])
        assert rc != 0 and err[0].startswith("error: code=bounds ")

    def test_parse(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,y,a,b\n1,1,2,3\n2,NA,5,6\n")
        rc, err = self._run(capsys, ["fit", "--data", str(bad), "--treatment-at", "1"])
        assert rc != 0 and err[0].startswith("error: code=parse ")

    def test_missing_required(self, capsys, panel_csv):
        rc, err = self._run(capsys, ["fit", "--data", str(panel_csv)])
        assert rc != 0 and err[0].startswith("error: code=config ")

    def test_bad_config(self, capsys, tmp_path):
        c = tmp_path / "c.json"
        c.write_text("{not json")
        rc, err = self._run(capsys, ["simulate", "--config", str(c)])
        assert rc != 0 and err[0].startswith("error: code=config ")
        c.write_text(json.dumps({"hyperparams": {"theta": 2.0}}))
        rc, err = self._run(capsys, ["simulate", "--config", str(c)])
        assert rc != 0 and "theta" in err[0]

    def test_unknown_method(self, capsys, panel_csv):
        rc, err = self._run(capsys, ["fit", "--data", str(panel_csv), "--treatment-at", "5", "--methods", "ridge"])
        assert rc != 0 and err[0].startswith("error: code=config ")


class TestSimulate:
    def _cfg(self, tmp_path, **extra):
        c = tmp_path / "sim.json"
        c.write_text(json.dumps({"dgp": {"M": 25, "M_post": 8, "N": 6, "J": 2}, "n_rep": 2,
                                 "iters": 30, "burnin": 10, **extra}))
        return c

    def test_oracle_only(self, tmp_path):
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(self._cfg(tmp_path)), "--out", str(out),
                     "--methods", "oracle_ols", "--threads", "1"]) == 0
        rows = list(csv.reader((out / "metrics.csv").read_text().splitlines()[3:]))
        assert ["oracle_ols", "re", "1.0", "all"] in rows
        s = json.loads((out / "summary.json").read_text())
        assert s["methods"]["oracle_ols"]["re"] == 1.0

    def test_reproducible_across_threads(self, tmp_path):
        c = self._cfg(tmp_path)
        assert main(["simulate", "--config", str(c), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert main(["simulate", "--config", str(c), "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
        assert _files(tmp_path / "a") == _files(tmp_path / "b")


class TestBenchmark:
    def test_runs(self, tmp_path, capsys):
        c = tmp_path / "b.json"
        c.write_text(json.dumps({"dgp": {"M": 20, "M_post": 5, "N": 5, "J": 2}, "iters": 20, "burnin": 5}))
        assert main(["benchmark", "--config", str(c), "--out", str(tmp_path / "o")]) == 0
        text = capsys.readouterr().out
        assert "pair_updates_per_sec" in text and "ess_per_sec_tau" in text


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bvss", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("bvss ")
