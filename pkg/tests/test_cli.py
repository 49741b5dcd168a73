import json
import math
import os
from pathlib import Path

import pytest

from batchregret import experiments
from batchregret.cli import main
from batchregret.config import Config, ConfigError, ell_from_rule, sweep_grid
from batchregret.experiments import render_csv, write_atomic
from batchregret.predictors import AddBeta, AlphaNML, Mixture


def _write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _data_lines(path):
    return [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]


class TestConfig:
    def test_error_names_line(self, tmp_path):
        p = _write(tmp_path, "setup:\n  n: 2\n  ell: 2\ndelta: 0.7\n")
        cfg = Config.load(p)
        with pytest.raises(ConfigError, match=rf"{p.name}:4: delta"):
            cfg.delta()

    def test_error_names_nested_line(self, tmp_path):
        p = _write(tmp_path, "setup:\n  n: 2\n  ell: two\n")
        with pytest.raises(ConfigError, match=r"run.yaml:3: setup.ell: must be an integer"):
            Config.load(p).setup()

    def test_error_names_override(self, tmp_path):
        p = _write(tmp_path, "setup:\n  n: 2\n  ell: 2\n")
        cfg = Config.load(p, ["setup.n=-3"])
        with pytest.raises(ConfigError, match=r"--set setup.n=-3"):
            cfg.setup()

    def test_invalid_yaml_line(self, tmp_path):
        p = _write(tmp_path, "setup:\n  n: 2\n  ell: [1,\n")
        with pytest.raises(ConfigError, match=r"run.yaml:\d+: invalid YAML"):
            Config.load(p)

    def test_ell_rule(self):
        cfg = Config.load(None, ["setup.n=9", "setup.ell_rule.gamma=0.5"])
        assert cfg.setup().ell == 3
        assert ell_from_rule(16, 1.0) == 16 and ell_from_rule(2, 0.1) == 1
        with pytest.raises(ConfigError, match="gamma"):
            Config.load(None, ["setup.n=9", "setup.ell_rule.gamma=0"]).setup()

    def test_grid_forms(self):
        assert Config.load(None).grid().size == 81  # default [0.1, 0.9] step 0.01
        assert Config.load(None, ["grid=[0.2, 0.4]"]).grid().size == 2
        assert Config.load(None, ["grid.size=5", "grid.lo=0", "grid.hi=1"]).grid().points[:, 1].tolist() == [
            0.0, 0.25, 0.5, 0.75, 1.0]
        g = Config.load(None, ["grid.lo=0.1", "grid.hi=0.9", "grid.step=0.02"]).grid()
        assert g.size == 41 and g.points[-1, 1] == pytest.approx(0.9)
        with pytest.raises(ConfigError):
            Config.load(None, ["grid=[0.2, 0.2]"]).grid()

    def test_sweep_grid_endpoints(self):
        g = sweep_grid(0.1, 0.9, 0.01)
        assert g.points[0, 1] == 0.1 and g.points[-1, 1] == 0.9

    def test_predictors(self):
        setup = Config.load(None, ["setup.n=1", "setup.ell=1"]).setup()
        grid = Config.load(None, ["grid=[0.2, 0.8]"]).grid()
        assert isinstance(Config.load(None).predictor(setup, grid), AddBeta)
        mix = Config.load(None, ["predictor.type=mixture", "predictor.prior.type=explicit",
                                 "predictor.prior.weights=[1, 3]"]).predictor(setup, grid)
        assert isinstance(mix, Mixture) and mix.prior.weights.tolist() == [0.25, 0.75]
        nml = Config.load(None, ["predictor.type=alpha_nml", "predictor.alpha=3",
                                 "predictor.prior.type=dirichlet", "predictor.prior.beta=0.5"]).predictor(setup, grid)
        assert isinstance(nml, AlphaNML) and nml.prior.grid.size == 64
        with pytest.raises(ConfigError, match="predictor.type"):
            Config.load(None, ["predictor.type=nml"]).predictor(setup, grid)

    def test_resolved_drops_execution_keys(self):
        cfg = Config.load(None, ["workers=4", "output=x.csv", "setup.n=1"])
        assert cfg.resolved() == {"setup": {"n": 1}}


class TestAtomicWrite:
    def test_writes(self, tmp_path):
        target = tmp_path / "sub" / "out.csv"
        write_atomic(target, "a,b\n1,2\n")
        assert target.read_text() == "a,b\n1,2\n"

    def test_failure_leaves_old_file(self, tmp_path, monkeypatch):
        target = tmp_path / "out.csv"
        target.write_text("old\n")

        def boom(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(experiments.os, "replace", boom)
        with pytest.raises(OSError):
            write_atomic(target, "new\n")
        assert target.read_text() == "old\n"
        assert os.listdir(tmp_path) == ["out.csv"]

    def test_stdout(self, capsys):
        write_atomic("-", "x\n")
        assert capsys.readouterr().out == "x\n"


def test_render_csv():
    text = render_csv(["# a: 1"], ("x", "y"), [["1", "2"]])
    assert text == "# a: 1\nx,y\n1,2\n"


class TestRegretCommand:
    def test_byte_identical_across_workers(self, tmp_path):
        cfg = _write(tmp_path, "setup:\n  n: 6\n  ell: 6\npredictor:\n  type: add_beta\n  beta: 0.5\n")
        a, b = tmp_path / "w1.csv", tmp_path / "w8.csv"
        assert main(["regret", "-c", str(cfg), "--workers", "1", "-o", str(a)]) == 0
        assert main(["regret", "-c", str(cfg), "--workers", "8", "-o", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_header_echoes_config(self, tmp_path):
        out = tmp_path / "r.csv"
        assert main(["regret", "--set", "setup.n=2", "--set", "setup.ell=2", "--set", "workers=3", "-o", str(out)]) == 0
        text = out.read_text()
        assert "# command: regret" in text and "#   n: 2" in text
        assert "workers" not in text
        header = _data_lines(out)[0]
        assert header == "theta_index,theta_repr,alpha,n,ell,regret_nats,regret_bits"
        assert len(_data_lines(out)) == 1 + 81

    def test_singleton_point_mixture(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        rc = main(["regret", "--set", "setup.n=2", "--set", "setup.ell=2", "--set", "grid=[0.3]",
                   "--set", "predictor.type=mixture", "-o", str(out)])
        assert rc == 0
        row = _data_lines(out)[1].split(",")
        assert float(row[5]) == 0.0
        assert "max regret 0 nats at theta_index 0" in capsys.readouterr().out

    def test_envelope_example(self, tmp_path):
        out = tmp_path / "r.csv"
        assert main(["regret", "--set", "setup.n=8", "--set", "setup.ell=8", "--set", "grid.lo=0.1",
                     "--set", "grid.hi=0.9", "--set", "grid.step=0.02", "-o", str(out)]) == 0
        vals = [float(r.split(",")[5]) for r in _data_lines(out)[1:]]
        assert abs(max(vals) - 0.5 * math.log(1 + 1 / 8)) * 64 <= 2.0

    def test_bits_summary(self, tmp_path, capsys):
        main(["regret", "--set", "setup.n=1", "--set", "setup.ell=1", "--set", "grid=[0.5]",
              "--unit", "bits", "-o", str(tmp_path / "r.csv")])
        assert "bits" in capsys.readouterr().out

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = _write(tmp_path, "setup:\n  n: 2\n  ell: 2\nalpha: 0.5\n")
        assert main(["regret", "-c", str(cfg), "-o", str(tmp_path / "r.csv")]) == 1
        assert "run.yaml:4: alpha" in capsys.readouterr().err
        assert not (tmp_path / "r.csv").exists()

    def test_missing_config_file(self, tmp_path):
        assert main(["regret", "-c", str(tmp_path / "nope.yaml")]) == 1


class TestCapacityCommand:
    def test_singleton(self, tmp_path):
        out = tmp_path / "c.json"
        assert main(["capacity", "--set", "setup.n=1", "--set", "setup.ell=1", "--set", "grid=[0.4]", "-o", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["capacity_nats"] == 0.0 and data["saddle"]["status"] == "PASS"

    def test_three_point(self, tmp_path):
        out = tmp_path / "c.json"
        rc = main(["capacity", "--set", "setup.n=1", "--set", "setup.ell=1", "--set", "grid=[0.2, 0.5, 0.8]",
                   "--set", "tol=1e-7", "--unit", "bits", "-o", str(out)])
        assert rc == 0
        data = json.loads(out.read_text())
        assert data["converged"] and data["saddle"]["status"] == "PASS"
        assert data["capacity_bits"] == pytest.approx(data["capacity_nats"] / math.log(2))
        assert [p["theta_repr"] for p in data["prior"]] == ["0.20000000000000001", "0.5", "0.80000000000000004"]
        assert data["config"]["grid"] == [0.2, 0.5, 0.8]

    def test_alpha_two(self, tmp_path):
        out = tmp_path / "c.json"
        rc = main(["capacity", "--set", "setup.n=1", "--set", "setup.ell=1", "--set", "grid=[0.2, 0.8]",
                   "--set", "alpha=2", "-o", str(out)])
        assert rc == 0 and json.loads(out.read_text())["alpha"] == 2.0

    def test_convergence_failure_exit(self, tmp_path):
        out = tmp_path / "c.json"
        rc = main(["capacity", "--set", "setup.n=2", "--set", "setup.ell=2", "--set", "grid=[0.1, 0.3, 0.6, 0.9]",
                   "--set", "max_iter=2", "--set", "tol=1e-12", "-o", str(out)])
        assert rc == 2
        assert json.loads(out.read_text())["converged"] is False

    def test_refinement(self, tmp_path):
        out = tmp_path / "c.json"
        rc = main(["capacity", "--set", "setup.n=1", "--set", "setup.ell=1", "--set", "grid=[0.2, 0.8]",
                   "--set", "refine.sizes=[2, 3]", "--set", "refine.lo=0.1", "--set", "refine.hi=0.9", "-o", str(out)])
        assert rc == 0
        ref = json.loads(out.read_text())["refinement"]
        assert [r["size"] for r in ref] == [2, 3]
        assert ref[1]["capacity_nats"] >= ref[0]["capacity_nats"] - 1e-9


class TestOtherCommands:
    def test_limits(self, tmp_path):
        out = tmp_path / "l.csv"
        rc = main(["limits", "--set", "setup.n=2", "--set", "setup.ell=2", "--set", "theta=0.4", "-o", str(out)])
        assert rc == 0
        text = out.read_text()
        batch = float(text.split("# batch_regret_nats: ")[1].split("\n")[0])
        worst = float(text.split("# worst_case_regret_nats: ")[1].split("\n")[0])
        vals = [float(r.split(",")[1]) for r in _data_lines(out)[1:]]
        assert vals[0] == batch
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert 0 <= worst - vals[-1] <= 0.05

    def test_limits_needs_theta(self, tmp_path):
        assert main(["limits", "--set", "setup.n=1", "--set", "setup.ell=1"]) == 1

    def test_lowerbound(self, tmp_path):
        out, audit = tmp_path / "lb.csv", tmp_path / "audit.csv"
        rc = main(["lowerbound", "--set", "ns=[2, 4]", "--set", "ell_rule.gamma=1", "-o", str(out),
                   "--audit-output", str(audit)])
        assert rc == 0
        rows = _data_lines(out)
        assert rows[0].split(",") == list(experiments.LowerBoundRow.COLUMNS)
        for r in rows[1:]:
            cells = r.split(",")
            assert float(cells[2]) <= float(cells[3])
        audit_rows = _data_lines(audit)[1:]
        assert audit_rows and all(r.endswith(",1") for r in audit_rows)

    def test_lowerbound_rejects_zero_n(self):
        assert main(["lowerbound", "--set", "ns=[0, 4]"]) == 1

    def test_oracle_check(self, tmp_path):
        out = tmp_path / "o.txt"
        assert main(["oracle-check", "--set", "ns=[0, 1]", "--set", "ells=[1, 2]", "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines and all(ln.startswith("PASS") for ln in lines)

    def test_oracle_mismatch_exit(self, tmp_path, monkeypatch):
        real = experiments.oracle_worst_case_regret
        monkeypatch.setattr(experiments, "oracle_worst_case_regret", lambda pred, pt: real(pred, pt) + 1e-6)
        out = tmp_path / "o.txt"
        assert main(["oracle-check", "--set", "ns=[1]", "--set", "ells=[1]", "-o", str(out)]) == 4
        assert "FAIL worst_case_regret" in out.read_text()

    def test_oracle_size_guard_exit(self):
        assert main(["oracle-check", "--set", "ns=[5]", "--set", "ells=[3]"]) == 3

    def test_bad_workers(self):
        assert main(["regret", "--workers", "0", "--set", "setup.n=1", "--set", "setup.ell=1"]) == 1


class TestExperiments:
    def test_uniform_prior_information_closed_form(self):
        # I_w = E log p_theta(y) - E log p_hat_1(y|x) with the uniform prior:
        # the first term is -ell/2, the second a Beta-integral sum over classes
        from batchregret.source import BatchSetup

        def log_beta(a, b):
            return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)

        for n, ell in [(1, 1), (2, 3), (4, 4), (6, 2)]:
            t = n * ell
            acc = 0.0
            for t1 in range(t + 1):
                for l1 in range(ell + 1):
                    t0, l0 = t - t1, ell - l1
                    mass = math.comb(t, t1) * math.comb(ell, l1) * math.exp(log_beta(t1 + l1 + 1, t0 + l0 + 1))
                    log_pred = log_beta(t1 + l1 + 1, t0 + l0 + 1) - log_beta(t1 + 1, t0 + 1)
                    acc += mass * log_pred
            want = -ell / 2 - acc
            # the predictive is integrated exactly, theta*log(theta) is not
            coarse = experiments.uniform_prior_information(BatchSetup(n, ell))
            fine = experiments.uniform_prior_information(BatchSetup(n, ell), 256)
            assert abs(coarse - want) <= 1e-7 * ell
            assert abs(fine - want) <= 1e-9 * ell
            assert abs(fine - want) < abs(coarse - want)

    def test_exact_quadrature_size(self):
        from batchregret.source import BatchSetup

        assert experiments.exact_quadrature_size(BatchSetup(4, 4)) == 64
        assert experiments.exact_quadrature_size(BatchSetup(32, 32)) == (1024 + 32 + 2) // 2

    def test_check_line_format(self):
        line = experiments.CheckLine("batch_regret", 3e-12, 1e-10)
        assert str(line).startswith("PASS batch_regret")
        assert not experiments.CheckLine("x", 1.0, 1e-10).passed
