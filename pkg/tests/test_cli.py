import subprocess
import sys

import numpy as np
import pytest

from ljsr import cli, recovery
from ljsr.fmx import read_fmx, write_fmx
from ljsr.model import numerical_rank
from ljsr.sampling import read_kv


def run(*args):
    return cli.main([str(a) for a in args])


def csv_rows(path):
    lines = path.read_text().strip().splitlines()
    head = lines[0].split(",")
    return head, [dict(zip(head, l.split(","))) for l in lines[1:]]


SMALL = ["--nx", 16, "--ny", 16, "--N", 12, "--period", 3, "--clusters", 4,
         "--rank", 3, "--max_outer", 300]


class TestPhantom:
    def test_rank_six(self, tmp_path):
        assert run("phantom", "--nx", 32, "--ny", 32, "--N", 60, "--period", 6,
                   "--seed", 1, "--out", tmp_path) == 0
        X = read_fmx(tmp_path / "X.fmx")
        assert X.shape == (1024, 60) and numerical_rank(X) == 6
        assert read_kv(tmp_path / "meta")["rank"] == "6"

    def test_period_one(self, tmp_path):
        assert run("phantom", "--nx", 8, "--ny", 8, "--N", 5, "--period", 1,
                   "--out", tmp_path) == 0
        assert numerical_rank(read_fmx(tmp_path / "X.fmx")) == 1

    def test_random_model(self, tmp_path):
        assert run("phantom", "--n", 20, "--N", 8, "--r", 2, "--k", 5, "--out", tmp_path) == 0
        X = read_fmx(tmp_path / "X.fmx")
        assert numerical_rank(X) == 2
        assert np.sum(np.linalg.norm(X, axis=1) > 0) == 5

    def test_missing_key(self, tmp_path, capsys):
        assert run("phantom", "--nx", 8, "--ny", 8, "--N", 5, "--out", tmp_path) == 2
        assert "'period'" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        assert run("phantom", "--nx", 8, "--ny", 8, "--N", 5, "--period", 1,
                   "--perod", 2, "--out", tmp_path) == 2
        assert "perod" in capsys.readouterr().err

    def test_invalid_value(self, tmp_path, capsys):
        assert run("phantom", "--nx", 2, "--ny", 8, "--N", 5, "--period", 1,
                   "--out", tmp_path) == 2
        assert "'nx'" in capsys.readouterr().err


class TestConfig:
    def test_file_with_comments_and_override(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("# phantom setup\nnx = 8\nny = 8  # inline\nN = 6\nperiod = 2\n")
        assert run("phantom", "--config", cfg, "--period", 3, "--out", tmp_path) == 0
        assert numerical_rank(read_fmx(tmp_path / "X.fmx")) == 3

    def test_bad_line(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("nx 8\n")
        assert run("phantom", "--config", cfg) == 2

    def test_missing_file(self, tmp_path):
        assert run("budget", "--config", tmp_path / "nope") == 2

    def test_equals_form(self, capsys):
        assert run("budget", "--k=10", "--r=2", "--N=100") == 0
        assert "236" in capsys.readouterr().out

    def test_bad_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LJSR_THREADS", "many")
        assert run("fig2", "--nx", 8, "--ny", 8, "--N", 6, "--period", 2,
                   "--mc_values", "1:3", "--trials", 1, "--out", tmp_path) == 2


class TestBudgetSpark:
    def test_budget(self, capsys):
        assert run("budget", "--k", 10, "--r", 2, "--N", 100) == 0
        out = capsys.readouterr().out
        assert "mmv_per_snapshot          = 19" in out
        assert "proposed_total            = 236" in out

    def test_budget_csv(self, capsys):
        assert run("budget", "--k", 10, "--r", 2, "--N", 100, "--format", "csv") == 0
        head, row = capsys.readouterr().out.strip().splitlines()
        assert dict(zip(head.split(","), row.split(",")))["proposed_total"] == "236"

    def test_budget_bad_rank(self):
        assert run("budget", "--k", 2, "--r", 3, "--N", 10) == 2

    def test_spark_identity(self, tmp_path, capsys):
        write_fmx(tmp_path / "identity4.fmx", np.eye(4))
        assert run("spark", tmp_path / "identity4.fmx") == 0
        assert capsys.readouterr().out.strip() == "5"

    def test_spark_too_big(self, tmp_path, capsys):
        write_fmx(tmp_path / "big.fmx", np.ones((3, 30)))
        assert run("spark", "--path", tmp_path / "big.fmx") == 2
        assert "24" in capsys.readouterr().err

    def test_spark_bad_file(self, tmp_path):
        (tmp_path / "bad.fmx").write_bytes(b"garbage")
        assert run("spark", tmp_path / "bad.fmx") == 2


class TestPipeline:
    def test_outputs_and_rerun(self, tmp_path):
        out = tmp_path / "a"
        assert run("pipeline", *SMALL, "--out", out) == 0
        for name in ["X.fmx", "Q.fmx", "P.fmx", "Xhat.fmx", "report.csv", "summary",
                     "config", "eigenvalues.csv", "measurements/Z.fmx",
                     "measurements/y_0000.fmx", "measurements/meta",
                     "operators/clusters", "operators/common.lines"]:
            assert (out / name).exists(), name
        head, rows = csv_rows(out / "report.csv")
        assert head == ["iter", "objective", "primal_residual", "pcg_iters"]
        summary = read_kv(out / "summary")
        assert len(rows) == int(summary["iterations"])
        assert float(summary["projection_error"]) < 1e-8

        again = tmp_path / "b"
        assert run("pipeline", "--config", out / "config", "--out", again) == 0
        for name in ["P.fmx", "Xhat.fmx", "report.csv", "Q.fmx"]:
            assert (out / name).read_bytes() == (again / name).read_bytes()
        s2 = read_kv(again / "summary")
        assert {k: v for k, v in summary.items() if not k.startswith("time")} == \
               {k: v for k, v in s2.items() if not k.startswith("time")}

    def test_dense_least_squares(self, tmp_path):
        assert run("pipeline", "--signal", "random", "--n", 20, "--N", 12, "--r", 2,
                   "--k", 5, "--common_kind", "dense-gaussian", "--common_size", 4,
                   "--var_kind", "dense-gaussian", "--var_size", 5, "--clusters", 6,
                   "--solver", "lsq", "--out", tmp_path) == 0
        s = read_kv(tmp_path / "summary")
        assert float(s["relative_error"]) < 1e-6 and s["unique"] == "True"

    def test_recover_subcommand(self, tmp_path):
        out = tmp_path / "p"
        assert run("pipeline", *SMALL, "--out", out) == 0
        rec = tmp_path / "r"
        assert run("recover", "--measurements", out / "measurements", "--operators",
                   out / "operators", "--q", out / "Q.fmx", "--truth", out / "X.fmx",
                   "--max_outer", 300, "--out", rec) == 0
        assert (rec / "P.fmx").read_bytes() == (out / "P.fmx").read_bytes()
        assert float(read_kv(rec / "summary")["relative_error"]) == \
               pytest.approx(float(read_kv(out / "summary")["relative_error"]), rel=1e-12)

    def test_fourier_needs_2d_signal(self, tmp_path):
        assert run("pipeline", "--signal", "random", "--out", tmp_path) == 2

    def test_numerical_failure_exit(self, tmp_path, monkeypatch, capsys):
        def boom(*a, **k):
            raise recovery.DivergenceError("objective blew up")
        monkeypatch.setattr(recovery, "admm_recover", boom)
        assert run("pipeline", *SMALL, "--out", tmp_path) == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_rank_exceeds_spectrum(self, tmp_path, capsys):
        assert run("pipeline", *SMALL[:-4], "--rank", 5, "--out", tmp_path) == 2
        assert "ljsr.subspace" in capsys.readouterr().err


class TestFigures:
    def test_fig2_csv(self, tmp_path):
        assert run("fig2", "--mc_values", "4,5,6,7", "--trials", 3, "--out", tmp_path) == 0
        head, rows = csv_rows(tmp_path / "fig2.csv")
        assert head == ["m_c", "mean_proj_err", "max_proj_err"]
        got = {int(r["m_c"]): float(r["mean_proj_err"]) for r in rows}
        assert got[6] < 1e-8 and got[5] > 0.05

    def test_fig3_small(self, tmp_path):
        assert run("fig3", *SMALL, "--out", tmp_path) == 0
        head, rows = csv_rows(tmp_path / "fig3.csv")
        assert [r["run"] for r in rows] == ["noiseless", "noisy"]
        assert (tmp_path / "noisy" / "summary").exists()

    def test_fig4_small_threads_match(self, tmp_path, monkeypatch):
        assert run("fig4", *SMALL, "--out", tmp_path / "s") == 0
        monkeypatch.setenv("LJSR_THREADS", "3")
        assert run("fig4", *SMALL, "--out", tmp_path / "t") == 0
        a = (tmp_path / "s" / "fig4.csv").read_text()
        assert a == (tmp_path / "t" / "fig4.csv").read_text()
        head, rows = csv_rows(tmp_path / "s" / "fig4.csv")
        assert [r["scheme"] for r in rows] == ["consecutive", "permuted", "periodic"]
        assert rows[2]["clusters"] == "3"


def test_console_entry_point(tmp_path):
    write_fmx(tmp_path / "m.fmx", np.eye(3))
    res = subprocess.run([sys.executable, "-m", "ljsr.cli", "spark", str(tmp_path / "m.fmx")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "4"


def test_help_lists_keys(capsys):
    with pytest.raises(SystemExit):
        cli.main(["pipeline", "--help"])
    assert "--stop_tol" in capsys.readouterr().out
