import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fad.cli import main
from fad.data import write_binary, write_csv
from fad.simulate import SimConfig, generate


@pytest.fixture
def data_csv(tmp_path):
    d, _ = generate(SimConfig(n=60, p=25, q_true=2, k_max=3, seed=3), 0)
    path = tmp_path / "d.csv"
    write_csv(path, d.values)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    doc = json.loads(out.out) if out.out.strip() else None
    return code, doc, out.err


def test_fit_writes_outputs(capsys, tmp_path, data_csv):
    out = tmp_path / "fit"
    code, doc, _ = run(capsys, "fit", "--input", data_csv, "--q", 2, "--method", "fad", "--out", out)
    assert code == 0
    assert doc["schema"] == 1
    assert {"loglik", "bic", "grad_inf_norm"} <= set(doc["fit"])
    lam = np.loadtxt(doc["loadings_path"], delimiter=",", ndmin=2)
    psi = np.loadtxt(doc["uniquenesses_path"], delimiter=",")
    assert lam.shape == (25, 2) and psi.shape == (25,)
    gamma = np.diag(lam.T @ (lam / psi[:, None]))
    assert gamma[0] >= gamma[1]
    idx = np.argmax(np.abs(lam), axis=0)
    assert np.all(lam[idx, [0, 1]] > 0)
    full = json.loads((out / "report.json").read_text())
    assert len(full["fit"]["psi_hat"]) == 25


def test_fit_em_and_compare(capsys, tmp_path, data_csv):
    assert run(capsys, "fit", "--input", data_csv, "--q", 2, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, "fit", "--input", data_csv, "--q", 2, "--method", "em", "--out", tmp_path / "b")[0] == 0
    code, doc, _ = run(capsys, "compare", tmp_path / "a" / "report.json", tmp_path / "b" / "report.json")
    assert code == 0
    assert doc["comparison"]["cross"]["loglik"] < 1e-6


def test_psvd_matches_dense(capsys, tmp_path, rng):
    A = rng.standard_normal((20, 15))
    path = tmp_path / "a.bin"
    write_binary(path, A)
    code, doc, _ = run(capsys, "psvd", "--input", path, "--q", 2, "--delta", "1e-9")
    assert code == 0
    s = np.linalg.svd(A, compute_uv=False)
    assert_allclose(doc["values"], s[:2], atol=1e-8 * s[0])
    assert doc["converged"] and len(doc["residuals"]) == 2


def test_select_both_with_table(capsys, tmp_path, data_csv):
    table = tmp_path / "bic.csv"
    code, doc, _ = run(
        capsys, "select", "--input", data_csv, "--max-factors", 3, "--method", "both", "--table", table, "--threads", 2
    )
    assert code == 0
    assert doc["chosen_q"] == {"fad": 2, "em": 2}
    assert len(doc["fits"]) == 6
    assert [row["k"] for row in doc["comparison"]] == [1, 2, 3]
    lines = table.read_text().splitlines()
    assert lines[0] == "method,k=1,k=2,k=3"
    assert [l.split(",")[0] for l in lines[1:]] == ["fad", "em"]


def test_usage_errors(capsys, data_csv):
    assert run(capsys, "fit", "--input", data_csv, "--q", 2, "--max-factors", 3)[0] == 1
    assert run(capsys, "select", "--input", data_csv, "--max-factors", 3, "--q", 2)[0] == 1
    assert run(capsys, "fit", "--input", data_csv, "--q", 2, "--bogus")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "fit", "--input", data_csv, "--q", 99)[0] == 1
    assert run(capsys, "fit", "--input", "/nonexistent.csv", "--q", 1)[0] == 1
    assert run(capsys, "fit", "--input", data_csv, "--q", 2, "--psi-lo", 2.0)[0] == 1


def test_strict_nonconvergence(capsys, data_csv):
    args = ["fit", "--input", data_csv, "--q", 2, "--max-iter", 1]
    assert run(capsys, *args)[0] == 0
    code, doc, _ = run(capsys, *args, "--strict")
    assert code == 2
    assert doc["fit"]["hit_max_iter"]


def test_threads_env_override(capsys, monkeypatch, data_csv):
    monkeypatch.setenv("FAD_THREADS", "3")
    _, doc, _ = run(capsys, "fit", "--input", data_csv, "--q", 1, "--threads", 1)
    assert doc["config"]["threads"] == 3


def test_fit_deterministic(capsys, data_csv):
    args = ["fit", "--input", data_csv, "--q", 2, "--deterministic", "--threads", 1]
    main([str(a) for a in args])
    first = capsys.readouterr().out
    main([str(a) for a in args])
    second = capsys.readouterr().out
    assert first == second
    assert json.loads(first)["fit"]["wall_time_seconds"] == 0.0


def test_simulate_deterministic(capsys, tmp_path):
    args = ["simulate", "--preset", "tiny", "--replicates", 2, "--seed", 4, "--deterministic", "--threads", 1]
    outs = []
    for _ in range(2):
        code = main([str(a) for a in args + ["--out", tmp_path / "sim"]])
        assert code == 0
        outs.append((capsys.readouterr().out, (tmp_path / "sim" / "report.json").read_bytes()))
    assert outs[0] == outs[1]
    for name in ("report.json", "errors.csv", "timings.csv"):
        assert (tmp_path / "sim" / name).exists()


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "fad.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("fit", "select", "simulate", "compare", "psvd"):
        assert cmd in out.stdout
