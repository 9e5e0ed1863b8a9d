import json
import subprocess
import sys as _sys

import numpy as np
import pytest

from treesaddle import fileio
from treesaddle.cli import main


@pytest.fixture
def random_file(tmp_path):
    p = tmp_path / "r.json"
    assert main(["generate", "random", "--out", str(p), "--seed", "3", "--branching", "2,2"]) == 0
    return p


def _solve(path, tmp_path, *extra, name="h"):
    csv = tmp_path / f"{name}.csv"
    summ = tmp_path / f"{name}.json"
    code = main(["solve", str(path), "--csv", str(csv), "--summary", str(summ), *extra])
    return code, csv.read_text(), json.loads(summ.read_text())


def test_generate_is_byte_identical(tmp_path):
    for kind, extra in (("random", []), ("scenario", ["--depth", "3"]), ("shooting", ["--intervals", "3", "--steps", "4"])):
        a, b = tmp_path / f"a_{kind}.json.gz", tmp_path / f"b_{kind}.json.gz"
        main(["generate", kind, "--out", str(a), "--seed", "5", *extra])
        main(["generate", kind, "--out", str(b), "--seed", "5", *extra])
        assert a.read_bytes() == b.read_bytes()


def test_exact_gives_two_rows(random_file, tmp_path):
    code, csv, summ = _solve(random_file, tmp_path, "--precond", "exact")
    lines = csv.splitlines()
    assert code == 0 and lines[0] == "iter,rel_residual" and len(lines) == 3
    assert summ["iterations"] == 1 and summ["converged"]
    assert set(summ["solve_counts"]) == {"setup", "iteration", "total"}


def test_solve_twice_identical(random_file, tmp_path):
    _, a, _ = _solve(random_file, tmp_path, "--precond", "ml", "--ml-smoother", "super", name="a")
    _, b, _ = _solve(random_file, tmp_path, "--precond", "ml", "--ml-smoother", "super", name="b")
    assert a == b


def test_direct_per_vertex_counts(random_file, tmp_path):
    code, csv, summ = _solve(random_file, tmp_path, "--method", "direct")
    sys, _ = fileio.load(random_file)
    t = sys.tree
    assert code == 0 and summ["true_relative_residual"] <= 1e-10
    expect = {str(v): (1 if t.is_leaf(v) else 2) * 2 ** t.depth[v] for v in t.vertices}
    assert summ["per_vertex_solve_counts"] == expect
    assert len(csv.splitlines()) == 3


def test_exit_codes(random_file, tmp_path, capsys):
    code, _, summ = _solve(random_file, tmp_path, "--max-iter", "1")
    assert code == 2 and not summ["converged"]
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 9, "vertices": [], "arcs": []}')
    assert main(["solve", str(bad)]) == 3
    assert main(["solve", str(tmp_path / "missing.json")]) == 1
    kkt = tmp_path / "kkt.json"
    main(["generate", "scenario", "--out", str(kkt), "--depth", "2"])
    assert main(["solve", str(kkt), "--precond", "nested-bdiag"]) == 4
    assert "error:" in capsys.readouterr().err


def _read_spectrum(text):
    lines = text.splitlines()
    assert lines[0] == "index,real,imag"
    return np.array([complex(float(r), float(i)) for _, r, i in (l.split(",") for l in lines[1:])])


def test_spectrum(random_file, tmp_path, capsys):
    out = tmp_path / "eig.csv"
    assert main(["spectrum", str(random_file), "--operator", "jacobi", "--out", str(out)]) == 0
    assert np.abs(_read_spectrum(out.read_text())).max() < 1.0
    assert main(["spectrum", str(random_file), "--operator", "cycle", "--ml-smoother", "super", "--out", str(out)]) == 0
    assert np.abs(_read_spectrum(out.read_text())).max() < 1.0
    assert main(["spectrum", str(random_file), "--operator", "precond", "--precond", "nonnested-bdiag",
                 "--nonnested-policy", "exact", "--out", str(out)]) == 0
    eig = _read_spectrum(out.read_text())
    assert np.all(np.minimum(abs(eig - 1), abs(eig + 1)) <= 1e-8)
    big = tmp_path / "big.json"
    main(["generate", "random", "--out", str(big), "--tree", "path", "--vertices", "120", "--n-min", "4"])
    assert main(["spectrum", str(big), "--operator", "precond", "--precond", "hook"]) == 3


def test_count_table(tmp_path, capsys):
    paths = []
    for d in (2, 3):
        p = tmp_path / f"path{d}.json"
        main(["generate", "scenario", "--out", str(p), "--depth", str(d), "--n-state", "1", "--n-couple", "1"])
        paths.append(str(p))
    out = tmp_path / "table.csv"
    assert main(["count", *paths, "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "preconditioner,variant,smoother,path2,path3"
    assert len(rows) == 1 + 12
    assert rows[1].startswith("Nested Exact,,,") and rows[3].startswith("ML,V-Cycle,Block-diagonal,")
    assert all(c.isdigit() for r in rows[1:] for c in r.split(",")[3:])


def test_module_entry_point(random_file):
    res = subprocess.run([_sys.executable, "-m", "treesaddle", "solve", str(random_file), "--precond", "hook"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("iter,rel_residual\n")
    assert json.loads(res.stderr)["converged"]
