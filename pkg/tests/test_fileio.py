import json

import numpy as np
import pytest

from treesaddle import fileio
from treesaddle.fileio import ProblemFileError
from treesaddle.problems import ShootingConfig, gen_multiple_shooting, gen_random_system
from treesaddle.tree import full_tree


def _close(a, b, tol=1e-15):
    for i in a.tree.vertices:
        assert np.allclose(a.B[i], b.B[i], rtol=tol, atol=0) and np.allclose(a.h[i], b.h[i], rtol=tol, atol=0)
    assert a.tree.arcs == b.tree.arcs
    for k in range(1, a.tree.n_arcs + 1):
        for name in ("E_out", "E_in", "D", "f"):
            assert np.allclose(getattr(a, name)[k], getattr(b, name)[k], rtol=tol, atol=0)


def test_round_trip():
    sys = gen_random_system(full_tree(2, 3), seed=1)
    back, meta = fileio.loads(fileio.dumps(sys, {"seed": 1}))
    _close(sys, back)
    assert meta == {"seed": 1}


@pytest.mark.parametrize("suffix", [".json", ".json.gz"])
def test_file_round_trip(tmp_path, suffix):
    sys = gen_multiple_shooting(ShootingConfig(intervals=3, steps=4, tree="path"))
    p = tmp_path / ("p" + suffix)
    fileio.save(p, sys)
    back, meta = fileio.load(p)
    _close(sys, back)
    assert meta == {}
    first = p.read_bytes()
    fileio.save(p, sys)
    assert p.read_bytes() == first


def test_one_item_per_line():
    sys = gen_random_system(full_tree(2, 2), seed=2)
    lines = fileio.dumps(sys).splitlines()
    assert sum(l.strip().startswith('{"id"') for l in lines) == sys.tree.n_vertices + sys.tree.n_arcs


def test_rejects_unknown_version():
    doc = fileio.to_document(gen_random_system(full_tree(2, 1), seed=0))
    doc["version"] = 2
    with pytest.raises(ProblemFileError, match="version"):
        fileio.loads(json.dumps(doc))


def test_dimension_error_names_the_line():
    sys = gen_random_system(full_tree(2, 1), seed=0)
    text = fileio.dumps(sys)
    lines = text.splitlines()
    n = next(i for i, l in enumerate(lines) if l.strip().startswith('{"id": 2, "tail"'))
    item = json.loads(lines[n].rstrip(","))
    item["E_in"] = item["E_in"][:-1]
    lines[n] = "    " + json.dumps(item) + ("," if lines[n].endswith(",") else "")
    with pytest.raises(ProblemFileError) as err:
        fileio.loads("\n".join(lines))
    assert err.value.line == n + 1
    assert "E_in" in str(err.value)


def test_bad_json_and_bad_tree():
    with pytest.raises(ProblemFileError) as err:
        fileio.loads('{"version": 1,\n "vertices": [}')
    assert err.value.line == 2
    doc = fileio.to_document(gen_random_system(full_tree(2, 1), seed=0))
    doc["arcs"][1]["head"] = 2
    with pytest.raises(ProblemFileError):
        fileio.loads(json.dumps(doc))
