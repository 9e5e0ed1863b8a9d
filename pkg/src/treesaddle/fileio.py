"""JSON problem files (optionally gzip-compressed by extension).

Layout, version 1::

    {"version": 1,
     "meta": {...},
     "vertices": [{"id", "n", "B": row-major list, "h"}],
     "arcs": [{"id", "tail", "head", "l", "E_out", "E_in", "D", "f"}]}

Floats are written with ``repr`` precision, so a round trip is exact.
"""

from __future__ import annotations

import gzip
import json
import re
from pathlib import Path

import numpy as np

from .blocks import TreeCoupledSystem, make_system
from .errors import DimensionError, TreeSaddleError, ValidationError
from .tree import build_tree

__all__ = ["FORMAT_VERSION", "ProblemFileError", "to_document", "from_document", "dumps", "loads", "save", "load"]

FORMAT_VERSION = 1


class ProblemFileError(ValidationError):
    """Malformed problem file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def to_document(sys: TreeCoupledSystem, meta: dict | None = None) -> dict:
    tree = sys.tree
    verts = [
        {"id": i, "n": sys.n(i), "B": sys.B[i].ravel().tolist(), "h": sys.h[i].tolist()}
        for i in tree.vertices
    ]
    arcs = [
        {
            "id": k,
            "tail": t,
            "head": hd,
            "l": sys.l(k),
            "E_out": sys.E_out[k].ravel().tolist(),
            "E_in": sys.E_in[k].ravel().tolist(),
            "D": sys.D[k].ravel().tolist(),
            "f": sys.f[k].tolist(),
        }
        for k, (t, hd) in enumerate(tree.arcs, start=1)
    ]
    doc = {"version": FORMAT_VERSION}
    if meta:
        doc["meta"] = meta
    doc["vertices"] = verts
    doc["arcs"] = arcs
    return doc


def dumps(sys: TreeCoupledSystem, meta: dict | None = None) -> str:
    doc = to_document(sys, meta)
    # one vertex / arc per line keeps diffs readable and errors line-addressable
    head = {k: v for k, v in doc.items() if k not in ("vertices", "arcs")}
    lines = ["{"]
    for k, v in head.items():
        lines.append(f"  {json.dumps(k)}: {json.dumps(v, sort_keys=True)},")
    for name in ("vertices", "arcs"):
        items = doc[name]
        lines.append(f'  "{name}": [')
        for n, it in enumerate(items):
            sep = "," if n + 1 < len(items) else ""
            lines.append("    " + json.dumps(it) + sep)
        lines.append("  ]" + ("," if name == "vertices" else ""))
    lines.append("}")
    return "\n".join(lines) + "\n"


def _item_lines(text: str, key: str) -> list[int]:
    """1-based line numbers of the objects in the top-level array ``key``."""
    m = re.search(r'"%s"\s*:\s*\[' % re.escape(key), text)
    if not m:
        return []
    dec = json.JSONDecoder()
    pos = m.end()
    out = []
    while True:
        while pos < len(text) and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(text) or text[pos] == "]":
            return out
        out.append(text.count("\n", 0, pos) + 1)
        try:
            _, pos = dec.raw_decode(text, pos)
        except json.JSONDecodeError:
            return out


def _matrix(entry, key, rows, cols, line):
    vals = entry.get(key)
    if vals is None:
        raise ProblemFileError(f"missing field {key!r}", line)
    a = np.asarray(vals, dtype=float)
    if a.size != rows * cols:
        raise ProblemFileError(f"field {key!r} has {a.size} entries, expected {rows}x{cols}", line)
    return a.reshape(rows, cols)


def from_document(doc: dict, text: str | None = None) -> TreeCoupledSystem:
    if not isinstance(doc, dict):
        raise ProblemFileError("top level must be an object", 1)
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise ProblemFileError(f"unsupported format version {version!r}")
    vlines = _item_lines(text, "vertices") if text else []
    alines = _item_lines(text, "arcs") if text else []

    def at(lines, n):
        return lines[n] if n < len(lines) else None

    verts = doc.get("vertices") or []
    arcs = doc.get("arcs") or []
    n = {}
    B, h = {}, {}
    for pos, v in enumerate(verts):
        line = at(vlines, pos)
        try:
            i, ni = int(v["id"]), int(v["n"])
        except (KeyError, TypeError, ValueError):
            raise ProblemFileError("vertex needs integer 'id' and 'n'", line) from None
        if i != pos + 1:
            raise ProblemFileError(f"vertex ids must be 1..N in order, got {i}", line)
        n[i] = ni
        B[i] = _matrix(v, "B", ni, ni, line)
        h[i] = _matrix(v, "h", ni, 1, line).ravel()
    arc_list = []
    Eo, Ei, D, f = {}, {}, {}, {}
    for pos, a in enumerate(arcs):
        line = at(alines, pos)
        try:
            k, t, hd, lk = int(a["id"]), int(a["tail"]), int(a["head"]), int(a["l"])
        except (KeyError, TypeError, ValueError):
            raise ProblemFileError("arc needs integer 'id', 'tail', 'head' and 'l'", line) from None
        if k != pos + 1:
            raise ProblemFileError(f"arc ids must be 1..M in order, got {k}", line)
        if t not in n or hd not in n:
            raise ProblemFileError(f"arc {k} references an unknown vertex", line)
        arc_list.append((t, hd))
        Eo[k] = _matrix(a, "E_out", lk, n[t], line)
        Ei[k] = _matrix(a, "E_in", lk, n[hd], line)
        D[k] = _matrix(a, "D", lk, lk, line)
        f[k] = _matrix(a, "f", lk, 1, line).ravel()
    if not n:
        raise ProblemFileError("problem has no vertices")
    try:
        tree = build_tree(arc_list, n_vertices=len(n))
        return make_system(tree, B, h, Eo, Ei, D, f)
    except TreeSaddleError as exc:
        raise ProblemFileError(str(exc)) from exc


def loads(text: str) -> tuple[TreeCoupledSystem, dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    return from_document(doc, text), dict(doc.get("meta") or {}) if isinstance(doc, dict) else {}


def _is_gz(path) -> bool:
    return str(path).endswith(".gz")


def save(path, sys: TreeCoupledSystem, meta: dict | None = None) -> None:
    data = dumps(sys, meta).encode("utf-8")
    path = Path(path)
    if _is_gz(path):
        with open(path, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
            gz.write(data)
    else:
        path.write_bytes(data)


def load(path) -> tuple[TreeCoupledSystem, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if _is_gz(path):
        raw = gzip.decompress(raw)
    return loads(raw.decode("utf-8"))
