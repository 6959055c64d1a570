"""CSV tables, JSON summaries and the run manifest.

Every table is a CSV preceded by ``# key: value`` header lines. Grids are
written in long form, one row per node, with the axis columns first:

    # fracwalk-table: 1
    # kind: density-grid
    # axes: t[n=4 min=0.5 max=2]; u[n=301 min=0 max=3]
    # value: Q
    t,u,Q
    0.5,0,0.79788456080286541
    ...

Floats are written with 17 significant digits, which round-trips binary64
exactly. Non-finite values are refused with the coordinates of the node.
Timestamps and runtimes go to the manifest only, so the tables of two runs
with the same config and seed are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .walk_sim import EmpiricalDensity, EmpiricalDensity2D

FORMAT_VERSION = "1"
MANIFEST = "manifest.json"
SUMMARY = "summary.json"


def fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class Table:
    """Named columns of equal length plus header metadata.

    ``axes`` lists the leading columns that index the grid; for a plain table
    (convergence rows and the like) it is empty.
    """

    columns: dict[str, np.ndarray]
    axes: list[str] = field(default_factory=list)
    kind: str = "table"
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(np.atleast_1d(v)) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DomainError(f"columns have different lengths {sorted(lengths)}")
        missing = [a for a in self.axes if a not in self.columns]
        if missing:
            raise DomainError(f"axis columns {missing} not present")

    @property
    def nrows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0


def grid_table(axes: Sequence[tuple[str, np.ndarray]], values: Mapping[str, np.ndarray], kind: str = "density-grid",
               meta: Mapping[str, Any] | None = None) -> Table:
    """Long-form table of arrays defined on the tensor grid of ``axes``."""
    names = [a for a, _ in axes]
    vecs = [np.asarray(v, dtype=float) for _, v in axes]
    shape = tuple(len(v) for v in vecs)
    mesh = np.meshgrid(*vecs, indexing="ij")
    cols = {n: m.ravel() for n, m in zip(names, mesh)}
    for k, v in values.items():
        v = np.asarray(v, dtype=float)
        if v.shape != shape:
            raise DomainError(f"{k} has shape {v.shape}, grid is {shape}")
        cols[k] = v.ravel()
    hdr = {"axes": "; ".join(f"{n}[n={len(v)} min={fmt(v.min())} max={fmt(v.max())}]" for n, v in zip(names, vecs))}
    hdr["value"] = ",".join(values)
    hdr.update({k: _meta_str(v) for k, v in (meta or {}).items()})
    return Table(cols, names, kind, hdr)


def _meta_str(v) -> str:
    if isinstance(v, (float, np.floating, int, np.integer)):
        return fmt(v)
    return str(v)


def as_table(obj, value_name: str = "density") -> Table:
    """Table view of an empirical density, a 2-D histogram or any ``.t/.u/.values`` style grid."""
    if isinstance(obj, Table):
        return obj
    if isinstance(obj, EmpiricalDensity):
        e = obj.edges
        meta = {
            "axes": f"bin[n={len(e) - 1} lo={fmt(e[0])} hi={fmt(e[-1])}]",
            "value": f"{value_name},stderr",
            "total": fmt(obj.total),
            "below": fmt(obj.below),
            "above": fmt(obj.above),
        }
        cols = {"bin_lo": e[:-1], "bin_hi": e[1:], "count": obj.counts.astype(np.int64),
                value_name: obj.density, "stderr": obj.stderr}
        return Table(cols, ["bin_lo", "bin_hi"], "empirical-density", meta)
    if isinstance(obj, EmpiricalDensity2D):
        xc = 0.5 * (obj.x_edges[:-1] + obj.x_edges[1:])
        uc = 0.5 * (obj.u_edges[:-1] + obj.u_edges[1:])
        t = grid_table([("y", xc), ("u", uc)], {value_name: obj.density, "stderr": obj.stderr},
                       "empirical-joint-density", {"total": obj.total})
        return t
    for ax in (("t", "u"), ("t", "x"), ("u", "y")):
        if all(hasattr(obj, a) for a in ax) and hasattr(obj, "values"):
            return grid_table([(ax[0], getattr(obj, ax[0])), (ax[1], getattr(obj, ax[1]))], {value_name: obj.values})
    raise DomainError(f"cannot tabulate {type(obj).__name__}")


def _check_finite(table: Table):
    for name, col in table.columns.items():
        arr = np.asarray(col)
        if arr.dtype.kind not in "f":
            continue
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            i = int(bad[0])
            where = ", ".join(f"{a}={fmt(table.columns[a][i])}" for a in table.axes) or f"row {i}"
            raise DomainError(f"non-finite {name}={arr[i]!r} at node ({where}); {bad.size} such node(s)")


def render_csv(table: Table) -> str:
    _check_finite(table)
    buf = _io.StringIO()
    buf.write(f"# fracwalk-table: {FORMAT_VERSION}\n")
    buf.write(f"# kind: {table.kind}\n")
    for k, v in table.meta.items():
        buf.write(f"# {k}: {v}\n")
    names = list(table.columns)
    cols = [np.asarray(table.columns[n]) for n in names]
    ints = [n for n, c in zip(names, cols) if c.dtype.kind in "iub"]
    texts = [n for n, c in zip(names, cols) if c.dtype.kind in "USO"]
    if ints:
        buf.write(f"# integer-columns: {','.join(ints)}\n")
    if texts:
        buf.write(f"# text-columns: {','.join(texts)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for i in range(table.nrows):
        w.writerow([fmt(c[i]) for c in cols])
    return buf.getvalue()


def emit_density_csv(obj, path, value_name: str = "density") -> Path:
    """Write a grid, an empirical density or a :class:`Table` as CSV."""
    table = as_table(obj, value_name)
    text = render_csv(table)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def read_table_csv(path) -> Table:
    """Inverse of :func:`emit_density_csv`; integer columns come back as int64."""
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].partition(":")
        meta[key.strip()] = val.strip()
        i += 1
    if meta.get("fracwalk-table") != FORMAT_VERSION:
        raise DomainError(f"{path}: not a fracwalk table (version {meta.get('fracwalk-table')!r})")
    rows = list(csv.reader(lines[i:]))
    if not rows:
        raise DomainError(f"{path}: missing column header")
    names, body = rows[0], rows[1:]
    ints = set(filter(None, meta.pop("integer-columns", "").split(",")))
    texts = set(filter(None, meta.pop("text-columns", "").split(",")))
    cols = {}
    for j, n in enumerate(names):
        raw = [r[j] for r in body]
        if n in texts:
            cols[n] = np.array(raw, dtype=str)
        elif n in ints:
            cols[n] = np.array([int(s) for s in raw], dtype=np.int64)
        else:
            cols[n] = np.array([float(s) for s in raw], dtype=float)
    kind = meta.pop("kind", "table")
    meta.pop("fracwalk-table", None)
    axes_spec = meta.get("axes", "")
    axes = [a.split("[")[0].strip() for a in axes_spec.split(";") if a.strip()] if axes_spec else []
    if kind == "empirical-density":
        axes = ["bin_lo", "bin_hi"]
    axes = [a for a in axes if a in cols]
    return Table(cols, axes, kind, meta)


# ---------------------------------------------------------------- JSON


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def plain(v):
    """Python scalars and lists in place of numpy ones (for JSON and printing)."""
    return _jsonable(v)


def dump_json(obj, path) -> Path:
    path = Path(path)
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class ManifestEntry:
    path: str
    sha256: str
    bytes: int
    kind: str


@dataclass
class RunResult:
    """What a run left on disk: the manifest entries, assertion outcomes and timings."""

    out_dir: Path
    entries: list[ManifestEntry]
    assertions: list[dict]
    runtime_ms: dict[str, float]
    complete: bool = True
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.complete and all(a["passed"] for a in self.assertions)


def manifest_entry(out_dir: Path, path: Path, kind: str) -> ManifestEntry:
    path = Path(path)
    return ManifestEntry(os.path.relpath(path, out_dir), sha256_of(path), path.stat().st_size, kind)


def write_manifest(result: RunResult) -> Path:
    doc = {
        "complete": result.complete,
        "error": result.error,
        "passed": result.passed,
        "runtime_ms": result.runtime_ms,
        "files": [e.__dict__ for e in result.entries],
    }
    return dump_json(doc, Path(result.out_dir) / MANIFEST)


def verify_manifest(out_dir) -> list[str]:
    """Problems found re-reading a run directory (empty when every file exists, matches and parses)."""
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / MANIFEST).read_text(encoding="utf-8"))
    problems = []
    for e in doc["files"]:
        p = out_dir / e["path"]
        if not p.exists():
            problems.append(f"{e['path']}: missing")
            continue
        if sha256_of(p) != e["sha256"]:
            problems.append(f"{e['path']}: checksum mismatch")
            continue
        try:
            if p.suffix == ".csv":
                read_table_csv(p)
            elif p.suffix == ".json":
                json.loads(p.read_text(encoding="utf-8"))
        except Exception as exc:  # report, don't raise: this is a checker
            problems.append(f"{e['path']}: {exc}")
    return problems
