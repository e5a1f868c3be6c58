"""CSV result records and experiment manifests.

Schema version 1.  One header row, comma separated, UTF-8, LF endings::

    iter,<x0..>,<y0..>,norm,log10norm,residual,fwd_passes,cg_iters_x,cg_iters_y

State coordinates are written only for games with at most
``MAX_COORDS`` unknowns; the manifest lists the exact columns of every file.
Floats use ``repr`` so every value parses back bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Dict, List

from .harness import Trajectory, convergence_verdict

SCHEMA_VERSION = 1
MAX_COORDS = 16
TAIL_COLUMNS = ("norm", "log10norm", "residual", "fwd_passes", "cg_iters_x", "cg_iters_y")
INT_COLUMNS = {"iter", "fwd_passes", "cg_iters_x", "cg_iters_y"}


class SchemaError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


def columns_for(t: Trajectory) -> List[str]:
    cols = ["iter"]
    if t.states:
        m, n = t.states[0].m, t.states[0].n
        if m + n <= MAX_COORDS:
            cols += [f"x{i}" for i in range(m)] + [f"y{j}" for j in range(n)]
    return cols + list(TAIL_COLUMNS)


def rows_for(t: Trajectory) -> List[list]:
    coords = len(columns_for(t)) > 1 + len(TAIL_COLUMNS)
    rows = []
    for i, k in enumerate(t.iterations):
        s = t.states[i]
        row = [k]
        if coords:
            row += [float(v) for v in s.x] + [float(v) for v in s.y]
        norm = t.norms[i]
        log = math.log10(norm) if norm > 0 and math.isfinite(norm) else (-math.inf if norm == 0 else math.inf)
        row += [norm, log, t.residuals[i], t.fwd_passes[i], t.cg_iters_x[i], t.cg_iters_y[i]]
        rows.append(row)
    return rows


def to_csv(t: Trajectory) -> str:
    lines = [",".join(columns_for(t))]
    lines += [",".join(fmt(v) for v in row) for row in rows_for(t)]
    return "\n".join(lines) + "\n"


def write_csv(t: Trajectory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_csv(t))
    return path


def parse_csv(text: str) -> Dict[str, list]:
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise SchemaError("empty CSV")
    header = lines[0].split(",")
    if header[0] != "iter" or tuple(header[-len(TAIL_COLUMNS):]) != TAIL_COLUMNS:
        raise SchemaError(f"unexpected header {lines[0]!r}")
    cols: Dict[str, list] = {h: [] for h in header}
    for ln in lines[1:]:
        vals = ln.split(",")
        if len(vals) != len(header):
            raise SchemaError(f"row has {len(vals)} fields, header has {len(header)}")
        for h, v in zip(header, vals):
            cols[h].append(int(v) if h in INT_COLUMNS else float(v))
    return cols


def read_csv(path) -> Dict[str, list]:
    try:
        return parse_csv(Path(path).read_text(encoding="utf-8"))
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def write_samples(samples, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sx,sy\n")
        for a, b in samples:
            fh.write(f"{fmt(a)},{fmt(b)}\n")
    return path


def read_samples(path) -> List[tuple]:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if not lines or lines[0] != "sx,sy":
        raise SchemaError(f"{path}: not a samples file (expected header 'sx,sy')")
    return [tuple(float(v) for v in ln.split(",")) for ln in lines[1:] if ln]


def config_hash(echo: dict) -> str:
    blob = json.dumps(echo, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def safe_verdict(t: Trajectory, window: int = 20) -> str:
    if t.skipped:
        return "skipped"
    try:
        return convergence_verdict(t, window)
    except ValueError:
        return "undecided"


def run_record(t: Trajectory) -> dict:
    """JSON-ready summary of one run (config echo, verdict, rows)."""
    echo = t.config.echo() if t.config else {}
    rec = {
        "schema_version": SCHEMA_VERSION,
        "config": echo,
        "config_hash": config_hash(echo),
        "columns": columns_for(t),
        "rows": rows_for(t),
        "termination": t.termination,
        "message": t.message,
        "verdict": safe_verdict(t),
    }
    if "mode_coverage" in t.extras:
        rec["mode_coverage"] = list(t.extras["mode_coverage"])
    return rec


def write_json(t: Trajectory, path) -> Path:
    path = Path(path)

    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return repr(v)
        return v

    rec = run_record(t)
    rec["rows"] = [[clean(v) for v in row] for row in rec["rows"]]
    path.write_text(json.dumps(rec, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def write_manifest(entries: List[dict], path) -> Path:
    path = Path(path)
    doc = {"schema_version": SCHEMA_VERSION, "files": entries}
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path
