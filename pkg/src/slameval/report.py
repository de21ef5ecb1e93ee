"""Result documents, per-frame series files and comparison tables.

A result document is JSON (schema in ``docs/formats.md``). Its aggregate
block must be recomputable from its own ``runs`` entries; see
:func:`recompute_aggregate`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import FormatError, InputNotFoundError, SchemaVersionError
from .metrics import aggregate_runs

SCHEMA_VERSION = "1.0"
SERIES_COLUMNS = ("timestamp", "ate_so_far", "rpe", "tracked")


@dataclass
class ResultDocument:
    kind: str                      # "eval" | "repeated" | "lifelong"
    metadata: dict
    runs: list
    aggregate: dict
    windows: list = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION

    def to_dict(self):
        d = asdict(self)
        return {"schema_version": d.pop("schema_version"), **d}

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version is None:
            raise SchemaVersionError("document has no schema_version")
        if str(version).split(".")[0] != SCHEMA_VERSION.split(".")[0]:
            raise SchemaVersionError(
                f"document schema {version} is incompatible with {SCHEMA_VERSION}")
        try:
            return cls(kind=d["kind"], metadata=d["metadata"], runs=d["runs"],
                       aggregate=d["aggregate"], windows=d.get("windows", []),
                       schema_version=str(version))
        except KeyError as exc:
            raise FormatError(f"result document lacks field {exc}") from None


def _clean(x):
    """NaN/inf -> None so the JSON stays strict."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc: ResultDocument) -> str:
    return json.dumps(_clean(doc.to_dict()), indent=2, allow_nan=False) + "\n"


def write_document(doc: ResultDocument, path):
    atomic_write_text(path, dumps(doc))


def read_document(path) -> ResultDocument:
    p = Path(path)
    if not p.exists():
        raise InputNotFoundError(f"no such file: {p}")
    try:
        d = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: not a JSON document ({exc})") from None
    return ResultDocument.from_dict(d)


# --------------------------------------------------------------------------
# building documents

def run_entry(index, metrics, record=None, sequence="", series_path=None):
    """Serializable per-run block from a RunMetrics (and RunRecord)."""
    entry = {
        "run": index,
        "sequence": sequence,
        "exit": record.exit.to_dict() if record is not None else {"kind": "completed", "frame": None},
        "restarts": record.restarts if record is not None else 0,
        "failures": len(record.failures) if record is not None else 0,
        "delivered_frames": record.delivered_frames if record is not None else None,
        "ate": metrics.ate.summary() if metrics.ate is not None else None,
        "rpe": metrics.rpe.summary() if metrics.rpe is not None else None,
        "crt": metrics.crt.summary() if metrics.crt is not None else None,
        "normalized_ate": metrics.normalized_ate,
        "frame_rate": metrics.frame_rate,
        "error": metrics.error,
    }
    if series_path is not None:
        entry["series"] = str(series_path)
    return entry


def recompute_aggregate(runs) -> dict:
    """Aggregate block from run entries: median normalized ATE-RMSE over
    completed runs, and the fraction of runs that crashed at least once."""
    n = len(runs)
    crashed = sum(1 for r in runs if r.get("failures", 0) or r["exit"]["kind"] != "completed")
    vals = [r["normalized_ate"] for r in runs
            if r["exit"]["kind"] == "completed" and r.get("normalized_ate") is not None]
    crts = [r["crt"]["correct_ratio"] for r in runs if r.get("crt")]
    return {
        "median_normalized_ate": aggregate_runs(vals) if vals else None,
        "crash_rate": crashed / n if n else None,
        "runs": n,
        "completed": sum(1 for r in runs if r["exit"]["kind"] == "completed"),
        "crashed": crashed,
        "mean_crt": sum(crts) / len(crts) if crts else None,
        "available": bool(vals),
    }


def build_document(kind, metadata, runs, windows=()) -> ResultDocument:
    return ResultDocument(kind, dict(metadata), list(runs), recompute_aggregate(runs), list(windows))


def check_consistency(doc: ResultDocument, tol=0.0) -> bool:
    fresh = _clean(recompute_aggregate(doc.runs))
    for k, v in fresh.items():
        have = doc.aggregate.get(k)
        if isinstance(v, float) and isinstance(have, float):
            if abs(v - have) > tol:
                return False
        elif v != have:
            return False
    return True


# --------------------------------------------------------------------------
# per-frame series

def series_rows(record, series):
    """One row per delivered frame: monitor values where a pose existed."""
    by_t = {}
    if series is not None:
        by_t = {e.timestamp: e for e in series}
    rows = []
    for t, tracked in record.tracking_events:
        e = by_t.get(t)
        rows.append((t, e.ate_rmse_so_far if e else None, e.latest_rpe_trans if e else None,
                     int(bool(tracked))))
    return rows


def write_series(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for t, a, r, tr in rows:
        w.writerow([repr(float(t)),
                    "" if a is None or not math.isfinite(a) else repr(float(a)),
                    "" if r is None or not math.isfinite(r) else repr(float(r)),
                    int(tr)])
    atomic_write_text(path, buf.getvalue())


def read_series(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SERIES_COLUMNS:
            raise FormatError(f"{path}: expected columns {SERIES_COLUMNS}")
        for r in reader:
            rows.append((float(r["timestamp"]),
                         float(r["ate_so_far"]) if r["ate_so_far"] else None,
                         float(r["rpe"]) if r["rpe"] else None,
                         int(r["tracked"])))
    return rows


# --------------------------------------------------------------------------
# comparison tables

def _fmt_pct(x):
    return "-" if x is None else f"{100.0 * x:.3f}%"


def _cell(doc):
    agg = doc.aggregate
    return f"{_fmt_pct(agg.get('median_normalized_ate'))} / {_fmt_pct(agg.get('mean_crt'))}"


def comparison_table(docs) -> str:
    """Rows: sequences. Columns: SUTs, ordered by median normalized ATE.

    Each cell is ``median normalized ATE / mean CRT``. Lifelong documents
    contribute one row per sequence.
    """
    cells = {}
    score = {}
    for doc in docs:
        sut = str(doc.metadata.get("sut", "?"))
        if doc.kind == "lifelong":
            for r in doc.runs:
                sub = build_document("run", {}, [r])
                cells[(r["sequence"], sut)] = _cell(sub)
        else:
            cells[(str(doc.metadata.get("sequence", "?")), sut)] = _cell(doc)
        m = doc.aggregate.get("median_normalized_ate")
        score.setdefault(sut, []).append(math.inf if m is None else m)
    suts = sorted(score, key=lambda s: (aggregate_runs(score[s]), s))
    seqs = sorted({k[0] for k in cells})
    header = ["sequence"] + suts
    rows = [[seq] + [cells.get((seq, s), "-") for s in suts] for seq in seqs]
    return _render(header, rows, "cells: median normalized ATE-RMSE / mean CRT")


def frame_rate_table(docs) -> str:
    """Mean frame rate per SUT (columns) and platform (rows)."""
    grid = {}
    for doc in docs:
        sut = str(doc.metadata.get("sut", "?"))
        plat = str(doc.metadata.get("platform", "?"))
        for r in doc.runs:
            if r.get("frame_rate") is not None:
                grid.setdefault((plat, sut), []).append(r["frame_rate"])
    suts = sorted({s for _, s in grid})
    plats = sorted({p for p, _ in grid})
    rows = []
    for p in plats:
        row = [p]
        for s in suts:
            v = grid.get((p, s))
            if not v:
                row.append("-")
            else:
                fps = sum(v) / len(v)
                row.append(f"{fps:.3g}" if fps < 100 else f"{fps:.0f}")
        rows.append(row)
    return _render(["platform"] + suts, rows, "average frame rate (FPS)")


def _render(header, rows, caption):
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)] if rows else [len(h) for h in header]
    line = lambda r: "  ".join(str(x).ljust(w) for x, w in zip(r, widths)).rstrip()
    out = [line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    out.append(f"({caption})")
    return "\n".join(out) + "\n"


def write_plot_data(docs, doc_paths, out_dir):
    """Write ``error_over_time.csv`` and ``crt_bars.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sut", "sequence", "run", "timestamp", "ate_so_far", "rpe", "tracked"])
    for doc, dpath in zip(docs, doc_paths):
        sut = doc.metadata.get("sut", "?")
        for r in doc.runs:
            sp = r.get("series")
            if not sp:
                continue
            sp = Path(sp)
            if not sp.is_absolute():
                sp = Path(dpath).parent / sp
            if not sp.exists():
                continue
            for t, a, rp, tr in read_series(sp):
                w.writerow([sut, r["sequence"], r["run"], repr(t),
                            "" if a is None else repr(a), "" if rp is None else repr(rp), tr])
    atomic_write_text(out_dir / "error_over_time.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sut", "sequence", "run", "crt", "threshold"])
    for doc in docs:
        sut = doc.metadata.get("sut", "?")
        for r in doc.runs:
            if r.get("crt"):
                w.writerow([sut, r["sequence"], r["run"], repr(r["crt"]["correct_ratio"]),
                            repr(r["crt"]["threshold"])])
    atomic_write_text(out_dir / "crt_bars.csv", buf.getvalue())
