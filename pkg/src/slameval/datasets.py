"""Trajectory file parsers, sequence manifests and perturbation-window sidecars.

File formats are documented in ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

from .errors import ConfigError, FormatError, InputNotFoundError, ParseError
from .geometry import Trajectory
from .metrics import CRT_THRESHOLDS, MetricSeries

log = logging.getLogger(__name__)

QUAT_NORM_WARN = 1e-3


def _open_text(src):
    """Accept a path, a string of file contents wrapped in StringIO, or a stream."""
    if isinstance(src, (str, os.PathLike)):
        path = Path(src)
        if not path.exists():
            raise InputNotFoundError(f"no such file: {path}")
        return open(path, encoding="utf-8"), str(path)
    return src, getattr(src, "name", None)


def _finish(times, rows, source, frame_id, stamps_ns=None):
    if not rows:
        return Trajectory(frame_id=frame_id)
    data = np.array(rows, dtype=float)
    t = np.array(times, dtype=float)
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        k = int(bad[0]) + 1
        raise FormatError(f"{source or '<stream>'}: timestamps not strictly increasing "
                          f"at data row {k + 1} (t={t[k]!r} after {t[k - 1]!r})")
    q = data[:, 3:7]
    norms = np.linalg.norm(q, axis=1)
    if np.any(norms == 0):
        raise FormatError(f"{source or '<stream>'}: zero-norm quaternion")
    off = np.abs(norms - 1.0) > QUAT_NORM_WARN
    if np.any(off):
        log.warning("%s: %d quaternion(s) deviate from unit norm by more than %g; normalized",
                    source or "<stream>", int(off.sum()), QUAT_NORM_WARN)
    return Trajectory(t, data[:, 0:3], q / norms[:, None], frame_id=frame_id, stamps_ns=stamps_ns)


def parse_tum_trajectory(stream, strict=True, frame_id="") -> Trajectory:
    """Parse ``timestamp tx ty tz qx qy qz qw`` lines.

    Blank lines and ``#`` comments are skipped. In strict mode the first
    malformed line raises :class:`ParseError`; otherwise it is skipped with a
    warning. Non-increasing timestamps always raise :class:`FormatError`.
    """
    fh, source = _open_text(stream)
    times, rows = [], []
    try:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.replace(",", " ").split()
            try:
                if len(fields) != 8:
                    raise ValueError(f"expected 8 fields, found {len(fields)}")
                vals = [float(x) for x in fields]
                if not all(math.isfinite(v) for v in vals):
                    raise ValueError("non-finite value")
            except ValueError as exc:
                if strict:
                    raise ParseError(str(exc), line=lineno, source=source) from None
                log.warning("%s:%d: skipped malformed line (%s)", source or "<stream>", lineno, exc)
                continue
            times.append(vals[0])
            rows.append(vals[1:])
    finally:
        if fh is not stream:
            fh.close()
    return _finish(times, rows, source, frame_id)


def format_tum_trajectory(traj: Trajectory, header=True) -> str:
    out = io.StringIO()
    write_tum_trajectory(traj, out, header=header)
    return out.getvalue()


def write_tum_trajectory(traj: Trajectory, dest, header=True):
    """Write TUM text; ``repr``-precision floats so a re-parse is exact."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        if header:
            fh.write("# timestamp tx ty tz qx qy qz qw\n")
        for t, p, q in zip(traj.timestamps, traj.positions, traj.quaternions):
            fh.write(" ".join(repr(float(v)) for v in (t, *p, *q)) + "\n")
    finally:
        if own:
            fh.close()


EUROC_COLUMNS = ("timestamp", "px", "py", "pz", "qw", "qx", "qy", "qz")


EUROC_ALIASES = {
    "timestamp": ("timestamp", "time", "t"),
    "px": ("px", "p_rs_r_x", "x"),
    "py": ("py", "p_rs_r_y", "y"),
    "pz": ("pz", "p_rs_r_z", "z"),
    "qw": ("qw", "q_rs_w"),
    "qx": ("qx", "q_rs_x"),
    "qy": ("qy", "q_rs_y"),
    "qz": ("qz", "q_rs_z"),
}


def _euroc_header_map(header):
    """Map required columns to indices; accepts EuRoC's verbose names."""
    names = [h.strip().lstrip("#").split("[")[0].strip().lower() for h in header]
    idx = {}
    for col, aliases in EUROC_ALIASES.items():
        for k, name in enumerate(names):
            if name in aliases:
                idx[col] = k
                break
    return idx


def parse_euroc_groundtruth(stream, strict=True, frame_id="") -> Trajectory:
    """Parse EuRoC ground-truth CSV (nanosecond stamps, ``qw`` first).

    The header row names the columns; both the short names
    (``timestamp, px, py, pz, qw, qx, qy, qz``) and EuRoC's
    ``p_RS_R_x [m]``/``q_RS_w []`` forms are recognised. Extra columns are
    ignored. Without a recognisable header the first eight columns are
    taken in that order.
    """
    fh, source = _open_text(stream)
    times, rows, stamps = [], [], []
    try:
        reader = csv.reader(fh)
        header = None
        cols = None
        for lineno, rec in enumerate(reader, 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if header is None:
                header = rec
                cols = _euroc_header_map(rec)
                if len(cols) == len(EUROC_COLUMNS):
                    continue
                if rec[0].strip().startswith("#") or not _looks_numeric(rec[0]):
                    missing = [c for c in EUROC_COLUMNS if c not in cols]
                    raise FormatError(f"{source or '<stream>'}: header lacks columns {missing}")
                cols = {c: k for k, c in enumerate(EUROC_COLUMNS)}
            if rec[0].strip().startswith("#"):
                continue
            try:
                if len(rec) <= max(cols.values()):
                    raise ValueError(f"expected at least {max(cols.values()) + 1} fields, found {len(rec)}")
                stamp = int(rec[cols["timestamp"]].strip())
                p = [float(rec[cols[c]]) for c in ("px", "py", "pz")]
                q = [float(rec[cols[c]]) for c in ("qx", "qy", "qz", "qw")]
                if not all(math.isfinite(v) for v in p + q):
                    raise ValueError("non-finite value")
            except ValueError as exc:
                if strict:
                    raise ParseError(str(exc), line=lineno, source=source) from None
                log.warning("%s:%d: skipped malformed row (%s)", source or "<stream>", lineno, exc)
                continue
            times.append(stamp * 1e-9)
            stamps.append(stamp)
            rows.append(p + q)
    finally:
        if fh is not stream:
            fh.close()
    if header is None:
        raise FormatError(f"{source or '<stream>'}: empty EuRoC file (no header)")
    return _finish(times, rows, source, frame_id, stamps)


def _looks_numeric(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_euroc_groundtruth(traj: Trajectory, dest):
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8", newline="") if own else dest
    try:
        fh.write("#timestamp,px,py,pz,qw,qx,qy,qz\n")
        if traj.stamps_ns is not None:
            stamps = [int(x) for x in traj.stamps_ns]
        else:
            stamps = [int(round(t * 1e9)) for t in traj.timestamps]
        for ns, p, q in zip(stamps, traj.positions, traj.quaternions):
            vals = [repr(float(v)) for v in (*p, q[3], q[0], q[1], q[2])]
            fh.write(f"{ns}," + ",".join(vals) + "\n")
    finally:
        if own:
            fh.close()


def load_trajectory(path, fmt=None, strict=True) -> Trajectory:
    """Load by explicit format (``tum``/``euroc``) or by extension (``.csv`` -> EuRoC)."""
    path = Path(path)
    fmt = fmt or ("euroc" if path.suffix.lower() == ".csv" else "tum")
    if fmt == "tum":
        return parse_tum_trajectory(path, strict=strict, frame_id=path.stem)
    if fmt == "euroc":
        return parse_euroc_groundtruth(path, strict=strict, frame_id=path.stem)
    raise ConfigError(f"unknown trajectory format {fmt!r}")


def parse_frame_list(stream):
    """Frame schedule file: one ``timestamp [frame_ref]`` per line, ``#`` comments."""
    fh, source = _open_text(stream)
    out = []
    try:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            try:
                t = float(parts[0])
            except ValueError:
                raise ParseError(f"bad timestamp {parts[0]!r}", line=lineno, source=source) from None
            out.append((t, parts[1] if len(parts) > 1 else str(len(out))))
    finally:
        if fh is not stream:
            fh.close()
    ts = [t for t, _ in out]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise FormatError(f"{source or '<stream>'}: frame timestamps not strictly increasing")
    return out


# --------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class SequenceEntry:
    id: str
    gt_path: Path
    environment: str
    crt_threshold: float
    frames_path: Path | None = None
    gt_format: str | None = None
    windows_path: Path | None = None


@dataclass
class SequenceManifest:
    sequences: list
    defaults: dict = field(default_factory=lambda: dict(CRT_THRESHOLDS))
    path: Path | None = None

    def __iter__(self):
        return iter(self.sequences)

    def __len__(self):
        return len(self.sequences)

    def get(self, seq_id):
        for s in self.sequences:
            if s.id == seq_id:
                return s
        raise KeyError(seq_id)


def resolve_config_path(path) -> Path:
    """Return ``path`` if it exists, else try ``$SLAMEVAL_CONFIG_DIR/path``."""
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get("SLAMEVAL_CONFIG_DIR")
    if base and not p.is_absolute() and (Path(base) / p).exists():
        return Path(base) / p
    raise InputNotFoundError(f"no such file: {p}")


def manifest_from_dict(doc, base_dir=Path(".")) -> SequenceManifest:
    if not isinstance(doc, dict) or not isinstance(doc.get("sequences"), list):
        raise ConfigError("manifest needs a 'sequences' list")
    defaults = dict(CRT_THRESHOLDS)
    for env, thr in (doc.get("environment_defaults") or {}).items():
        defaults[str(env)] = float(thr)
    seen = set()
    entries = []
    for k, raw in enumerate(doc["sequences"]):
        if not isinstance(raw, dict):
            raise ConfigError(f"sequence #{k} is not a mapping")
        for req in ("id", "gt_path", "environment"):
            if req not in raw:
                raise ConfigError(f"sequence #{k} lacks required field '{req}'")
        sid = str(raw["id"])
        if sid in seen:
            raise ConfigError(f"duplicate sequence id {sid!r}")
        seen.add(sid)
        env = str(raw["environment"])
        thr = raw.get("crt_threshold")
        if thr is None:
            if env not in defaults:
                raise ConfigError(f"sequence {sid!r}: environment {env!r} has no default "
                                  "CRT threshold and none was given")
            thr = defaults[env]
        thr = float(thr)
        if not thr > 0:
            raise ConfigError(f"sequence {sid!r}: crt_threshold must be positive")

        def rel(key):
            v = raw.get(key)
            return None if v is None else (base_dir / v)

        entries.append(SequenceEntry(
            id=sid, gt_path=rel("gt_path"), environment=env, crt_threshold=thr,
            frames_path=rel("frames_path"), gt_format=raw.get("gt_format"),
            windows_path=rel("windows_path"),
        ))
    return SequenceManifest(entries, defaults)


def load_manifest(path) -> SequenceManifest:
    """Load a YAML (or JSON) sequence manifest; relative paths resolve
    against the manifest's directory."""
    p = resolve_config_path(path)
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    m = manifest_from_dict(doc, p.parent)
    m.path = p
    return m


# --------------------------------------------------------------------------
# perturbation windows

WINDOW_KINDS = ("illumination", "dynamic", "blur")


@dataclass(frozen=True)
class PerturbationWindow:
    start: float
    end: float
    kind: str = "other"
    note: str = ""

    def __post_init__(self):
        if not self.start < self.end:
            raise ConfigError(f"window start {self.start} must precede end {self.end}")

    def contains(self, t):
        return self.start <= t <= self.end

    def to_dict(self):
        return {"start": self.start, "end": self.end, "kind": self.kind, "note": self.note}


def windows_from_list(items) -> list:
    out = []
    for w in items or []:
        kind = str(w.get("kind", "other"))
        if kind not in WINDOW_KINDS and not kind.startswith("other"):
            kind = f"other:{kind}"
        out.append(PerturbationWindow(float(w["start"]), float(w["end"]), kind, str(w.get("note", ""))))
    return out


def load_windows(path) -> list:
    """Sidecar YAML: ``windows: [{start, end, kind, note}, ...]``."""
    p = resolve_config_path(path)
    doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    items = doc.get("windows", []) if isinstance(doc, dict) else doc
    try:
        return windows_from_list(items)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: bad window entry ({exc})") from None


def save_windows(windows, path):
    Path(path).write_text(yaml.safe_dump({"windows": [w.to_dict() for w in windows]},
                                         sort_keys=False), encoding="utf-8")


def correlate_windows(series: MetricSeries, windows: Iterable[PerturbationWindow],
                      field: str = "latest_error") -> list:
    """Compare a series column inside each window against the rest of the run.

    Returns one dict per window with in-window mean/max, out-of-window mean,
    their ratio, and ``empty=True`` when no finite sample falls inside.
    """
    t = series.timestamps
    v = series.column(field)
    finite = np.isfinite(v)
    out = []
    for w in windows:
        inside = (t >= w.start) & (t <= w.end)
        vin = v[inside & finite]
        vout = v[~inside & finite]
        row = {"window": w.to_dict(), "samples_in": int(vin.size), "samples_out": int(vout.size),
               "in_mean": None, "in_max": None, "out_mean": None, "ratio": None,
               "empty": vin.size == 0}
        if vin.size:
            row["in_mean"] = float(vin.mean())
            row["in_max"] = float(vin.max())
        if vout.size:
            row["out_mean"] = float(vout.mean())
        if vin.size and vout.size and row["out_mean"] > 0:
            row["ratio"] = row["in_mean"] / row["out_mean"]
        out.append(row)
    return out
