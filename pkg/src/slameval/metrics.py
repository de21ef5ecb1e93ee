"""Trajectory error metrics and the continuous per-pose monitor.

ATE aligns estimate positions to ground truth and reports translational
residuals; RPE compares relative motions over a fixed interval and needs no
alignment; CRT is the fraction of frames (or of time) during which tracking
held and the error stayed under a threshold.
"""

from __future__ import annotations

import logging
import math
import queue
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .alignment import Alignment, umeyama_align
from .errors import (ArgumentError, DegenerateGeometryError, InsufficientDataError,
                     ProtocolError)
from .geometry import (AssociationMethod, AssociationPolicy, MatchedPairs, PoseSE3,
                       TIME_EPS, Trajectory, associate, nearest_pair_indices,
                       quats_to_matrices)

log = logging.getLogger(__name__)

#: CRT thresholds (meters) per environment type.
CRT_THRESHOLDS = {
    "office": 1.0,
    "home": 3.0,
    "cafe": 3.0,
    "corridor": 5.0,
    "market": 5.0,
}


class AlignMode(str, Enum):
    SE3 = "se3"
    SIM3 = "sim3"


class CrtMode(str, Enum):
    FRAME_COUNT = "frame_count"
    TIME_WEIGHTED = "time_weighted"


@dataclass(frozen=True)
class RpeDelta:
    """Interval for RPE: ``frames`` (index offset) or ``seconds``."""

    unit: str = "seconds"
    value: float = 1.0

    def __post_init__(self):
        if self.unit not in ("frames", "seconds"):
            raise ArgumentError(f"unknown RPE delta unit {self.unit!r}")
        if self.unit == "frames" and (int(self.value) != self.value or self.value < 1):
            raise ArgumentError("frame delta must be a positive integer")
        if not self.value > 0:
            raise ArgumentError("RPE delta must be positive")

    @classmethod
    def frames(cls, k):
        return cls("frames", int(k))

    @classmethod
    def seconds(cls, s):
        return cls("seconds", float(s))

    @classmethod
    def parse(cls, text):
        """``"1s"``/``"1.5"`` -> seconds, ``"1f"``/``"3frames"`` -> frames."""
        raw = text
        text = str(text).strip().lower()
        try:
            for suffix in ("frames", "frame", "f"):
                if text.endswith(suffix):
                    return cls.frames(int(text[: -len(suffix)]))
            for suffix in ("seconds", "s"):
                if text.endswith(suffix):
                    return cls.seconds(float(text[: -len(suffix)]))
            return cls.seconds(float(text))
        except ArgumentError:
            raise
        except ValueError:
            raise ArgumentError(f"bad RPE interval {raw!r}") from None

    def __str__(self):
        return f"{int(self.value)}f" if self.unit == "frames" else f"{self.value:g}s"


# --------------------------------------------------------------------------
# results

@dataclass(frozen=True, eq=False)
class AteResult:
    timestamps: np.ndarray
    errors: np.ndarray
    rmse: float
    mean: float
    median: float
    max: float
    alignment_used: Alignment

    @property
    def per_pose_errors(self):
        return list(zip(self.timestamps.tolist(), self.errors.tolist()))

    def summary(self):
        return {"rmse": self.rmse, "mean": self.mean, "median": self.median,
                "max": self.max, "pairs": int(self.errors.shape[0])}


@dataclass(frozen=True, eq=False)
class RpeResult:
    timestamps: np.ndarray
    trans_errors: np.ndarray
    rot_errors: np.ndarray
    trans_rmse: float
    rot_rmse: float
    delta: RpeDelta

    @property
    def per_pair_trans_errors(self):
        return list(zip(self.timestamps.tolist(), self.trans_errors.tolist()))

    @property
    def per_pair_rot_errors(self):
        return list(zip(self.timestamps.tolist(), self.rot_errors.tolist()))

    def summary(self):
        return {"trans_rmse": self.trans_rmse, "rot_rmse": self.rot_rmse,
                "delta": str(self.delta), "pairs": int(self.trans_errors.shape[0])}


@dataclass(frozen=True)
class CrtResult:
    correct_ratio: float
    mode: CrtMode
    threshold: float
    counted_frames: int
    total_frames: int

    def summary(self):
        return {"correct_ratio": self.correct_ratio, "mode": self.mode.value,
                "threshold": self.threshold, "counted_frames": self.counted_frames,
                "total_frames": self.total_frames}


# --------------------------------------------------------------------------
# batch metrics

def _rmse(e):
    return float(math.sqrt(np.mean(e * e)))


def ate(matched: MatchedPairs, mode: AlignMode | str = AlignMode.SE3) -> AteResult:
    mode = AlignMode(mode)
    n = len(matched)
    if n < 3:
        raise InsufficientDataError(f"ATE needs at least 3 matched pairs, got {n}", count=n)
    al = umeyama_align(matched.est_positions, matched.gt_positions,
                       with_scale=mode is AlignMode.SIM3)
    err = kernels.residual_norms(matched.est_positions, matched.gt_positions,
                                 al.rotation, al.translation, al.scale)
    return AteResult(
        timestamps=np.asarray(matched.timestamps),
        errors=err,
        rmse=_rmse(err),
        mean=float(np.mean(err)),
        median=float(np.median(err)),
        max=float(np.max(err)),
        alignment_used=al,
    )


def rpe_index_pairs(timestamps, delta: RpeDelta):
    """Index pairs ``(i, j)``: ``j = i + k`` for frame deltas, otherwise the
    first ``j`` with ``t_j - t_i >= delta`` seconds."""
    t = np.asarray(timestamps, dtype=float)
    n = t.shape[0]
    if delta.unit == "frames":
        k = int(delta.value)
        i = np.arange(max(n - k, 0))
        return i, i + k
    j = np.searchsorted(t, t + delta.value - TIME_EPS, side="left")
    ok = j < n
    return np.arange(n)[ok], j[ok]


def rpe(matched: MatchedPairs, delta: RpeDelta | None = None) -> RpeResult:
    delta = delta or RpeDelta()
    i, j = rpe_index_pairs(matched.timestamps, delta)
    if i.shape[0] == 0:
        raise InsufficientDataError(
            f"no pose pairs {delta} apart among {len(matched)} matched poses", count=len(matched))
    est_R = quats_to_matrices(matched.est_quaternions)
    gt_R = quats_to_matrices(matched.gt_quaternions)
    tr, rot = kernels.relative_errors(est_R, matched.est_positions, gt_R,
                                      matched.gt_positions, i, j)
    return RpeResult(
        timestamps=np.asarray(matched.timestamps)[i],
        trans_errors=tr,
        rot_errors=rot,
        trans_rmse=_rmse(tr),
        rot_rmse=_rmse(rot),
        delta=delta,
    )


def crt(per_pose_errors, tracked_flags, threshold, mode=CrtMode.FRAME_COUNT,
        extra_predicate: Callable[[float, float], bool] | None = None) -> CrtResult:
    """Correct rate of tracking over a frame schedule.

    ``per_pose_errors`` holds one ``(timestamp, error)`` per scheduled frame;
    the error may be ``None``/NaN for frames without a pose. A frame counts as
    correct when tracked, its error is finite and ``<= threshold``, and
    ``extra_predicate(t, error)`` (if given) holds.

    In ``time_weighted`` mode each frame is weighted by the gap to the next
    frame; the last frame gets the mean gap.
    """
    mode = CrtMode(mode)
    if not threshold > 0:
        raise ArgumentError("CRT threshold must be positive")
    per_pose_errors = list(per_pose_errors)
    flags = list(tracked_flags)
    n = len(per_pose_errors)
    if n == 0:
        raise InsufficientDataError("CRT over an empty frame list", count=0)
    if len(flags) != n:
        raise ArgumentError(f"{len(flags)} tracking flags for {n} frames")

    t = np.array([p[0] for p in per_pose_errors], dtype=float)
    e = np.array([np.nan if p[1] is None else p[1] for p in per_pose_errors], dtype=float)
    ok = np.asarray(flags, dtype=bool) & np.isfinite(e) & (np.nan_to_num(e, nan=np.inf) <= threshold)
    if extra_predicate is not None:
        ok &= np.array([bool(extra_predicate(ti, ei)) for ti, ei in zip(t, e)])

    if mode is CrtMode.FRAME_COUNT or n == 1:
        # a single frame has no gap to weigh by; both modes agree
        ratio = float(np.count_nonzero(ok)) / n
    else:
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise ArgumentError("time-weighted CRT needs strictly increasing timestamps")
        w = np.append(gaps, gaps.mean())
        ratio = float(np.sum(w[ok]) / np.sum(w))
    return CrtResult(ratio, mode, float(threshold), int(np.count_nonzero(ok)), n)


def normalized_ate_rmse(ate_rmse, length) -> float:
    if not length > 0:
        raise ArgumentError(f"trajectory length must be positive, got {length!r}")
    return ate_rmse / length


def aggregate_runs(values: Sequence[float]) -> float:
    """Median; for an even count, the mean of the two central values."""
    v = sorted(float(x) for x in values)
    if not v:
        raise ArgumentError("aggregate over zero runs")
    m = len(v) // 2
    if len(v) % 2:
        return v[m]
    return (v[m - 1] + v[m]) / 2.0


# --------------------------------------------------------------------------
# continuous monitoring

@dataclass(frozen=True)
class MetricEntry:
    timestamp: float
    ate_rmse_so_far: float
    latest_rpe_trans: float
    # error of the newest pose under the current prefix alignment
    latest_error: float
    aligned: bool


@dataclass
class MetricSeries:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def column(self, name):
        return np.array([getattr(e, name) for e in self.entries], dtype=float)

    @property
    def timestamps(self):
        return self.column("timestamp")


class ContinuousMonitor:
    """Re-aligns the estimate prefix against ground truth after every pose.

    Each :meth:`update` re-associates the prefix, re-runs the alignment from
    scratch when at least three pairs exist, and appends a
    :class:`MetricEntry`. Until alignment is possible the entry carries NaN
    values and ``aligned=False``.
    """

    def __init__(self, gt: Trajectory, policy: AssociationPolicy | None = None,
                 mode=AlignMode.SE3, rpe_delta: RpeDelta | None = None):
        if len(gt) == 0:
            raise ArgumentError("monitor needs a non-empty ground truth")
        self.gt = gt
        self.policy = policy or AssociationPolicy()
        self.mode = AlignMode(mode)
        self.rpe_delta = rpe_delta or RpeDelta()
        self.series = MetricSeries()
        self._n = 0
        self._ts = np.empty(64)
        self._ps = np.empty((64, 3))
        self._qs = np.empty((64, 4))
        # nearest-mode incremental association state
        self._ei = []
        self._gi = []
        self._cand_hi = -1

    def _append(self, t, pose):
        if self._n == self._ts.shape[0]:
            cap = 2 * self._n
            self._ts = np.resize(self._ts, cap)
            self._ps = np.resize(self._ps, (cap, 3))
            self._qs = np.resize(self._qs, (cap, 4))
        self._ts[self._n] = t
        self._ps[self._n] = pose.translation
        self._qs[self._n] = pose.rotation
        self._n += 1

    def _associate_prefix(self):
        n = self._n
        ts, ps, qs = self._ts[:n], self._ps[:n], self._qs[:n]
        if self.policy.method is not AssociationMethod.NEAREST:
            return associate(Trajectory(ts, ps, qs), self.gt, self.policy)
        t = ts[-1]
        gt_t = self.gt.timestamps
        d = self.policy.max_time_diff + TIME_EPS
        lo = int(np.searchsorted(gt_t, t - d, side="left"))
        hi = int(np.searchsorted(gt_t, t + d, side="right"))
        if lo > self._cand_hi:
            # candidates disjoint from every earlier estimate's, so the greedy
            # matching of the prefix extends the previous one
            best = None
            for j in range(lo, hi):
                dj = abs(t - gt_t[j])
                if dj <= d and (best is None or dj < best[0]):
                    best = (dj, j)
            if best is not None:
                self._ei.append(n - 1)
                self._gi.append(best[1])
        else:
            pairs = nearest_pair_indices(ts, gt_t, self.policy.max_time_diff)
            self._ei = [i for i, _ in pairs]
            self._gi = [j for _, j in pairs]
        if hi > lo:
            self._cand_hi = max(self._cand_hi, hi - 1)
        ei = np.array(self._ei, dtype=int)
        gi = np.array(self._gi, dtype=int)
        return MatchedPairs(ts[ei], ps[ei], qs[ei],
                            self.gt.positions[gi], self.gt.quaternions[gi],
                            unmatched_est=n - len(ei), unmatched_gt=len(self.gt) - len(gi))

    def update(self, t: float, pose: PoseSE3) -> MetricEntry:
        if self._n and not t > self._ts[self._n - 1]:
            raise ProtocolError(f"pose at t={t!r} arrived after t={self._ts[self._n - 1]!r}")
        self._append(float(t), pose)
        matched = self._associate_prefix()
        nan = float("nan")
        entry = MetricEntry(float(t), nan, nan, nan, False)
        if len(matched) >= 3:
            try:
                res = ate(matched, self.mode)
            except DegenerateGeometryError:
                res = None
            if res is not None:
                latest = float(res.errors[-1]) if matched.timestamps[-1] == t else nan
                entry = MetricEntry(float(t), res.rmse, self._latest_rpe(matched), latest, True)
        if not entry.aligned and len(matched) >= 2:
            entry = MetricEntry(float(t), nan, self._latest_rpe(matched), nan, False)
        self.series.entries.append(entry)
        return entry

    def _latest_rpe(self, matched):
        ts = matched.timestamps
        n = ts.shape[0]
        if self.rpe_delta.unit == "frames":
            k = int(self.rpe_delta.value)
            if n <= k:
                return float("nan")
            i, j = n - 1 - k, n - 1
        else:
            # last i that still has a partner, using the same test as rpe_index_pairs
            dv = self.rpe_delta.value - TIME_EPS
            i = int(np.searchsorted(ts, ts[-1] - dv, side="right")) - 1
            while i >= 0 and not ts[i] + dv <= ts[-1]:
                i -= 1
            while i + 1 < n and ts[i + 1] + dv <= ts[-1]:
                i += 1
            if i < 0:
                return float("nan")
            j = int(np.searchsorted(ts, ts[i] + dv, side="left"))
        sel = np.array([i, j])
        tr, _ = kernels.relative_errors(
            quats_to_matrices(matched.est_quaternions[sel]), matched.est_positions[sel],
            quats_to_matrices(matched.gt_quaternions[sel]), matched.gt_positions[sel],
            np.array([0]), np.array([1]))
        return float(tr[0])


def continuous_monitor(gt: Trajectory, pose_events: Iterable[tuple[float, PoseSE3]],
                       policy=None, mode=AlignMode.SE3, rpe_delta=None) -> MetricSeries:
    mon = ContinuousMonitor(gt, policy, mode, rpe_delta)
    for t, pose in pose_events:
        mon.update(t, pose)
    return mon.series


class MonitorWorker:
    """Runs a :class:`ContinuousMonitor` on its own thread.

    :meth:`submit` only enqueues, so the frame-delivery loop never waits on
    metric computation. :meth:`close` drains the queue and returns the
    series; a protocol error raised inside the worker is re-raised there.
    """

    _STOP = object()

    def __init__(self, gt, policy=None, mode=AlignMode.SE3, rpe_delta=None):
        self.monitor = ContinuousMonitor(gt, policy, mode, rpe_delta)
        self._q = queue.SimpleQueue()
        self._error = None
        self._thread = threading.Thread(target=self._run, name="slameval-monitor", daemon=True)
        self._thread.start()

    def _run(self):
        while True:
            item = self._q.get()
            if item is self._STOP:
                return
            if self._error is not None:
                continue
            try:
                self.monitor.update(*item)
            except Exception as exc:  # surfaced on close()
                self._error = exc

    def submit(self, t, pose):
        self._q.put((t, pose))

    def close(self) -> MetricSeries:
        self._q.put(self._STOP)
        self._thread.join()
        if self._error is not None:
            raise self._error
        return self.monitor.series
