"""Experiment orchestration: lockstep frame delivery, repetition, lifelong runs.

One experiment is one strictly serialized delivery loop: frame ``i + 1`` is
handed to the SUT only after frame ``i`` has returned. Poses go to a
:class:`~slameval.metrics.MonitorWorker` thread through a queue, so metric
computation never delays delivery, and per-frame wall time covers only the
``process_frame`` call.
"""

from __future__ import annotations

import concurrent.futures as cf
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ArgumentError, ConfigError, DegenerateGeometryError, InsufficientDataError
from ..geometry import AssociationPolicy, PoseSE3, Trajectory, associate, trajectory_length
from ..metrics import (AlignMode, AteResult, CrtMode, CrtResult, MetricSeries, MonitorWorker,
                       RpeDelta, RpeResult, aggregate_runs, ate, crt, normalized_ate_rmse, rpe)
from .sut import Frame, FrameResult, SutCrashed

log = logging.getLogger(__name__)

DEFAULT_FRAME_TIMEOUT = 30.0

RESTART_DISCARD = "discard"
RESTART_RESUME = "resume"


class FrameSchedule(list):
    """Ordered frames with strictly increasing timestamps."""

    def __init__(self, frames=()):
        super().__init__(frames)
        ts = [f.timestamp for f in self]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ArgumentError("frame schedule timestamps must be strictly increasing")

    @classmethod
    def from_timestamps(cls, timestamps, sequence="", refs=None):
        refs = list(refs) if refs is not None else [None] * len(timestamps)
        return cls(Frame(float(t), r, sequence, i)
                   for i, (t, r) in enumerate(zip(timestamps, refs)))

    @classmethod
    def from_trajectory(cls, traj: Trajectory, sequence=""):
        return cls.from_timestamps(traj.timestamps, sequence)

    @property
    def timestamps(self):
        return np.array([f.timestamp for f in self], dtype=float)


@dataclass(frozen=True)
class ExitStatus:
    kind: str  # "completed" | "crashed" | "timed_out"
    frame: int | None = None

    @classmethod
    def completed(cls):
        return cls("completed")

    @classmethod
    def crashed(cls, frame):
        return cls("crashed", frame)

    @classmethod
    def timed_out(cls, frame):
        return cls("timed_out", frame)

    @property
    def ok(self):
        return self.kind == "completed"

    def to_dict(self):
        return {"kind": self.kind, "frame": self.frame}

    def __str__(self):
        return self.kind if self.frame is None else f"{self.kind}({self.frame})"


@dataclass
class RunRecord:
    estimated: Trajectory
    tracking_events: list
    per_frame_wall_time: list
    exit: ExitStatus
    restarts: int = 0
    sequence: str = ""
    scheduled_frames: int = 0
    # (event, frame index, perf_counter) -- "deliver"/"return"
    event_log: list = field(default_factory=list)
    # every restart after a crash: (kind, frame index)
    failures: list = field(default_factory=list)

    @property
    def delivered_frames(self):
        return len(self.per_frame_wall_time)


@dataclass
class ExperimentResult:
    record: RunRecord
    series: MetricSeries | None
    # the SUT instance live at the end (differs from the input after a resume)
    sut: object = None


def _call_with_timeout(pool, fn, arg, timeout):
    def timed():
        t0 = time.perf_counter()
        out = fn(arg)
        return out, time.perf_counter() - t0

    fut = pool.submit(timed)
    return fut.result(timeout=timeout)


def run_experiment(sut, schedule: Sequence[Frame], gt: Trajectory, *, monitor=True,
                   timeout=DEFAULT_FRAME_TIMEOUT, policy: AssociationPolicy | None = None,
                   mode=AlignMode.SE3, rpe_delta: RpeDelta | None = None,
                   restart_policy=RESTART_DISCARD, sut_factory: Callable | None = None,
                   sequence: str = "", shutdown=True) -> ExperimentResult:
    """Deliver ``schedule`` to an initialised ``sut`` one frame at a time.

    A crash or timeout ends the run with partial results kept, unless
    ``restart_policy="resume"``: then ``sut_factory()`` supplies a fresh
    SUT, it is initialised, and delivery continues with the next frame.
    A completed run ends with ``sut.shutdown()`` unless ``shutdown=False``;
    a crashed SUT is left alone.
    """
    if restart_policy not in (RESTART_DISCARD, RESTART_RESUME):
        raise ConfigError(f"unknown restart policy {restart_policy!r}")
    if restart_policy == RESTART_RESUME and sut_factory is None:
        raise ConfigError("resume restart policy needs a sut_factory")
    worker = MonitorWorker(gt, policy, mode, rpe_delta) if monitor else None
    est = []
    tracking, wall, events, failures = [], [], [], []
    exit_status = ExitStatus.completed()
    restarts = 0
    pool = cf.ThreadPoolExecutor(max_workers=1, thread_name_prefix="slameval-sut")
    try:
        i = 0
        while i < len(schedule):
            frame = schedule[i]
            events.append(("deliver", i, time.perf_counter()))
            failure = None
            try:
                res, dt = _call_with_timeout(pool, sut.process_frame, frame, timeout)
            except cf.TimeoutError:
                failure = ExitStatus.timed_out(i)
                kill = getattr(sut, "kill", None)
                if kill is not None:
                    kill()
                # the hung call keeps its thread; deliver further frames elsewhere
                pool.shutdown(wait=False)
                pool = cf.ThreadPoolExecutor(max_workers=1, thread_name_prefix="slameval-sut")
            except Exception as exc:  # any SUT exception is a crash
                log.info("SUT crashed at frame %d: %s", i, exc)
                failure = ExitStatus.crashed(i)
            events.append(("return", i, time.perf_counter()))
            if failure is not None:
                failures.append(failure)
                if restart_policy == RESTART_RESUME:
                    restarts += 1
                    sut = sut_factory()
                    sut.init(None)
                    i += 1
                    continue
                exit_status = failure
                break
            if not isinstance(res, FrameResult):
                res = FrameResult(*res)
            wall.append(dt)
            tracked = bool(res.tracking) and res.pose is not None
            tracking.append((frame.timestamp, tracked))
            if tracked:
                est.append((frame.timestamp, res.pose))
                if worker is not None:
                    worker.submit(frame.timestamp, res.pose)
            i += 1
        if exit_status.ok and shutdown:
            sut.shutdown()
    finally:
        pool.shutdown(wait=False)
    series = worker.close() if worker is not None else None
    record = RunRecord(
        estimated=Trajectory.from_poses(est),
        tracking_events=tracking,
        per_frame_wall_time=wall,
        exit=exit_status,
        restarts=restarts,
        sequence=sequence,
        scheduled_frames=len(schedule),
        event_log=events,
        failures=failures,
    )
    return ExperimentResult(record, series, sut)


def measure_frame_rate(record: RunRecord) -> float:
    n = len(record.per_frame_wall_time)
    if n == 0:
        raise ArgumentError("no delivered frames")
    total = float(sum(record.per_frame_wall_time))
    if not total > 0:
        raise ArgumentError("zero total processing time")
    return n / total


# --------------------------------------------------------------------------
# per-run evaluation

@dataclass
class RunMetrics:
    ate: AteResult | None
    rpe: RpeResult | None
    crt: CrtResult | None
    normalized_ate: float | None
    frame_rate: float | None
    error: str | None = None


def frame_errors(record: RunRecord, schedule: Sequence[Frame], ate_result: AteResult | None):
    """Per scheduled frame ``(timestamp, error)`` plus tracked flags.

    Frames never delivered (after a crash), lost frames and frames whose pose
    had no ground-truth match get ``error=None`` / ``tracked=False``.
    """
    err_at = {}
    if ate_result is not None:
        err_at = dict(zip(ate_result.timestamps.tolist(), ate_result.errors.tolist()))
    tracked_at = dict(record.tracking_events)
    errors, flags = [], []
    for f in schedule:
        e = err_at.get(f.timestamp)
        errors.append((f.timestamp, e))
        flags.append(bool(tracked_at.get(f.timestamp, False)) and e is not None)
    return errors, flags


def evaluate_run(record: RunRecord, schedule, gt: Trajectory, *, policy=None,
                 mode=AlignMode.SE3, rpe_delta=None, crt_threshold=None,
                 crt_mode=CrtMode.FRAME_COUNT, gt_length=None) -> RunMetrics:
    matched = associate(record.estimated, gt, policy or AssociationPolicy())
    a = r = c = None
    problems = []
    try:
        a = ate(matched, mode)
    except (InsufficientDataError, DegenerateGeometryError) as exc:
        problems.append(f"ate: {exc}")
    try:
        r = rpe(matched, rpe_delta)
    except InsufficientDataError as exc:
        problems.append(f"rpe: {exc}")
    if crt_threshold is not None and len(schedule):
        errs, flags = frame_errors(record, schedule, a)
        c = crt(errs, flags, crt_threshold, crt_mode)
    length = trajectory_length(gt) if gt_length is None else gt_length
    norm = normalized_ate_rmse(a.rmse, length) if (a is not None and length > 0) else None
    try:
        fps = measure_frame_rate(record)
    except ArgumentError:
        fps = None
    return RunMetrics(a, r, c, norm, fps, "; ".join(problems) or None)


# --------------------------------------------------------------------------
# repetition

@dataclass
class RepeatedResult:
    runs: list          # ExperimentResult per run
    metrics: list       # RunMetrics per run
    crashes: int
    crash_rate: float
    aggregate: float | None  # median normalized ATE-RMSE of completed runs

    @property
    def available(self):
        return self.aggregate is not None


def run_repeated(sut_factory: Callable, schedule, gt: Trajectory, n: int, *,
                 workers=1, crt_threshold=None, restart_policy=RESTART_DISCARD,
                 **kwargs) -> RepeatedResult:
    """``n`` independent runs, each with a fresh SUT from ``sut_factory(run_index)``.

    A run counts as crashed if it ended in a crash or timeout, or needed a
    restart. The aggregate is the median normalized ATE-RMSE over completed
    runs; it is ``None`` when no run completed.
    """
    if n < 1:
        raise ArgumentError("need at least one run")
    eval_keys = ("policy", "mode", "rpe_delta")
    ev_kwargs = {k: kwargs[k] for k in eval_keys if k in kwargs}
    length = trajectory_length(gt)

    def one(i):
        sut = sut_factory(i)
        sut.init(None)
        res = run_experiment(sut, schedule, gt, restart_policy=restart_policy,
                             sut_factory=lambda: sut_factory(i), **kwargs)
        m = evaluate_run(res.record, schedule, gt, crt_threshold=crt_threshold,
                         gt_length=length, **ev_kwargs)
        return res, m

    if workers > 1:
        with cf.ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(one, range(n)))
    else:
        out = [one(i) for i in range(n)]
    runs = [o[0] for o in out]
    metrics = [o[1] for o in out]
    crashes = sum(1 for r in runs if r.record.failures)
    vals = [m.normalized_ate for r, m in out
            if r.record.exit.ok and m.normalized_ate is not None]
    agg = aggregate_runs(vals) if vals else None
    return RepeatedResult(runs, metrics, crashes, crashes / n, agg)


# --------------------------------------------------------------------------
# lifelong

@dataclass
class LoadedSequence:
    id: str
    gt: Trajectory
    schedule: FrameSchedule
    crt_threshold: float
    environment: str = ""
    windows: list = field(default_factory=list)


def load_sequences(manifest, windows_dir=None) -> list:
    """Read ground truth, frame lists and window sidecars for a manifest."""
    from pathlib import Path

    from ..datasets import load_trajectory, load_windows, parse_frame_list

    out = []
    for e in manifest:
        gt = load_trajectory(e.gt_path, e.gt_format)
        if e.frames_path is not None:
            frames = parse_frame_list(e.frames_path)
            sched = FrameSchedule.from_timestamps([t for t, _ in frames], e.id,
                                                  [r for _, r in frames])
        else:
            sched = FrameSchedule.from_trajectory(gt, e.id)
        wins = []
        wpath = e.windows_path
        if wpath is None and windows_dir is not None:
            cand = Path(windows_dir) / f"{e.id}.windows.yaml"
            wpath = cand if cand.exists() else None
        if wpath is not None:
            wins = load_windows(wpath)
        out.append(LoadedSequence(e.id, gt, sched, e.crt_threshold, e.environment, wins))
    return out


@dataclass
class SequenceOutcome:
    sequence: LoadedSequence
    result: ExperimentResult
    metrics: RunMetrics


@dataclass
class LifelongResult:
    sequences: list  # SequenceOutcome, manifest order
    restarts: int

    def summary(self):
        crts = [s.metrics.crt.correct_ratio for s in self.sequences if s.metrics.crt]
        norms = [s.metrics.normalized_ate for s in self.sequences
                 if s.metrics.normalized_ate is not None]
        return {
            "sequences": len(self.sequences),
            "mean_crt": float(np.mean(crts)) if crts else None,
            "median_normalized_ate": aggregate_runs(norms) if norms else None,
            "restarts": self.restarts,
            "crashed_sequences": sum(1 for s in self.sequences
                                     if not s.result.record.exit.ok or s.result.record.failures),
        }


def run_lifelong(sut_factory: Callable, sequences, *, reset_between=False,
                 restart_policy=RESTART_DISCARD, crt_mode=CrtMode.FRAME_COUNT,
                 **kwargs) -> LifelongResult:
    """Feed several sequences of one environment to the same SUT, in order.

    ``sequences`` is a manifest or a list of :class:`LoadedSequence`. The SUT
    persists across sequences unless ``reset_between``. After a crash the
    rest of that sequence counts as untracked and a restarted SUT carries on
    with the next sequence (or, with ``restart_policy="resume"``, with the
    next frame).
    """
    if not isinstance(sequences, list) or (sequences and not isinstance(sequences[0], LoadedSequence)):
        sequences = load_sequences(sequences)
    ev_kwargs = {k: kwargs[k] for k in ("policy", "mode", "rpe_delta") if k in kwargs}
    restarts = 0
    sut = sut_factory(0)
    sut.init(None)
    outcomes = []
    for k, seq in enumerate(sequences):
        if k and reset_between:
            sut.shutdown()
            sut = sut_factory(0)
            sut.init(None)
        res = run_experiment(sut, seq.schedule, seq.gt, restart_policy=restart_policy,
                             sut_factory=lambda: sut_factory(0), sequence=seq.id,
                             shutdown=False, **kwargs)
        restarts += res.record.restarts
        sut = res.sut
        m = evaluate_run(res.record, seq.schedule, seq.gt, crt_threshold=seq.crt_threshold,
                         crt_mode=crt_mode, **ev_kwargs)
        outcomes.append(SequenceOutcome(seq, res, m))
        if not res.record.exit.ok and k + 1 < len(sequences):
            restarts += 1
            res.record.restarts += 1
            sut = sut_factory(0)
            sut.init(None)
    if outcomes and outcomes[-1].result.record.exit.ok:
        sut.shutdown()
    return LifelongResult(outcomes, restarts)
