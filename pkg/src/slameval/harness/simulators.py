"""Synthetic systems under test.

Simulators read only frame timestamps and the ground truth they were built
with, and emit poses derived from it: exact, drifting, noisy inside
perturbation windows, lost during given intervals, or crashing at a frame.
All randomness comes from one seeded generator per instance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError
from ..geometry import PoseSE3, Trajectory, interpolate_pose
from .sut import Frame, FrameResult, SutCrashed

MODELS = {
    "perfect": "returns ground truth exactly",
    "drift": "adds rate*k meters along an axis at the k-th frame (rate=, axis=)",
    "tracking_loss": "reports LOST inside time intervals (intervals=a-b;c-d)",
    "perturbation_sensitive": "Gaussian position noise, larger inside windows (sigma=, base=)",
    "crash_at": "crashes at a frame index with some probability per run (frame=, p=)",
}
COMMON_PARAMS = "common: seed=<int>, sleep=<seconds per frame>"

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class SimulatedSutConfig:
    model: str = "perfect"
    seed: int = 0
    drift_rate: float = 0.0
    drift_axis: str = "x"
    loss_intervals: tuple = ()
    noise_sigma: float = 0.0
    # ((start, end, sigma[, sequence]), ...): extra noise inside each window,
    # optionally only for frames of one sequence
    window_sigmas: tuple = ()
    crash_frame: int | None = None
    crash_probability: float = 1.0
    frame_sleep: float = 0.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown simulator model {self.model!r}; known: {sorted(MODELS)}")
        if self.drift_rate < 0:
            raise ConfigError("drift rate must be >= 0")
        if self.drift_axis not in AXES:
            raise ConfigError(f"drift axis must be one of {sorted(AXES)}")
        if self.noise_sigma < 0 or any(w[2] < 0 for w in self.window_sigmas):
            raise ConfigError("noise sigma must be >= 0")
        if not 0.0 <= self.crash_probability <= 1.0:
            raise ConfigError("crash probability must lie in [0, 1]")
        if self.frame_sleep < 0:
            raise ConfigError("sleep must be >= 0")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def scaled(self, c):
        """Same behavior in a scene scaled by ``c`` (all lengths times ``c``)."""
        return replace(self, drift_rate=self.drift_rate * c, noise_sigma=self.noise_sigma * c,
                       window_sigmas=tuple((w[0], w[1], w[2] * c, *w[3:]) for w in self.window_sigmas))


def _parse_intervals(text):
    out = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        a, b = part.split("-", 1)
        out.append((float(a), float(b)))
    return tuple(out)


def parse_sim_spec(spec: str, windows=()) -> SimulatedSutConfig:
    """Parse ``model[:key=value,...]``.

    ``windows`` (perturbation windows, as a list or as a mapping from
    sequence id to list) feed the ``perturbation_sensitive`` model; its
    ``sigma`` applies inside every window.
    """
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in MODELS:
        raise ConfigError(f"unknown simulator model {name!r}; known: {sorted(MODELS)}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        if "=" not in item:
            raise ConfigError(f"simulator parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    kw = {"model": name}
    try:
        if "seed" in params:
            kw["seed"] = int(params.pop("seed"))
        if "sleep" in params:
            kw["frame_sleep"] = float(params.pop("sleep"))
        if name == "drift":
            kw["drift_rate"] = float(params.pop("rate", 0.01))
            kw["drift_axis"] = params.pop("axis", "x")
        elif name == "tracking_loss":
            kw["loss_intervals"] = _parse_intervals(params.pop("intervals", ""))
        elif name == "perturbation_sensitive":
            sigma = float(params.pop("sigma", 0.5))
            kw["noise_sigma"] = float(params.pop("base", 0.01))
            if isinstance(windows, dict):
                kw["window_sigmas"] = tuple((w.start, w.end, sigma, seq)
                                            for seq, ws in windows.items() for w in ws)
            else:
                kw["window_sigmas"] = tuple((w.start, w.end, sigma) for w in windows)
        elif name == "crash_at":
            kw["crash_frame"] = int(params.pop("frame", 0))
            kw["crash_probability"] = float(params.pop("p", 1.0))
    except ValueError as exc:
        raise ConfigError(f"bad simulator parameter in {spec!r}: {exc}") from None
    if params:
        raise ConfigError(f"unknown parameters for {name}: {sorted(params)}")
    return SimulatedSutConfig(**kw)


class SimulatedSut:
    """In-process SUT following a :class:`SimulatedSutConfig`.

    ``ground_truth`` is a trajectory, or a mapping from sequence id to
    trajectory for multi-sequence runs. Frames outside the ground-truth span
    get the nearest endpoint pose.
    """

    def __init__(self, config: SimulatedSutConfig, ground_truth):
        self.config = config
        if isinstance(ground_truth, Trajectory):
            ground_truth = {"": ground_truth}
        self.ground_truth = dict(ground_truth)
        self.rng = None
        self.frames_seen = 0
        self.will_crash = False

    def init(self, config=None):
        self.rng = np.random.default_rng(self.config.seed)
        self.frames_seen = 0
        c = self.config
        self.will_crash = c.crash_frame is not None and self.rng.random() < c.crash_probability

    def _gt_pose(self, frame):
        gt = self.ground_truth.get(frame.sequence)
        if gt is None:
            if len(self.ground_truth) == 1:
                gt = next(iter(self.ground_truth.values()))
            else:
                raise ConfigError(f"simulator has no ground truth for sequence {frame.sequence!r}")
        t = min(max(frame.timestamp, gt.timestamps[0]), gt.timestamps[-1])
        return interpolate_pose(gt, t)

    def process_frame(self, frame: Frame) -> FrameResult:
        c = self.config
        k = self.frames_seen
        if self.will_crash and k == c.crash_frame:
            raise SutCrashed(f"simulated crash at frame {k}")
        self.frames_seen += 1
        if c.frame_sleep:
            time.sleep(c.frame_sleep)
        t = frame.timestamp
        # noise is drawn every frame, lost or not, so the stream stays aligned
        sigma = c.noise_sigma
        for w in c.window_sigmas:
            if w[0] <= t <= w[1] and (len(w) < 4 or w[3] == frame.sequence):
                sigma = float(np.hypot(sigma, w[2]))
        noise = self.rng.normal(0.0, 1.0, 3) * sigma if (c.noise_sigma or c.window_sigmas) else None
        if any(a <= t <= b for a, b in c.loss_intervals):
            return FrameResult.lost()
        pose = self._gt_pose(frame)
        p = np.array(pose.translation)
        if c.drift_rate:
            p[AXES[c.drift_axis]] += c.drift_rate * k
        if noise is not None:
            p += noise
        return FrameResult(PoseSE3(pose.rotation, p), True)

    def shutdown(self) -> int:
        return 0


def simulator_factory(config: SimulatedSutConfig, ground_truth):
    """SUT factory for the runners: run ``i`` gets seed ``config.seed + i``."""

    def make(run_index=0):
        return SimulatedSut(config.with_seed(config.seed + run_index), ground_truth)

    return make
