import sys

import numpy as np
import pytest

from slameval.datasets import load_trajectory
from slameval.errors import ProtocolError
from slameval.geometry import PoseSE3
from slameval.harness import ExitStatus, FrameSchedule, SubprocessSut, run_experiment
from slameval.harness.sut import format_pose_line, parse_response_line


def wire(gt, *extra):
    return SubprocessSut([sys.executable, "-m", "slameval.harness.wire_sim", str(gt), *extra])


@pytest.fixture
def gt_path(data_dir):
    return data_dir / "gt.txt"


def short(gt_path, n=40):
    gt = load_trajectory(gt_path)[:n]
    return gt, FrameSchedule.from_trajectory(gt)


def test_pose_line_round_trip():
    p = PoseSE3([0.1, 0.2, 0.3, 0.9], [1.5, -2.25, 1e-17])
    back = parse_response_line(format_pose_line(p))
    assert back.tracking
    assert np.array_equal(back.pose.translation, p.translation)
    assert np.array_equal(back.pose.rotation, p.rotation)
    assert parse_response_line("LOST").pose is None
    for bad in ("POSE 1 2 3", "HELLO", "POSE a b c d e f g", ""):
        with pytest.raises(ProtocolError):
            parse_response_line(bad)


def test_subprocess_perfect(gt_path):
    gt, sched = short(gt_path)
    sut = wire(gt_path)
    sut.init()
    rec = run_experiment(sut, sched, gt).record
    assert rec.exit.ok
    assert np.max(np.abs(rec.estimated.positions - gt.positions)) < 1e-12
    assert sut.proc.returncode == 0


def test_subprocess_crash(gt_path):
    gt, sched = short(gt_path)
    sut = wire(gt_path, "--crash-after", "25")
    sut.init()
    rec = run_experiment(sut, sched, gt).record
    assert rec.exit == ExitStatus.crashed(25)
    assert len(rec.estimated) == 25 and len(rec.per_frame_wall_time) == 25


def test_subprocess_hang_times_out(gt_path):
    gt, sched = short(gt_path)
    sut = wire(gt_path, "--hang-at", "5")
    sut.init()
    rec = run_experiment(sut, sched, gt, timeout=1.0).record
    assert rec.exit == ExitStatus.timed_out(5)
    assert sut.proc.poll() is not None


def test_bad_handshake():
    sut = SubprocessSut([sys.executable, "-c", "print('HELLO')"])
    with pytest.raises(ProtocolError):
        sut.init()
