import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from slameval.errors import ProtocolError
from slameval.geometry import (AssociationPolicy, MatchedPairs, PoseSE3, Trajectory, associate,
                               nearest_pair_indices)
from slameval.metrics import (AlignMode, ContinuousMonitor, MonitorWorker, RpeDelta, ate,
                              continuous_monitor, rpe)


def gt_traj(rng, n=80):
    t, pos, quat = oracles.smooth_trajectory(rng, n)
    return Trajectory(t, pos, quat)


def events(traj):
    return [(float(t), traj.pose(i)) for i, t in enumerate(traj.timestamps)]


def test_identical_stream_is_zero(backend, rng):
    gt = gt_traj(rng)
    s = continuous_monitor(gt, events(gt))
    assert len(s) == len(gt)
    assert not any(e.aligned for e in s.entries[:2])
    a = s.column("ate_rmse_so_far")[2:]
    assert np.all(a < 1e-12)
    assert np.all(s.column("latest_rpe_trans")[s.column("latest_rpe_trans") == s.column("latest_rpe_trans")] < 1e-12)


def test_jump_shows_as_step(backend):
    n = 100
    t = np.arange(n) * 0.1
    pos = np.c_[t, np.sin(t), 0.1 * t * t]
    gt = Trajectory(t, pos)
    est_pos = pos.copy()
    est_pos[t >= 5.0 - 1e-9, 0] += 1.0
    s = continuous_monitor(gt, events(Trajectory(t, est_pos)))
    a = s.column("ate_rmse_so_far")
    k = int(np.flatnonzero(t >= 5.0 - 1e-9)[0])
    assert np.all(a[2:k] < 1e-12)
    assert a[k] > 0.1
    assert np.all(np.diff(a[k - 1:k + 5]) > 0)
    # the relative error spikes where the jump happens
    r = s.column("latest_rpe_trans")
    j = int(np.nanargmax(r))
    assert t[j] >= 5.0 - 1e-9 and t[j] < 6.0 + 1e-9


def test_final_entry_equals_batch(backend, rng):
    for mode in AlignMode:
        gt = gt_traj(rng)
        est = Trajectory(gt.timestamps + rng.uniform(-0.004, 0.004, len(gt)),
                         gt.positions + rng.normal(size=(len(gt), 3)) * 0.1, gt.quaternions)
        s = continuous_monitor(gt, events(est), mode=mode)
        m = associate(est, gt)
        assert abs(s[-1].ate_rmse_so_far - ate(m, mode).rmse) < 1e-12
        assert abs(s[-1].latest_rpe_trans - rpe(m).trans_errors[-1]) < 1e-12


def test_final_entry_equals_batch_interpolate(backend, rng):
    gt = gt_traj(rng)
    est = Trajectory(gt.timestamps[:-1] + 0.05, gt.positions[:-1] + 0.02, gt.quaternions[:-1])
    pol = AssociationPolicy(0.06, "interpolate")
    s = continuous_monitor(gt, events(est), policy=pol)
    assert abs(s[-1].ate_rmse_so_far - ate(associate(est, gt, pol)).rmse) < 1e-12


def test_prefix_entries_match_batch_prefix(backend, rng):
    gt = gt_traj(rng, 40)
    est = Trajectory(gt.timestamps, gt.positions + rng.normal(size=(40, 3)) * 0.1, gt.quaternions)
    s = continuous_monitor(gt, events(est), rpe_delta=RpeDelta.frames(2))
    for k in (3, 10, 25, 40):
        m = associate(est[:k], gt)
        assert abs(s[k - 1].ate_rmse_so_far - ate(m).rmse) < 1e-12
        assert abs(s[k - 1].latest_rpe_trans - rpe(m, RpeDelta.frames(2)).trans_errors[-1]) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.03, 0.03), min_size=3, max_size=25), st.data())
def test_incremental_association_matches_full(offsets, data):
    gt_t = np.round(np.cumsum(np.full(30, 0.033)), 6)
    gt = Trajectory(gt_t, np.c_[gt_t, gt_t ** 2, np.sin(gt_t)])
    picks = sorted(data.draw(st.sets(st.integers(0, 29), min_size=len(offsets),
                                     max_size=len(offsets))))
    est_t = np.array([gt_t[p] + o for p, o in zip(picks, offsets)])
    if np.any(np.diff(est_t) <= 0):
        return
    mon = ContinuousMonitor(gt)
    for k, tk in enumerate(est_t):
        mon.update(tk, PoseSE3.from_translation(tk, 0, 0))
        want = nearest_pair_indices(est_t[:k + 1], gt_t, 0.02)
        assert list(zip(mon._ei, mon._gi)) == [tuple(p) for p in want]


def test_out_of_order_rejected(rng):
    gt = gt_traj(rng, 10)
    mon = ContinuousMonitor(gt)
    mon.update(0.5, PoseSE3.identity())
    with pytest.raises(ProtocolError):
        mon.update(0.5, PoseSE3.identity())
    with pytest.raises(ProtocolError):
        mon.update(0.2, PoseSE3.identity())


def test_degenerate_prefix_gives_unaligned_entry():
    t = np.arange(10.0)
    gt = Trajectory(t, np.c_[t, np.zeros(10), np.zeros(10)])
    s = continuous_monitor(gt, events(gt))
    assert not any(e.aligned for e in s)
    assert all(math.isnan(e.ate_rmse_so_far) for e in s)


def test_worker_matches_inline(rng):
    gt = gt_traj(rng)
    est = Trajectory(gt.timestamps, gt.positions + rng.normal(size=(len(gt), 3)) * 0.05,
                     gt.quaternions)
    w = MonitorWorker(gt)
    for t, p in events(est):
        w.submit(t, p)
    got = w.close()
    want = continuous_monitor(gt, events(est))
    assert got.column("ate_rmse_so_far")[2:].tolist() == want.column("ate_rmse_so_far")[2:].tolist()


def test_worker_reraises(rng):
    gt = gt_traj(rng, 10)
    w = MonitorWorker(gt)
    w.submit(1.0, PoseSE3.identity())
    w.submit(0.5, PoseSE3.identity())
    with pytest.raises(ProtocolError):
        w.close()
