"""Regenerate the fixture files in this directory.

    python tests/data/make_fixtures.py

The golden document values come from tests/oracles.py, never from slameval.
"""

import json
import sys
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))
import oracles  # noqa: E402


def write_tum(path, t, p, q, header="# timestamp tx ty tz qx qy qz qw"):
    lines = [header] if header else []
    for ti, pi, qi in zip(t, p, q):
        lines.append(" ".join(f"{v:.9f}" for v in (ti, *pi, *qi)))
    path.write_text("\n".join(lines) + "\n")


def read_tum(path):
    a = np.loadtxt(path, comments="#")
    q = a[:, 4:8] / np.linalg.norm(a[:, 4:8], axis=1)[:, None]
    return a[:, 0], a[:, 1:4], q


def nearest(est_t, gt_t, max_diff=0.02):
    cands = sorted((abs(a - b), b, i, j) for i, a in enumerate(est_t)
                   for j, b in enumerate(gt_t) if abs(a - b) <= max_diff + 1e-9)
    ue, ug, out = set(), set(), []
    for _, _, i, j in cands:
        if i not in ue and j not in ug:
            ue.add(i)
            ug.add(j)
            out.append((i, j))
    return sorted(out)


def main():
    rng = np.random.default_rng(20240601)
    n = 201
    t, pos, quat = oracles.smooth_trajectory(rng, n, dt=0.1)
    t = t + 1305031102.0
    write_tum(HERE / "gt.txt", t, pos, quat)

    keep = [k for k in range(n) if k % 17 != 5]
    R = Rotation.from_rotvec([0.1, -0.2, 0.7])
    est_t = t[keep] + rng.uniform(-0.005, 0.005, len(keep))
    est_p = R.apply(pos[keep]) + [3.0, -1.0, 0.5] + rng.normal(size=(len(keep), 3)) * 0.03
    est_q = (R * Rotation.from_quat(quat[keep])
             * Rotation.from_rotvec(rng.normal(size=(len(keep), 3)) * 0.01)).as_quat()
    write_tum(HERE / "est_noisy.txt", est_t, est_p, est_q, header=None)

    # EuRoC-style copy of a second, shorter path (nanosecond stamps, qw first)
    t2, pos2, quat2 = oracles.smooth_trajectory(rng, 120, dt=0.05)
    ns = 1403636579763555584 + np.round(t2 * 1e9).astype(np.int64)
    rows = ["#timestamp [ns],p_RS_R_x [m],p_RS_R_y [m],p_RS_R_z [m],"
            "q_RS_w [],q_RS_x [],q_RS_y [],q_RS_z [],v_RS_R_x [m s^-1]"]
    for s, p, q in zip(ns, pos2, quat2):
        rows.append(f"{s}," + ",".join(f"{v:.9f}" for v in (*p, q[3], q[0], q[1], q[2])) + ",0.0")
    (HERE / "gt_euroc.csv").write_text("\n".join(rows) + "\n")

    # golden batch result for est_noisy.txt against gt.txt
    gt_t, gt_p, gt_q = read_tum(HERE / "gt.txt")
    e_t, e_p, e_q = read_tum(HERE / "est_noisy.txt")
    pairs = nearest(e_t, gt_t)
    ei = [i for i, _ in pairs]
    gi = [j for _, j in pairs]
    errs = oracles.ate_errors(e_p[ei], gt_p[gi])
    tr, rot = oracles.rpe_errors(e_t[ei], e_p[ei], e_q[ei], gt_p[gi], gt_q[gi], 1.0)
    length = float(np.sum(np.linalg.norm(np.diff(gt_p, axis=0), axis=1)))
    golden = {
        "pairs": len(pairs),
        "unmatched_est": len(e_t) - len(pairs),
        "unmatched_gt": len(gt_t) - len(pairs),
        "ate_rmse": oracles.rmse(errs),
        "ate_mean": float(np.mean(errs)),
        "ate_median": float(np.median(errs)),
        "ate_max": max(errs),
        "rpe_trans_rmse": oracles.rmse(tr),
        "rpe_rot_rmse": oracles.rmse(rot),
        "rpe_pairs": len(tr),
        "gt_length": length,
        "normalized_ate": oracles.rmse(errs) / length,
    }
    (HERE / "golden_eval.json").write_text(json.dumps(golden, indent=2) + "\n")


if __name__ == "__main__":
    main()
