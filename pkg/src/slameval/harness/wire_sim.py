"""Reference out-of-process SUT: a simulator behind the line protocol.

    python -m slameval.harness.wire_sim GT_FILE [--model SPEC] [--crash-after N]

Useful for testing wrappers and the subprocess adapter end to end.
"""

import argparse
import os
import sys

from ..datasets import load_trajectory
from .simulators import SimulatedSut, parse_sim_spec
from .sut import Frame, SutCrashed, format_pose_line


def main(argv=None):
    ap = argparse.ArgumentParser(prog="wire_sim")
    ap.add_argument("gt")
    ap.add_argument("--model", default="perfect")
    ap.add_argument("--crash-after", type=int, default=None,
                    help="exit abruptly (status 139) on this frame index")
    ap.add_argument("--hang-at", type=int, default=None, help="stop answering at this frame")
    args = ap.parse_args(argv)

    sim = SimulatedSut(parse_sim_spec(args.model), load_trajectory(args.gt))
    out = sys.stdout
    k = 0
    for line in sys.stdin:
        cmd = line.split()
        if not cmd:
            continue
        if cmd[0] == "INIT":
            sim.init()
            out.write("READY\n")
        elif cmd[0] == "FRAME":
            if args.crash_after is not None and k == args.crash_after:
                os._exit(139)
            if args.hang_at is not None and k == args.hang_at:
                sys.stdin.read()
                return 0
            try:
                res = sim.process_frame(Frame(float(cmd[1]), index=k))
            except SutCrashed:
                os._exit(139)
            out.write(format_pose_line(res.pose if res.tracking else None) + "\n")
            k += 1
        elif cmd[0] == "SHUTDOWN":
            return 0
        out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
