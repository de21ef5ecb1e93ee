"""The system-under-test contract and the out-of-process adapter.

A SUT is anything with ``init(config)``, ``process_frame(frame)`` and
``shutdown()``. ``process_frame`` returns a :class:`FrameResult`; raising
any exception (or :class:`SutCrashed`) is treated as a crash.

Out-of-process SUTs speak a line protocol over stdin/stdout::

    > INIT                       < READY
    > FRAME <timestamp>          < POSE tx ty tz qx qy qz qw   |   < LOST
    > SHUTDOWN                   (process exits)
"""

from __future__ import annotations

import logging
import shlex
import subprocess
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from ..errors import ProtocolError
from ..geometry import PoseSE3

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Frame:
    """Opaque frame handle; the harness never looks inside ``ref``."""

    timestamp: float
    ref: object = None
    sequence: str = ""
    index: int = 0


@dataclass(frozen=True)
class FrameResult:
    pose: PoseSE3 | None
    tracking: bool

    @classmethod
    def lost(cls):
        return cls(None, False)


class SutCrashed(RuntimeError):
    """The SUT died while processing a frame (segfault, abort, exception)."""

    def __init__(self, message="system under test crashed", returncode=None):
        self.returncode = returncode
        super().__init__(message)


@runtime_checkable
class SutInterface(Protocol):
    def init(self, config: dict | None = None) -> None: ...

    def process_frame(self, frame: Frame) -> FrameResult: ...

    def shutdown(self) -> int: ...


def format_pose_line(pose: PoseSE3 | None) -> str:
    if pose is None:
        return "LOST"
    vals = (*pose.translation, *pose.rotation)
    return "POSE " + " ".join(repr(float(v)) for v in vals)


def parse_response_line(line: str) -> FrameResult:
    fields = line.split()
    if not fields:
        raise ProtocolError("empty response line")
    if fields[0] == "LOST" and len(fields) == 1:
        return FrameResult.lost()
    if fields[0] == "POSE" and len(fields) == 8:
        try:
            v = [float(x) for x in fields[1:]]
            return FrameResult(PoseSE3(v[3:7], v[0:3]), True)
        except ValueError as exc:
            raise ProtocolError(f"bad POSE line {line!r}: {exc}") from None
    raise ProtocolError(f"unexpected response {line!r}")


class SubprocessSut:
    """Wraps an external program that implements the line protocol."""

    def __init__(self, command, env=None, cwd=None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.env = env
        self.cwd = cwd
        self.proc = None

    def _send(self, line):
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise SutCrashed("SUT closed its input", self.proc.poll()) from None

    def _recv(self):
        line = self.proc.stdout.readline()
        if not line:
            rc = self.proc.wait()
            raise SutCrashed(f"SUT exited with status {rc}", rc)
        return line.strip()

    def init(self, config=None):
        self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, bufsize=1, env=self.env, cwd=self.cwd)
        self._send("INIT")
        reply = self._recv()
        if reply != "READY":
            self.kill()
            raise ProtocolError(f"expected READY, got {reply!r}")

    def process_frame(self, frame: Frame) -> FrameResult:
        self._send(f"FRAME {float(frame.timestamp)!r}")
        return parse_response_line(self._recv())

    def shutdown(self) -> int:
        if self.proc is None:
            return 0
        try:
            self._send("SHUTDOWN")
            self.proc.stdin.close()
        except SutCrashed:
            pass
        try:
            return self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.kill()
            return self.proc.wait()

    def kill(self):
        if self.proc is not None and self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()
