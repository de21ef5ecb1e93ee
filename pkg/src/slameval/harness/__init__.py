"""Experiment harness: SUT contract, simulators and runners."""

from .runner import (ExitStatus, FrameSchedule, RunRecord, evaluate_run, measure_frame_rate,
                     run_experiment, run_lifelong, run_repeated)
from .simulators import SimulatedSut, SimulatedSutConfig, parse_sim_spec, simulator_factory
from .sut import Frame, FrameResult, SubprocessSut, SutCrashed, SutInterface
