"""Max-min-fair rate-splitting beamforming for multi-LED visible-light networks
with time-splitting energy harvesting."""

from .bench import SweepSpec, emit_csv, oracle_grid, run_sweep
from .channel import ChannelMatrix, channel_gain, channel_matrix
from .scenario import Scenario, default_scenario, load_scenario
from .schemes import Scheme, SchemeConfig, apply_scheme
from .signal import BeamformerSet, InfeasibleScenario, check_feasible
from .solver import Solution, SolverOptions, solve_mmf

__version__ = "0.1.0"

__all__ = [
    "BeamformerSet", "ChannelMatrix", "InfeasibleScenario", "Scenario", "Scheme", "SchemeConfig",
    "Solution", "SolverOptions", "SweepSpec", "apply_scheme", "channel_gain", "channel_matrix",
    "check_feasible", "default_scenario", "emit_csv", "load_scenario", "oracle_grid", "run_sweep",
    "solve_mmf",
]
