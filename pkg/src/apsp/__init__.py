"""Channel acquisition for massive MIMO-OFDM with adjustable phase shift pilots."""

from .channel import SystemConfig, Tap, UTProfile, build_adcpm
from .estimation import ApspChannelEstimator, MseReport, analytic_mse_ce
from .experiments import ExperimentSpec, load_experiment
from .pilots import PilotSchedule, make_basic_pilot, make_psop_schedule
from .scheduling import PhaseShiftScheduler, ScheduleResult, schedule_apsp

__all__ = [
    "SystemConfig",
    "Tap",
    "UTProfile",
    "build_adcpm",
    "ApspChannelEstimator",
    "MseReport",
    "analytic_mse_ce",
    "ExperimentSpec",
    "load_experiment",
    "PilotSchedule",
    "make_basic_pilot",
    "make_psop_schedule",
    "PhaseShiftScheduler",
    "ScheduleResult",
    "schedule_apsp",
]

__version__ = "0.1.0"
