"""Biased random walk among subcritical percolation traps: simulator, theory and estimators."""

from .config import RunConfig
from .dynamics import Horizon, Trajectory, build_kernel, clock_inverse, jump_rate, position_at, simulate, simulate_coupled
from .env import Environment, Params, cluster_size, sample_cluster_sizes, site_state
from .errors import (ClusterCapExceeded, ConfigError, CoordinateRangeError, DegenerateFit, HorizonOverflow,
                     InsufficientTail, NotApplicable, OutOfHorizon, TrapwalkError)
from .estimators import TimeGrid, estimate_escape_exponent, estimate_msd, estimate_speed, estimate_xi
from .theory import escape_exponent, mgf_1d, mgf_monte_carlo, predict, speed

__version__ = "0.1.0"
