"""Large-deviation tails of linear-receiver SINR in Gaussian MIMO channels."""

from .core import DomainError, Receiver, SystemParams, mp_density, mp_edges, stieltjes_mp
from .distributions import CurveKind, cdf, outage
from .ratefn import ergodic_stats, rate_function, solve_tilt, tilt_parameters
from .weights import conditional_weight, detached_weight, weight_profile

__version__ = "0.1.0"
