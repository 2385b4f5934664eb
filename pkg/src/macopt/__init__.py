"""Rate optimisation for battery-powered multiple-access users.

Batteries lose energy to internal resistance, so the energy available for
transmission depends on how fast it is drawn.  The package computes optimal
single-user schedules, NOMA / TDMA / hybrid sum-rates and two-user rate
regions under that model.
"""
from ._jit import backend
from .battery import DischargeModel, UserParams
from .exceptions import MacoptError
from .multi_user import (MultiUserInstance, hybrid_sum_rate_multi, noma_sum_rate_multi,
                         tdma_sum_rate_multi)
from .region import RegionBoundary, trace_region
from .single_user import SingleUserProblem, SingleUserSolution, solve_p2
from .two_user import TwoUserInstance, hybrid_sum_rate, noma_sum_rate, tdma_sum_rate

__version__ = "0.1.0"

__all__ = [
    "DischargeModel", "UserParams", "MacoptError", "SingleUserProblem", "SingleUserSolution",
    "solve_p2", "TwoUserInstance", "noma_sum_rate", "tdma_sum_rate", "hybrid_sum_rate",
    "MultiUserInstance", "noma_sum_rate_multi", "tdma_sum_rate_multi", "hybrid_sum_rate_multi",
    "RegionBoundary", "trace_region", "backend", "__version__",
]
