"""Revenue-optimal admission thresholds for many-server queues in the QED regime."""
from .errors import (BranchError, ConvergenceError, CuspError, DivergenceError, DomainError,
                     NoSignChangeError, NonConvergenceError, QedError, UnsupportedError,
                     WindowWarning)
from .finite import (ADMIT_ALL, Profile, SystemParams, Threshold, capacity_policy,
                     optimal_tau, revenue_rate, stationary_distribution, threshold_revenue)
from .limit import limit_constants, limit_revenue_profile, limit_revenue_threshold
from .revenue import (FiniteRevenue, RevenueProfile, custom, exponential, exponential_right,
                      linear, load_profile, polynomial_penalty, profile_from_dict)
from .solver import bounds, closed_form, solve
from .specfun import DEFAULT_QUAD, QuadratureConfig

__version__ = "0.1.0"
