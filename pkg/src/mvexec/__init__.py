"""Optimal limit/market-order splitting across venues with Bayesian adaptation."""

from .bayes import (
    CtmcChainPrior,
    GammaPrior,
    NigPrior,
    NormalDriftPrior,
    PriorSet,
    SliceStats,
    update_ctmc,
    update_drift_known_vol,
    update_drift_vol,
    update_intensity,
    update_proportions,
)
from .curve import CurveParams, global_target, renormalized_target, target_inventory
from .engine import RunConfig, RunReport, run
from .errors import (
    ConfigError,
    DegenerateEstimateError,
    DomainError,
    MissingInputError,
    MvexecError,
    NumericalError,
    SolverBlowupError,
)
from .market import (
    Generator,
    IntensityTable,
    MarketSpec,
    PriceModel,
    ProportionTable,
    VenueSpec,
    ZoneMap,
    fill_intensity,
    joint_state_index,
    regime_flat_of,
    regime_of,
    state_components,
)
from .otc import (
    NiwPrior,
    RfqGammaPrior,
    SizeScalePrior,
    update_niw,
    update_rfq_intensity,
    update_size_scale,
)
from .simulator import EventLog, simulate_chain, simulate_ctmc, simulate_slice
from .solver import (
    PenaltySpec,
    SliceGrid,
    SliceSolution,
    bellman_step,
    candidate_gain,
    market_order_obstacle,
    solve_slice,
)

__version__ = "0.1.0"
