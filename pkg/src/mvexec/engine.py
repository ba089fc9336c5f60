"""Adaptive loop over execution slices: estimate, solve, simulate, update.

Each slice v uses the current posteriors' point estimates as the
believed market, solves the slice problem against the global (or
renormalised) target curve, simulates the slice against the true market
under the computed policy, extracts sufficient statistics from the
event log, and updates every posterior before slice v + 1.  Inventory,
mid-price and the market state carry over between slices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import rng as rngmod
from .bayes import PriorSet, SliceStats
from .curve import CurveParams, global_target, renormalized_target
from .errors import ConfigError
from .market import MarketSpec
from .simulator import EventLog, simulate_slice
from .solver import (
    DEFAULT_BLOWUP_BOUND,
    PenaltySpec,
    SliceGrid,
    SliceSolution,
    solve_slice,
)


@dataclass
class RunConfig:
    """Everything one adaptive run needs."""

    market: MarketSpec            # true market, used by the simulator
    priors: PriorSet              # believed market comes from these
    grid: SliceGrid
    penalty: PenaltySpec
    curve: CurveParams
    n_slices: int
    initial_spreads: tuple[int, ...]
    initial_imbalances: tuple[int, ...]
    initial_q: float | None = None     # defaults to curve.q0
    market_orders: bool = False
    multi_fill: bool = False
    drift_chain: str = "constant_gain"  # constant_gain | exact
    curve_mode: str = "global"          # global | renormalized
    blowup_bound: float = DEFAULT_BLOWUP_BOUND

    def __post_init__(self):
        if self.n_slices < 1:
            raise ConfigError("n_slices must be >= 1")
        if self.curve_mode not in ("global", "renormalized"):
            raise ConfigError("curve_mode must be 'global' or 'renormalized'")
        if self.drift_chain not in ("constant_gain", "exact"):
            raise ConfigError("drift_chain must be 'constant_gain' or 'exact'")
        horizon = self.n_slices * self.grid.slice_length
        if horizon > self.curve.T * (1 + 1e-12):
            raise ConfigError(
                f"{self.n_slices} slices of {self.grid.slice_length:g} min exceed the "
                f"curve horizon T={self.curve.T:g}"
            )
        # The believed spec must share the true market's topology.
        self.priors.believed_spec(self.market)


@dataclass
class SliceResult:
    index: int
    slice_start: float
    q_start: float
    q_end: float
    cash_delta: float
    value_at_start: float
    log: EventLog
    estimates: dict[str, float]
    posterior: PriorSet
    solution: SliceSolution | None = None


@dataclass
class RunReport:
    seed: int
    slices: list[SliceResult] = field(default_factory=list)

    @property
    def inventory_path(self) -> list[tuple[float, float]]:
        out = []
        for s in self.slices:
            out.extend(s.log.inventory_path)
        return out

    @property
    def total_cash(self) -> float:
        return sum(s.cash_delta for s in self.slices)

    @property
    def final_q(self) -> float:
        return self.slices[-1].q_end

    def trace_rows(self) -> list[tuple[int, str, float]]:
        rows = []
        for s in self.slices:
            for name in sorted(s.estimates):
                rows.append((s.index, name, s.estimates[name]))
        return rows


def estimate_rows(priors: PriorSet, spec: MarketSpec) -> dict[str, float]:
    """Flatten the point estimates into named scalars for trace output."""
    out: dict[str, float] = {"mu": priors.mu_hat()}
    if priors.drift_mode == "nig":
        out["sigma2"] = priors.nig.sigma2_hat
    lam = priors.lambda_hat()
    for n in range(lam.shape[0]):
        for p in (-1, 0, 1):
            for m in range(lam.shape[2]):
                out[f"lambda/v{n}/p{p}/m{m}"] = float(lam[n, p + 1, m])
    rho = priors.rho_hat()
    if priors.prop_venue_level:
        for n in range(rho.shape[0]):
            for r in range(rho.shape[1]):
                out[f"rho/v{n}/r{r}"] = float(rho[n, r])
    else:
        for n in range(rho.shape[0]):
            for p in (-1, 0, 1):
                for m in range(rho.shape[2]):
                    for r in range(rho.shape[3]):
                        out[f"rho/v{n}/p{p}/m{m}/r{r}"] = float(rho[n, p + 1, m, r])
    gen = priors.generator_hat(spec.n_venues)
    for name, mat in gen.chains(spec.n_venues):
        for k in range(mat.shape[0]):
            for kk in range(mat.shape[1]):
                out[f"r/{name}/{k}/{kk}"] = float(mat[k, kk])
    return out


def run(config: RunConfig, seed: int, *, keep_solutions: bool = False) -> RunReport:
    """Execute the adaptive loop; deterministic for a fixed seed."""
    report = RunReport(seed=int(seed))
    priors = config.priors
    market = config.market
    grid = config.grid
    q = config.curve.q0 if config.initial_q is None else float(config.initial_q)
    spreads = tuple(config.initial_spreads)
    imbalances = tuple(config.initial_imbalances)
    price = market.price.s0

    for v in range(config.n_slices):
        slice_start = v * grid.slice_length
        believed = priors.believed_spec(market)
        if config.curve_mode == "global":
            target = global_target(config.curve)
        else:
            target = renormalized_target(config.curve, q, slice_start)
        solution = solve_slice(
            believed, grid, config.penalty, target, slice_start,
            market_orders=config.market_orders, blowup_bound=config.blowup_bound,
        )
        slice_seed = rngmod.child_seed(seed, f"slice/{v}")
        log = simulate_slice(
            solution, market, q, spreads, imbalances, slice_seed,
            multi_fill=config.multi_fill, initial_price=price,
        )
        stats = SliceStats.from_event_log(log, market)
        priors = priors.updated(stats, drift_chain=config.drift_chain)

        qi = grid.q_index(q)
        s_idx = market.space.encode(spreads, imbalances)
        report.slices.append(SliceResult(
            index=v,
            slice_start=slice_start,
            q_start=q,
            q_end=log.final_q,
            cash_delta=log.cash_delta(),
            value_at_start=float(solution.value[0, qi, s_idx]),
            log=log,
            estimates=estimate_rows(priors, market),
            posterior=priors,
            solution=solution if keep_solutions else None,
        ))
        q = log.final_q
        spreads = log.final_spreads
        imbalances = log.final_imbalances
        price = log.price_samples[-1][1]
    return report
