"""Static data model of the multi-venue market.

A market is a set of venues, each carrying a spread process and an
imbalance process (both finite-state continuous-time Markov chains), a
zone map grouping raw states into regimes, transition generators, fill
intensity and execution-proportion tables indexed by joint regime, and
an arithmetic Brownian mid-price.

Conventions used throughout the package:

* a *joint state* enumerates the tuple ``(spread_1..spread_N,
  imbalance_1..imbalance_N)`` of per-venue state indices in row-major
  order;
* a *joint regime* enumerates ``(spread_regime_1..spread_regime_N,
  imbalance_regime_1..imbalance_regime_N)`` the same way;
* limit placements ``p`` take values ``-1`` (new best limit), ``0``
  (best limit) and ``+1`` (second-best limit) and are stored in arrays
  at index ``p + 1``;
* all rates are per minute and all times are in minutes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

LIMITS = (-1, 0, 1)
N_LIMITS = 3

_ROW_SUM_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=a.dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class VenueSpec:
    """States of one venue: tick size, spread levels and imbalance levels."""

    tick_size: float
    spread_values: tuple[float, ...]
    imbalance_values: tuple[float, ...]

    def __post_init__(self):
        if self.tick_size <= 0:
            raise ConfigError("venue.tick_size must be positive")
        if len(self.spread_values) < 1 or len(self.imbalance_values) < 1:
            raise ConfigError("venue needs at least one spread and one imbalance level")
        ticks = []
        for s in self.spread_values:
            m = s / self.tick_size
            if s <= 0 or abs(m - round(m)) > 1e-9 or round(m) < 1:
                raise ConfigError(
                    f"spread value {s} is not a positive integer multiple of tick {self.tick_size}"
                )
            ticks.append(int(round(m)))
        if any(b <= a for a, b in zip(self.spread_values, self.spread_values[1:])):
            raise ConfigError("spread_values must be strictly increasing")
        if any(b <= a for a, b in zip(self.imbalance_values, self.imbalance_values[1:])):
            raise ConfigError("imbalance_values must be strictly increasing")
        if any(i < -1 or i > 1 for i in self.imbalance_values):
            raise ConfigError("imbalance values must lie in [-1, 1]")
        object.__setattr__(self, "spread_ticks", tuple(ticks))

    spread_ticks: tuple[int, ...] = field(init=False, repr=False)

    @property
    def n_spreads(self) -> int:
        return len(self.spread_values)

    @property
    def n_imbalances(self) -> int:
        return len(self.imbalance_values)


@dataclass(frozen=True)
class ZoneMap:
    """Maps per-venue raw state indices to regime indices.

    ``spread_zone_of[n][j]`` is the spread-regime of the j-th spread
    level of venue ``n``; likewise for imbalances.  Regime indices must
    form a contiguous range starting at 0 across all venues.
    """

    spread_zone_of: tuple[tuple[int, ...], ...]
    imbalance_zone_of: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for label, table in (("spread", self.spread_zone_of), ("imbalance", self.imbalance_zone_of)):
            seen = sorted({z for venue in table for z in venue})
            if not seen or seen[0] != 0 or seen != list(range(len(seen))):
                raise ConfigError(
                    f"{label} regime indices must form a contiguous range starting at 0, got {seen}"
                )

    @property
    def n_spread_regimes(self) -> int:
        return 1 + max(z for venue in self.spread_zone_of for z in venue)

    @property
    def n_imbalance_regimes(self) -> int:
        return 1 + max(z for venue in self.imbalance_zone_of for z in venue)


def holding_rates(rate_matrix: np.ndarray) -> np.ndarray:
    """Per-state holding rates nu_k = -r_kk of a generator matrix."""
    return -np.diag(rate_matrix).copy()


def jump_probs(rate_matrix: np.ndarray) -> np.ndarray:
    """Embedded jump probabilities p_kk' = r_kk'/nu_k with p_kk = 0.

    Absorbing states (nu_k = 0) get an all-zero row.
    """
    nu = holding_rates(rate_matrix)
    p = np.array(rate_matrix, dtype=float)
    np.fill_diagonal(p, 0.0)
    out = np.zeros_like(p)
    np.divide(p, nu[:, None], out=out, where=nu[:, None] > 0)
    return out


def _validate_rate_matrix(m: np.ndarray, path: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{path}: rate matrix must be square, got shape {m.shape}")
    off = m.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        raise ConfigError(f"{path}: off-diagonal rates must be >= 0")
    if np.any(np.diag(m) > 0):
        raise ConfigError(f"{path}: diagonal rates must be <= 0")
    rows = m.sum(axis=1)
    if np.any(np.abs(rows) > _ROW_SUM_TOL):
        k = int(np.argmax(np.abs(rows)))
        raise ConfigError(f"{path}: row {k} sums to {rows[k]:g}, expected 0")
    return m


@dataclass(frozen=True)
class Generator:
    """Transition generator of the market state.

    ``factored`` mode holds one rate matrix per venue and per process
    (spread, imbalance); the joint chain is the independent product.
    ``coupled`` mode holds a single rate matrix over the joint state
    space, allowing full dependence between venues.
    """

    mode: str
    spread: tuple[np.ndarray, ...] = ()
    imbalance: tuple[np.ndarray, ...] = ()
    joint: np.ndarray | None = None

    def __post_init__(self):
        if self.mode == "factored":
            if not self.spread or not self.imbalance:
                raise ConfigError("factored generator needs spread and imbalance matrices")
            object.__setattr__(
                self,
                "spread",
                tuple(_readonly(_validate_rate_matrix(m, f"generator.spread[{n}]"))
                      for n, m in enumerate(self.spread)),
            )
            object.__setattr__(
                self,
                "imbalance",
                tuple(_readonly(_validate_rate_matrix(m, f"generator.imbalance[{n}]"))
                      for n, m in enumerate(self.imbalance)),
            )
        elif self.mode == "coupled":
            if self.joint is None:
                raise ConfigError("coupled generator needs a joint matrix")
            object.__setattr__(
                self, "joint", _readonly(_validate_rate_matrix(self.joint, "generator.joint"))
            )
        else:
            raise ConfigError(f"generator.mode must be 'factored' or 'coupled', got {self.mode!r}")

    def chains(self, n_venues: int) -> list[tuple[str, np.ndarray]]:
        """Independent chains as (name, rate matrix) pairs.

        Factored mode yields 2N chains named ``spread:n`` and
        ``imbalance:n``; coupled mode yields the single ``joint`` chain.
        """
        if self.mode == "coupled":
            return [("joint", self.joint)]
        if len(self.spread) != n_venues or len(self.imbalance) != n_venues:
            raise ConfigError("factored generator must carry one matrix per venue and process")
        out = [(f"spread:{n}", self.spread[n]) for n in range(n_venues)]
        out += [(f"imbalance:{n}", self.imbalance[n]) for n in range(n_venues)]
        return out


@dataclass(frozen=True)
class IntensityTable:
    """Fill intensities lambda[venue, limit, joint regime] plus volume decay.

    The posting-volume effect is the shared factor
    ``exp(-kappa * sum_n volume_n)`` applied to every venue's base rate.
    Base rates are allowed to be zero so degenerate (no-fill) markets can
    be expressed; the model's own calibrations always use positive rates.
    """

    kappa: float
    rates: np.ndarray  # (N, 3, n_regimes)

    def __post_init__(self):
        if self.kappa < 0:
            raise ConfigError("intensities.kappa must be >= 0")
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 3 or r.shape[1] != N_LIMITS:
            raise ConfigError(f"intensity table must have shape (N, 3, n_regimes), got {r.shape}")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ConfigError("intensity rates must be finite and >= 0")
        object.__setattr__(self, "rates", _readonly(r))

    def volume_factor(self, total_volume: float) -> float:
        return math.exp(-self.kappa * total_volume)


@dataclass(frozen=True)
class ProportionTable:
    """Categorical law of the executed proportion per (venue, limit, regime).

    ``omega`` lists the R possible executed fractions; ``probs`` holds the
    probability vector over them.  Vectors are renormalised at load time
    and the last component is set to one minus the rest so each vector
    sums to 1.0 exactly.
    """

    omega: np.ndarray  # (R,)
    probs: np.ndarray  # (N, 3, n_regimes, R)

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        if om.ndim != 1 or om.size < 1:
            raise ConfigError("proportions.omega must be a non-empty vector")
        if np.any(om <= 0) or np.any(om > 1):
            raise ConfigError("proportions must lie in (0, 1]")
        if np.any(np.diff(om) <= 0):
            raise ConfigError("proportions.omega must be strictly increasing")
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 4 or p.shape[1] != N_LIMITS or p.shape[3] != om.size:
            raise ConfigError(
                f"proportion table must have shape (N, 3, n_regimes, R), got {p.shape}"
            )
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ConfigError("proportion probabilities must be finite and >= 0")
        sums = p.sum(axis=-1)
        if np.any(sums <= 0):
            raise ConfigError("each proportion probability vector must have positive mass")
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ConfigError("proportion probability vectors must sum to 1 (tolerance 1e-6)")
        p = p / sums[..., None]
        p[..., -1] = 1.0 - p[..., :-1].sum(axis=-1)
        object.__setattr__(self, "omega", _readonly(om))
        object.__setattr__(self, "probs", _readonly(p))

    @property
    def n_proportions(self) -> int:
        return int(self.omega.size)


@dataclass(frozen=True)
class PriceModel:
    """Arithmetic Brownian mid-price: dS = mu dt + sigma dW."""

    mu: float
    sigma: float
    s0: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("price.sigma must be >= 0")


class StateSpace:
    """Row-major enumeration of the joint market state and regime spaces."""

    def __init__(self, venues: Sequence[VenueSpec], zones: ZoneMap):
        n = len(venues)
        self.n_venues = n
        self.spread_dims = tuple(v.n_spreads for v in venues)
        self.imbalance_dims = tuple(v.n_imbalances for v in venues)
        self.dims = self.spread_dims + self.imbalance_dims
        self.n_states = int(np.prod(self.dims))
        self.n_spread_regimes = zones.n_spread_regimes
        self.n_imbalance_regimes = zones.n_imbalance_regimes
        self.regime_dims = (self.n_spread_regimes,) * n + (self.n_imbalance_regimes,) * n
        self.n_regimes = int(np.prod(self.regime_dims))

        comps = np.array(
            np.unravel_index(np.arange(self.n_states), self.dims)
        ).T  # (n_states, 2N)
        self.spread_idx = _readonly(comps[:, :n].astype(np.int64))
        self.imbalance_idx = _readonly(comps[:, n:].astype(np.int64))
        self.spread_value = _readonly(
            np.array([[venues[k].spread_values[i] for k, i in enumerate(row)]
                      for row in self.spread_idx], dtype=float)
        )
        self.spread_ticks = _readonly(
            np.array([[venues[k].spread_ticks[i] for k, i in enumerate(row)]
                      for row in self.spread_idx], dtype=np.int64)
        )
        self.imbalance_value = _readonly(
            np.array([[venues[k].imbalance_values[i] for k, i in enumerate(row)]
                      for row in self.imbalance_idx], dtype=float)
        )

        sreg = np.array([[zones.spread_zone_of[k][i] for k, i in enumerate(row)]
                         for row in self.spread_idx], dtype=np.int64)
        ireg = np.array([[zones.imbalance_zone_of[k][i] for k, i in enumerate(row)]
                         for row in self.imbalance_idx], dtype=np.int64)
        self.regime_tuple = _readonly(np.hstack([sreg, ireg]))
        self.regime_flat = _readonly(
            np.ravel_multi_index(tuple(self.regime_tuple.T), self.regime_dims).astype(np.int64)
        )
        # p = -1 is only admissible when the spread exceeds one tick.
        adm = np.ones((self.n_states, n, N_LIMITS), dtype=bool)
        adm[:, :, 0] = self.spread_ticks > 1
        self.admissible = _readonly(adm)

    def encode(self, spreads: Sequence[int], imbalances: Sequence[int]) -> int:
        if len(spreads) != self.n_venues or len(imbalances) != self.n_venues:
            raise DomainError("need one spread and one imbalance index per venue")
        for k, (i, d) in enumerate(zip(spreads, self.spread_dims)):
            if not 0 <= i < d:
                raise DomainError(f"spread index {i} out of range for venue {k}")
        for k, (i, d) in enumerate(zip(imbalances, self.imbalance_dims)):
            if not 0 <= i < d:
                raise DomainError(f"imbalance index {i} out of range for venue {k}")
        return int(np.ravel_multi_index(tuple(spreads) + tuple(imbalances), self.dims))

    def decode(self, index: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if not 0 <= index < self.n_states:
            raise DomainError(f"state index {index} out of range")
        comp = np.unravel_index(index, self.dims)
        n = self.n_venues
        return tuple(int(c) for c in comp[:n]), tuple(int(c) for c in comp[n:])

    def venue_permutation(self, perm: Sequence[int]) -> np.ndarray:
        """State-index map sigma with sigma[s] = state with venues permuted.

        ``perm[k]`` names the venue whose coordinates land in slot ``k``.
        Requires all venues to share identical state spaces.
        """
        if sorted(perm) != list(range(self.n_venues)):
            raise DomainError(f"invalid venue permutation {perm}")
        if len(set(self.spread_dims)) != 1 or len(set(self.imbalance_dims)) != 1:
            raise DomainError("venue permutation requires identical per-venue state spaces")
        s = self.spread_idx[:, list(perm)]
        i = self.imbalance_idx[:, list(perm)]
        return np.ravel_multi_index(
            tuple(s.T) + tuple(i.T), self.dims
        ).astype(np.int64)


@dataclass(frozen=True)
class MarketSpec:
    """Aggregate market parameterisation; immutable after construction."""

    venues: tuple[VenueSpec, ...]
    zones: ZoneMap
    generator: Generator
    intensities: IntensityTable
    proportions: ProportionTable
    price: PriceModel

    space: StateSpace = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.venues:
            raise ConfigError("at least one venue is required")
        n = len(self.venues)
        if len(self.zones.spread_zone_of) != n or len(self.zones.imbalance_zone_of) != n:
            raise ConfigError("zone map must cover every venue")
        for k, v in enumerate(self.venues):
            if len(self.zones.spread_zone_of[k]) != v.n_spreads:
                raise ConfigError(f"zones.spread[{k}] must map {v.n_spreads} levels")
            if len(self.zones.imbalance_zone_of[k]) != v.n_imbalances:
                raise ConfigError(f"zones.imbalance[{k}] must map {v.n_imbalances} levels")
        space = StateSpace(self.venues, self.zones)
        if self.generator.mode == "factored":
            for k, v in enumerate(self.venues):
                if self.generator.spread[k].shape[0] != v.n_spreads:
                    raise ConfigError(f"generator.spread[{k}] has wrong dimension")
                if self.generator.imbalance[k].shape[0] != v.n_imbalances:
                    raise ConfigError(f"generator.imbalance[{k}] has wrong dimension")
        else:
            if self.generator.joint.shape[0] != space.n_states:
                raise ConfigError(
                    f"generator.joint must be {space.n_states}x{space.n_states}"
                )
        if self.intensities.rates.shape[0] != n or self.intensities.rates.shape[2] != space.n_regimes:
            raise ConfigError(
                f"intensity table must cover {n} venues x 3 limits x {space.n_regimes} regimes, "
                f"got {self.intensities.rates.shape}"
            )
        p = self.proportions.probs
        if p.shape[0] != n or p.shape[2] != space.n_regimes:
            raise ConfigError(
                f"proportion table must cover {n} venues x 3 limits x {space.n_regimes} regimes, "
                f"got {p.shape}"
            )
        object.__setattr__(self, "space", space)

    @property
    def n_venues(self) -> int:
        return len(self.venues)

    def joint_generator_matrix(self) -> np.ndarray:
        """Dense generator over joint states (factored chains are lifted)."""
        space = self.space
        if self.generator.mode == "coupled":
            return np.array(self.generator.joint, dtype=float)
        n_states = space.n_states
        out = np.zeros((n_states, n_states))
        strides = np.empty(len(space.dims), dtype=np.int64)
        strides[-1] = 1
        for k in range(len(space.dims) - 2, -1, -1):
            strides[k] = strides[k + 1] * space.dims[k + 1]
        all_states = np.arange(n_states)
        comps = np.hstack([space.spread_idx, space.imbalance_idx])
        for c, (_, mat) in enumerate(self.generator.chains(self.n_venues)):
            level = comps[:, c]
            for target in range(mat.shape[0]):
                nb = all_states + (target - level) * strides[c]
                out[all_states, nb] += mat[level, target]
        return out

    def with_parameters(
        self,
        *,
        generator: Generator | None = None,
        intensities: IntensityTable | None = None,
        proportions: ProportionTable | None = None,
        price: PriceModel | None = None,
    ) -> "MarketSpec":
        """Copy of the spec with some parameter blocks replaced (same topology)."""
        return replace(
            self,
            generator=generator if generator is not None else self.generator,
            intensities=intensities if intensities is not None else self.intensities,
            proportions=proportions if proportions is not None else self.proportions,
            price=price if price is not None else self.price,
        )


def joint_state_index(spreads: Sequence[int], imbalances: Sequence[int], spec: MarketSpec) -> int:
    """Row-major index of the joint state with the given per-venue components."""
    return spec.space.encode(spreads, imbalances)


def state_components(index: int, spec: MarketSpec) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Inverse of :func:`joint_state_index`."""
    return spec.space.decode(index)


def regime_of(index: int, spec: MarketSpec) -> tuple[int, ...]:
    """Per-venue (spread regimes..., imbalance regimes...) of a joint state."""
    if not 0 <= index < spec.space.n_states:
        raise DomainError(f"state index {index} out of range")
    return tuple(int(z) for z in spec.space.regime_tuple[index])


def regime_flat_of(index: int, spec: MarketSpec) -> int:
    """Flat (row-major) regime index of a joint state."""
    if not 0 <= index < spec.space.n_states:
        raise DomainError(f"state index {index} out of range")
    return int(spec.space.regime_flat[index])


def check_limits_admissible(state: int, limits: Sequence[int], spec: MarketSpec) -> None:
    space = spec.space
    if len(limits) != spec.n_venues:
        raise DomainError("need one limit per venue")
    for n, p in enumerate(limits):
        if p not in LIMITS:
            raise DomainError(f"limit {p} not in {{-1, 0, 1}}")
        if not space.admissible[state, n, p + 1]:
            raise DomainError(
                f"limit p=-1 is not admissible on venue {n} at one-tick spread (state {state})"
            )


def fill_intensity(
    state: int,
    limits: Sequence[int],
    volumes: Sequence[float],
    spec: MarketSpec,
) -> np.ndarray:
    """Per-venue fill rates for posted limit orders.

    ``rate_n = exp(-kappa * sum(volumes)) * lambda[n, regime(state), p_n]``,
    with the convention that a venue posting zero volume has rate 0 (no
    order in the book).
    """
    if not 0 <= state < spec.space.n_states:
        raise DomainError(f"state index {state} out of range")
    vols = np.asarray(volumes, dtype=float)
    if vols.shape != (spec.n_venues,):
        raise DomainError("need one volume per venue")
    if np.any(vols < 0):
        raise DomainError("volumes must be >= 0")
    check_limits_admissible(state, limits, spec)
    m = spec.space.regime_flat[state]
    f = spec.intensities.volume_factor(float(vols.sum()))
    out = np.empty(spec.n_venues)
    for n, p in enumerate(limits):
        out[n] = 0.0 if vols[n] == 0.0 else f * spec.intensities.rates[n, p + 1, m]
    return out
