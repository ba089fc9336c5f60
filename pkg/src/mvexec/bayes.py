"""Conjugate Bayesian updates of every market parameter.

Each update consumes sufficient statistics extracted from an
:class:`~mvexec.simulator.EventLog` and returns closed-form posterior
hyperparameters together with the point estimate used to build the next
slice's believed market:

* fill intensities: Gamma(alpha, beta) against counts and the exposure
  integral of the posting-volume factor; estimate is the posterior mean
  ``(alpha + N) / (beta + exposure)``;
* executed proportions: Dirichlet against per-proportion counts;
* CTMC holding rates and jump probabilities: Gamma and Dirichlet; the
  default rate estimate uses the ``(a + n - 1) / (b + T)`` numerator (the
  posterior mode); a ``mean`` switch uses ``(a + n) / (b + T)``;
* mid-price drift and volatility: Normal-Inverse-Gamma on whole-window
  displacements, or a Normal prior on the drift alone when the
  volatility is treated as known.

Displacement-based price updates are coherent at window granularity:
feeding a sequence of windows in one call equals feeding them one at a
time.  Splitting a window in two adds information (the intermediate
point) and therefore does not reproduce the single-window posterior;
windows are the slice boundaries of the trading procedure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateEstimateError, DomainError
from .market import (
    Generator,
    IntensityTable,
    MarketSpec,
    PriceModel,
    ProportionTable,
)
from .simulator import EventLog


def _exact_simplex(raw: np.ndarray) -> np.ndarray:
    """Normalise a positive vector so the result sums to 1.0 exactly."""
    out = raw / raw.sum()
    out[..., -1] = 1.0 - out[..., :-1].sum(axis=-1)
    return out


# ---------------------------------------------------------------------------
# Fill intensities

@dataclass(frozen=True)
class GammaPrior:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("Gamma hyperparameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / self.beta


def update_intensity(prior: GammaPrior, fills: int, exposure: float) -> tuple[GammaPrior, float]:
    """Gamma update of one fill intensity; returns (posterior, posterior mean)."""
    if fills < 0 or fills != int(fills):
        raise DomainError("fill count must be a non-negative integer")
    if exposure < 0:
        raise DomainError("exposure must be >= 0")
    post = GammaPrior(prior.alpha + fills, prior.beta + exposure)
    return post, post.mean


# ---------------------------------------------------------------------------
# Executed proportions

def update_proportions(alpha: np.ndarray, counts: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet update; returns (posterior alpha, mean vector summing to 1 exactly)."""
    a = np.asarray(alpha, dtype=float)
    c = np.asarray(counts)
    if a.shape != c.shape or a.ndim != 1:
        raise DomainError("alpha and counts must be vectors of equal length")
    if np.any(a <= 0):
        raise DomainError("Dirichlet alpha entries must be positive")
    if np.any(c < 0) or not np.all(c == np.floor(c)):
        raise DomainError("counts must be non-negative integers")
    post = a + c
    return post, _exact_simplex(post.copy())


# ---------------------------------------------------------------------------
# Market-state chains

@dataclass(frozen=True)
class CtmcChainPrior:
    """Priors of one chain: Gamma(a_k, b_k) holding rates, Dirichlet jump rows."""

    a: np.ndarray      # (d,)
    b: np.ndarray      # (d,)
    alpha: np.ndarray  # (d, d), diagonal ignored

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        al = np.asarray(self.alpha, dtype=float)
        d = a.shape[0]
        if a.shape != (d,) or b.shape != (d,) or al.shape != (d, d):
            raise ConfigError("chain prior shapes are inconsistent")
        if np.any(a <= 0) or np.any(b <= 0):
            raise ConfigError("holding-time Gamma hyperparameters must be positive")
        off = al.copy()
        np.fill_diagonal(off, 1.0)
        if d > 1 and np.any(off <= 0):
            raise ConfigError("transition Dirichlet alphas must be positive off the diagonal")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "alpha", al)

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def update_ctmc(
    prior: CtmcChainPrior,
    counts: np.ndarray,
    holding: np.ndarray,
    *,
    estimator: str = "mode",
) -> tuple[CtmcChainPrior, np.ndarray]:
    """Update one chain from transition counts and holding times.

    Returns the posterior and the generator estimate with
    ``r_kk' = nu_k p_kk'`` off the diagonal and ``r_kk = -nu_k``.  The
    default ``mode`` estimator uses the ``- 1`` numerator; ``mean`` drops
    it.  Rows of the estimate sum to 0 up to float rounding.
    """
    d = prior.dim
    n = np.asarray(counts)
    T = np.asarray(holding, dtype=float)
    if n.shape != (d, d) or T.shape != (d,):
        raise DomainError("counts/holding shapes do not match the prior")
    if np.any(n < 0) or not np.all(n == np.floor(n)):
        raise DomainError("transition counts must be non-negative integers")
    if np.any(np.diag(n) != 0):
        raise DomainError("self-transition counts must be zero")
    if np.any(T < 0):
        raise DomainError("holding times must be >= 0")
    if estimator not in ("mode", "mean"):
        raise DomainError(f"unknown ctmc estimator {estimator!r}")

    post = CtmcChainPrior(prior.a + n.sum(axis=1), prior.b + T, prior.alpha + n)
    r_hat = np.zeros((d, d))
    for k in range(d):
        n_out = float(n[k].sum())
        if estimator == "mode":
            num = prior.a[k] + n_out - 1.0
            if num <= 0:
                raise DegenerateEstimateError(
                    f"mode estimate undefined for state {k}: a + n = {prior.a[k] + n_out:g} <= 1"
                )
        else:
            num = prior.a[k] + n_out
        nu_hat = num / (prior.b[k] + T[k])
        if d > 1:
            others = [j for j in range(d) if j != k]
            weights = post.alpha[k, others]
            p_hat = _exact_simplex(weights.astype(float).copy())
            r_hat[k, others] = nu_hat * p_hat
        r_hat[k, k] = -nu_hat
    return post, r_hat


# ---------------------------------------------------------------------------
# Mid-price

@dataclass(frozen=True)
class NigPrior:
    """Normal-Inverse-Gamma prior on (drift, variance)."""

    mu0: float
    nu: float
    alpha_s: float
    beta_s: float

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigError("NIG nu must be positive")
        if self.alpha_s <= 1:
            raise ConfigError("NIG alpha_s must exceed 1 so the variance mean exists")
        if self.beta_s <= 0:
            raise ConfigError("NIG beta_s must be positive")

    @property
    def mu_hat(self) -> float:
        return self.mu0

    @property
    def sigma2_hat(self) -> float:
        return self.beta_s / (self.alpha_s - 1.0)


def update_drift_vol(prior: NigPrior, displacement: float, t: float) -> tuple[NigPrior, float, float]:
    """NIG update from one displacement window of length ``t``.

    Returns (posterior, drift estimate, variance estimate); the
    estimates are the posterior means.
    """
    if t <= 0:
        raise DomainError("window length must be positive")
    if prior.alpha_s + t / 2.0 <= 1.0:
        raise DegenerateEstimateError("posterior variance mean undefined: alpha_s + t/2 <= 1")
    mu_post = (displacement + prior.mu0 * prior.nu) / (prior.nu + t)
    nu_post = prior.nu + t
    alpha_post = prior.alpha_s + t / 2.0
    beta_post = prior.beta_s + (t * prior.nu / (prior.nu + t)) * ((displacement / t - prior.mu0) ** 2) / 2.0
    post = NigPrior(mu_post, nu_post, alpha_post, beta_post)
    return post, post.mu_hat, post.sigma2_hat


@dataclass(frozen=True)
class NormalDriftPrior:
    """Normal prior on the drift with the volatility treated as known."""

    mu0: float
    nu: float
    sigma: float

    def __post_init__(self):
        if self.nu < 0:
            raise ConfigError("drift prior nu must be >= 0")
        if self.sigma <= 0:
            raise ConfigError("known volatility must be positive")


def update_drift_known_vol(
    prior: NormalDriftPrior, displacement: float, t: float
) -> tuple[NormalDriftPrior, float]:
    """Known-volatility drift update from one displacement window.

    The estimate is ``(mu0 sigma^2 + nu^2 D) / (sigma^2 + nu^2 t)``; the
    returned posterior carries the exact-Bayes shrunk standard deviation
    (callers tracking drifting parameters may instead re-anchor the
    original nu, which is the trading procedure's constant-gain mode).
    """
    if t < 0:
        raise DomainError("window length must be >= 0")
    s2 = prior.sigma * prior.sigma
    n2 = prior.nu * prior.nu
    mu_hat = (prior.mu0 * s2 + n2 * displacement) / (s2 + n2 * t)
    nu_post = math.sqrt(s2 * n2 / (s2 + n2 * t)) if prior.nu > 0 else 0.0
    return NormalDriftPrior(mu_hat, nu_post, prior.sigma), mu_hat


# ---------------------------------------------------------------------------
# Sufficient statistics

@dataclass
class SliceStats:
    """Sufficient statistics of one or more slices, by parameter family."""

    fill_counts: np.ndarray    # (N, 3, n_regimes) int
    exposure: np.ndarray       # (N, 3, n_regimes)
    prop_counts: np.ndarray    # (N, 3, n_regimes, R) int
    chain_counts: dict[str, np.ndarray]
    chain_holding: dict[str, np.ndarray]
    price_windows: list[tuple[float, float]]  # (displacement, duration) per slice

    @classmethod
    def empty(cls, spec: MarketSpec) -> "SliceStats":
        space = spec.space
        n, n_reg = spec.n_venues, space.n_regimes
        R = spec.proportions.n_proportions
        counts = {}
        holding = {}
        for name, mat in spec.generator.chains(n):
            d = mat.shape[0]
            counts[name] = np.zeros((d, d), dtype=np.int64)
            holding[name] = np.zeros(d)
        return cls(
            fill_counts=np.zeros((n, 3, n_reg), dtype=np.int64),
            exposure=np.zeros((n, 3, n_reg)),
            prop_counts=np.zeros((n, 3, n_reg, R), dtype=np.int64),
            chain_counts=counts,
            chain_holding=holding,
            price_windows=[],
        )

    @classmethod
    def from_event_log(cls, log: EventLog, spec: MarketSpec) -> "SliceStats":
        stats = cls.empty(spec)
        for f in log.fills:
            stats.fill_counts[f.venue, f.limit + 1, f.regime] += 1
            stats.prop_counts[f.venue, f.limit + 1, f.regime, f.r_index] += 1
        for (venue, regime, limit), value in log.exposures.items():
            stats.exposure[venue, limit + 1, regime] += value

        per_chain: dict[str, list] = {name: [] for name in stats.chain_counts}
        for tr in log.transitions:
            if tr.chain not in per_chain:
                raise DomainError(f"transition chain {tr.chain!r} unknown to the generator")
            per_chain[tr.chain].append(tr)
        initials = _initial_chain_states(log, spec)
        t_end = log.slice_start + log.slice_length
        for name, transitions in per_chain.items():
            cur = initials[name]
            t_prev = log.slice_start
            for tr in transitions:
                stats.chain_holding[name][cur] += tr.time - t_prev
                stats.chain_counts[name][tr.from_state, tr.to_state] += 1
                cur = tr.to_state
                t_prev = tr.time
            stats.chain_holding[name][cur] += t_end - t_prev

        stats.price_windows.append((log.displacement, log.slice_length))
        return stats

    def merged(self, other: "SliceStats") -> "SliceStats":
        out = SliceStats(
            fill_counts=self.fill_counts + other.fill_counts,
            exposure=self.exposure + other.exposure,
            prop_counts=self.prop_counts + other.prop_counts,
            chain_counts={k: self.chain_counts[k] + other.chain_counts[k]
                          for k in self.chain_counts},
            chain_holding={k: self.chain_holding[k] + other.chain_holding[k]
                           for k in self.chain_holding},
            price_windows=self.price_windows + other.price_windows,
        )
        return out


def _initial_chain_states(log: EventLog, spec: MarketSpec) -> dict[str, int]:
    if spec.generator.mode == "coupled":
        return {"joint": spec.space.encode(log.initial_spreads, log.initial_imbalances)}
    out = {}
    for n in range(spec.n_venues):
        out[f"spread:{n}"] = log.initial_spreads[n]
        out[f"imbalance:{n}"] = log.initial_imbalances[n]
    return out


# ---------------------------------------------------------------------------
# Prior set

@dataclass(frozen=True)
class PriorSet:
    """Hyperparameters of every conjugate family, with point-estimate access.

    Proportion priors are either one Dirichlet per venue (pooled over
    regimes and limits, the parsimonious parameterisation) or one per
    (venue, limit, regime) cell.
    """

    intensity_alpha: np.ndarray   # (N, 3, n_regimes)
    intensity_beta: np.ndarray    # (N, 3, n_regimes)
    prop_alpha: np.ndarray        # (N, R) if venue-level else (N, 3, n_regimes, R)
    prop_venue_level: bool
    ctmc: dict[str, CtmcChainPrior]
    drift_mode: str               # "nig" | "normal"
    nig: NigPrior | None = None
    normal: NormalDriftPrior | None = None
    ctmc_estimator: str = "mode"

    def __post_init__(self):
        if np.any(self.intensity_alpha <= 0) or np.any(self.intensity_beta <= 0):
            raise ConfigError("intensity Gamma hyperparameters must be positive")
        if np.any(self.prop_alpha <= 0):
            raise ConfigError("proportion Dirichlet alphas must be positive")
        if self.drift_mode == "nig":
            if self.nig is None:
                raise ConfigError("drift_mode 'nig' requires a NIG prior")
        elif self.drift_mode == "normal":
            if self.normal is None:
                raise ConfigError("drift_mode 'normal' requires a Normal drift prior")
        else:
            raise ConfigError(f"unknown drift_mode {self.drift_mode!r}")
        if self.ctmc_estimator not in ("mode", "mean"):
            raise ConfigError("ctmc_estimator must be 'mode' or 'mean'")

    def updated(self, stats: SliceStats, *, drift_chain: str = "exact") -> "PriorSet":
        """Posterior set after absorbing ``stats``.

        ``drift_chain='constant_gain'`` re-anchors the Normal drift
        prior at its original nu after each price window instead of the
        exact-Bayes shrinkage (the adaptive trading procedure's mode).
        """
        if drift_chain not in ("exact", "constant_gain"):
            raise ConfigError("drift_chain must be 'exact' or 'constant_gain'")
        ia = self.intensity_alpha + stats.fill_counts
        ib = self.intensity_beta + stats.exposure
        if self.prop_venue_level:
            pa = self.prop_alpha + stats.prop_counts.sum(axis=(1, 2))
        else:
            pa = self.prop_alpha + stats.prop_counts
        ctmc = {
            name: update_ctmc(prior, stats.chain_counts[name], stats.chain_holding[name],
                              estimator=self.ctmc_estimator)[0]
            for name, prior in self.ctmc.items()
        }
        nig = self.nig
        normal = self.normal
        for disp, dur in stats.price_windows:
            if self.drift_mode == "nig":
                nig, _, _ = update_drift_vol(nig, disp, dur)
            else:
                post, _ = update_drift_known_vol(normal, disp, dur)
                if drift_chain == "constant_gain":
                    post = NormalDriftPrior(post.mu0, normal.nu, normal.sigma)
                normal = post
        return replace(self, intensity_alpha=ia, intensity_beta=ib, prop_alpha=pa,
                       ctmc=ctmc, nig=nig, normal=normal)

    # -- point estimates ----------------------------------------------------

    def lambda_hat(self) -> np.ndarray:
        return self.intensity_alpha / self.intensity_beta

    def rho_hat(self) -> np.ndarray:
        """Estimate vectors, venue-level shape (N, R) or full table shape."""
        flat = self.prop_alpha.reshape(-1, self.prop_alpha.shape[-1]).astype(float).copy()
        for row in flat:
            row[:] = _exact_simplex(row)
        return flat.reshape(self.prop_alpha.shape)

    def generator_hat(self, n_venues: int) -> Generator:
        mats = {
            name: update_ctmc(
                prior,
                np.zeros((prior.dim, prior.dim), dtype=np.int64),
                np.zeros(prior.dim),
                estimator=self.ctmc_estimator,
            )[1]
            for name, prior in self.ctmc.items()
        }
        if "joint" in mats:
            return Generator(mode="coupled", joint=mats["joint"])
        return Generator(
            mode="factored",
            spread=tuple(mats[f"spread:{n}"] for n in range(n_venues)),
            imbalance=tuple(mats[f"imbalance:{n}"] for n in range(n_venues)),
        )

    def mu_hat(self) -> float:
        return self.nig.mu_hat if self.drift_mode == "nig" else self.normal.mu0

    def sigma_hat(self) -> float:
        if self.drift_mode == "nig":
            return math.sqrt(self.nig.sigma2_hat)
        return self.normal.sigma

    def believed_spec(self, base: MarketSpec) -> MarketSpec:
        """Market spec with every learned block replaced by its point estimate."""
        space = base.space
        rho = self.rho_hat()
        if self.prop_venue_level:
            full = np.broadcast_to(
                rho[:, None, None, :],
                (base.n_venues, 3, space.n_regimes, rho.shape[-1]),
            ).copy()
        else:
            full = rho
        return base.with_parameters(
            generator=self.generator_hat(base.n_venues),
            intensities=IntensityTable(kappa=base.intensities.kappa, rates=self.lambda_hat()),
            proportions=ProportionTable(omega=base.proportions.omega, probs=full),
            price=PriceModel(mu=self.mu_hat(), sigma=self.sigma_hat(), s0=base.price.s0),
        )
