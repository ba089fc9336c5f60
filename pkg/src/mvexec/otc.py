"""Bayesian updates for an OTC market maker.

Three conjugate families: a Gamma prior on the per-asset, per-side
request-for-quote intensity, a Gamma hyperprior on the scale of the
trade-size distribution (shape known), and a Normal-Inverse-Wishart
prior on the joint drift vector and covariance matrix of the asset
prices.

The NIW update ships in two variants.  ``printed`` follows the source
formula literally, whose scatter term ``(D - D/t)(D - D/t)^T`` (D the
price displacement) is dimensionally odd but reproduced for fidelity;
``standard`` is the textbook update treating the window as t unit-time
increments with sample mean D/t and no within-window scatter, which in
dimension one coincides with the Normal-Inverse-Gamma update of
:mod:`mvexec.bayes` under (kappa0, nu0, psi) = (nu, 2 alpha_s, 2 beta_s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateEstimateError, DomainError, NumericalError


@dataclass(frozen=True)
class RfqGammaPrior:
    """Gamma prior on the RFQ arrival intensity of one (asset, side)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("RFQ Gamma hyperparameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / self.beta


def update_rfq_intensity(
    prior: RfqGammaPrior, count: int, exposure: float
) -> tuple[RfqGammaPrior, float]:
    """Posterior and mean intensity after ``count`` transactions over ``exposure``."""
    if count < 0 or count != int(count):
        raise DomainError("transaction count must be a non-negative integer")
    if exposure < 0:
        raise DomainError("quote exposure must be >= 0")
    post = RfqGammaPrior(prior.alpha + count, prior.beta + exposure)
    return post, post.mean


@dataclass(frozen=True)
class SizeScalePrior:
    """Gamma hyperprior on the scale of Gamma-distributed trade sizes."""

    shape: float  # known shape of the size law
    a0: float
    b0: float

    def __post_init__(self):
        if self.shape <= 0 or self.a0 <= 0 or self.b0 <= 0:
            raise ConfigError("size-scale hyperparameters must be positive")

    @property
    def mean(self) -> float:
        return self.a0 / self.b0


def update_size_scale(
    prior: SizeScalePrior, sizes: Sequence[float]
) -> tuple[SizeScalePrior, float]:
    """Posterior and mean of the size-scale after observing ``sizes``."""
    z = [float(s) for s in sizes]
    if any(s <= 0 for s in z):
        raise DomainError("trade sizes must be positive")
    total = 0.0
    for s in z:
        total += s
    post = SizeScalePrior(prior.shape, prior.a0 + len(z) * prior.shape, prior.b0 + total)
    return post, post.mean


def _check_spd(m: np.ndarray, what: str, err=NumericalError) -> None:
    asym = np.abs(m - m.T).max()
    if asym > 1e-12 * (1.0 + np.abs(m).max()):
        raise err(f"{what} is not symmetric (max asymmetry {asym:g})")
    try:
        np.linalg.cholesky((m + m.T) / 2.0)
    except np.linalg.LinAlgError:
        raise err(f"{what} is not positive definite") from None


@dataclass(frozen=True)
class NiwPrior:
    """Normal-Inverse-Wishart prior on (drift vector, covariance matrix)."""

    mu0: np.ndarray
    kappa0: float
    nu0: float
    psi: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu0, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        d = mu.shape[0]
        if mu.ndim != 1 or psi.shape != (d, d):
            raise ConfigError("NIW prior dimensions are inconsistent")
        if self.kappa0 <= 0:
            raise ConfigError("NIW kappa0 must be positive")
        if self.nu0 <= d - 1:
            raise ConfigError("NIW nu0 must exceed d - 1")
        _check_spd(psi, "NIW psi", err=ConfigError)
        object.__setattr__(self, "mu0", mu)
        object.__setattr__(self, "psi", (psi + psi.T) / 2.0)

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]


def update_niw(
    prior: NiwPrior,
    displacement: Sequence[float],
    t: float,
    *,
    variant: str = "printed",
) -> tuple[NiwPrior, np.ndarray, np.ndarray]:
    """NIW update from one displacement window of length ``t``.

    Returns (posterior, drift estimate, covariance estimate); the
    covariance estimate is the inverse-Wishart mean
    ``psi' / (nu' - d - 1)`` and requires ``nu' > d + 1``.
    """
    if t <= 0:
        raise DomainError("window length must be positive")
    if variant not in ("printed", "standard"):
        raise DomainError(f"unknown NIW variant {variant!r}")
    D = np.asarray(displacement, dtype=float)
    d = prior.dim
    if D.shape != (d,):
        raise DomainError(f"displacement must have dimension {d}")

    k0 = prior.kappa0
    mu_post = (k0 * prior.mu0 + D) / (k0 + t)
    kappa_post = k0 + t
    nu_post = prior.nu0 + t
    xbar = D / t
    shrink = (k0 * t / (k0 + t))
    if variant == "printed":
        a = D - xbar
        psi_post = prior.psi + np.outer(a, a) + shrink * np.outer(prior.mu0 - xbar, prior.mu0 - xbar)
    else:
        psi_post = prior.psi + shrink * np.outer(xbar - prior.mu0, xbar - prior.mu0)
    psi_post = (psi_post + psi_post.T) / 2.0
    _check_spd(psi_post, "posterior NIW psi")
    post = NiwPrior(mu_post, kappa_post, nu_post, psi_post)
    if nu_post <= d + 1:
        raise DegenerateEstimateError("covariance mean undefined: posterior nu <= d + 1")
    sigma_hat = psi_post / (nu_post - d - 1.0)
    return post, mu_post, sigma_hat


# ---------------------------------------------------------------------------
# RFQ log ingestion (CLI surface)

@dataclass
class OtcObservations:
    """Per (asset, side) sufficient statistics extracted from an RFQ log."""

    filled_counts: dict[tuple[int, str], int]
    exposures: dict[tuple[int, str], float]
    sizes: dict[tuple[int, str], list[float]]
    first_prices: np.ndarray | None
    last_prices: np.ndarray | None
    first_time: float | None
    last_time: float | None

    @property
    def price_window(self) -> tuple[np.ndarray, float] | None:
        if self.first_prices is None or self.last_time is None:
            return None
        dt = self.last_time - self.first_time
        if dt <= 0:
            return None
        return self.last_prices - self.first_prices, dt


def ingest_rfq_log(records: Sequence[dict], *, quote_decay: float = 0.0) -> OtcObservations:
    """Fold a parsed RFQ/price JSONL stream into sufficient statistics.

    Quote exposure treats each (asset, side) stream's quoted half-spread
    as piecewise constant between its own RFQs, weighting elapsed time by
    ``exp(-quote_decay * quote)``; with the default decay 0 the exposure
    is simply the elapsed quoting time.  Request sizes are observed on
    every RFQ; transaction counts only on filled ones.
    """
    obs = OtcObservations({}, {}, {}, None, None, None, None)
    last_quote: dict[tuple[int, str], tuple[float, float]] = {}  # key -> (time, quote)
    for rec in records:
        kind = rec.get("kind")
        if kind == "rfq":
            key = (int(rec["asset"]), str(rec["side"]))
            t = float(rec["time"])
            if key in last_quote:
                t_prev, quote_prev = last_quote[key]
                if t < t_prev:
                    raise DomainError("RFQ log times must be non-decreasing per stream")
                w = math.exp(-quote_decay * quote_prev)
                obs.exposures[key] = obs.exposures.get(key, 0.0) + w * (t - t_prev)
            last_quote[key] = (t, float(rec["quote"]))
            obs.sizes.setdefault(key, []).append(float(rec["size"]))
            if rec.get("filled"):
                obs.filled_counts[key] = obs.filled_counts.get(key, 0) + 1
        elif kind == "price":
            t = float(rec["time"])
            prices = np.asarray(rec["prices"], dtype=float)
            if obs.first_prices is None:
                obs.first_prices = prices
                obs.first_time = t
            obs.last_prices = prices
            obs.last_time = t
        else:
            raise DomainError(f"unknown OTC record kind {kind!r}")
    return obs
