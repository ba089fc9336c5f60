"""Shared builders: the two-venue reference market and small variants."""
import numpy as np
import pytest

from mvexec import (
    CurveParams,
    Generator,
    IntensityTable,
    MarketSpec,
    PenaltySpec,
    PriceModel,
    ProportionTable,
    SliceGrid,
    SliceSolution,
    VenueSpec,
    ZoneMap,
)

# Per-venue intensity tables in own-venue-first order: OWN_OTHER[s_own][s_other]
# is the fill-rate matrix over (own imbalance, other imbalance) at p = 0.
L_DD = np.array([[5.35, 6.52, 7.11], [2.75, 3.4, 3.79], [1.5, 1.86, 2.1]])
L_D2D = np.array([[8.28, 10.03, 10.9], [4.38, 5.35, 5.9], [2.5, 3.05, 3.4]])
L_2DD = np.array([[1.81, 2.27, 2.5], [0.78, 1.04, 1.19], [0.29, 0.43, 0.53]])
L_2D2D = np.array([[2.96, 3.65, 4.0], [1.42, 1.81, 2.04], [0.68, 0.9, 1.04]])
OWN_OTHER = [[L_DD, L_D2D], [L_2DD, L_2D2D]]

R_SPREAD = np.array([[-5.0, 5.0], [5.0, -5.0]])
R_IMB = np.array([[-5.0, 2.8, 2.2], [2.2, -5.0, 2.8], [2.2, 2.8, -5.0]])

LIMIT_FACTORS = {-1: 1.6, 0: 1.0, 1: 0.5}


def two_venue_rates(lam_scale=(1.0, 1.0), factors=LIMIT_FACTORS):
    """Dense (2, 3, 36) intensity table; identical venues up to scaling."""
    rates = np.zeros((2, 3, 36))
    for s0 in range(2):
        for s1 in range(2):
            for i0 in range(3):
                for i1 in range(3):
                    m = np.ravel_multi_index((s0, s1, i0, i1), (2, 2, 3, 3))
                    for p, f in factors.items():
                        rates[0, p + 1, m] = lam_scale[0] * OWN_OTHER[s0][s1][i0, i1] * f
                        rates[1, p + 1, m] = lam_scale[1] * OWN_OTHER[s1][s0][i1, i0] * f
    return rates


def two_venue_spec(
    lam_scale=(1.0, 1.0),
    rho=((0.1, 0.9), (0.1, 0.9)),
    mu=0.0,
    sigma=0.05,
    kappa=2.5e-5,
    zero_intensity=False,
    zero_generator=False,
    spread_scale=1.0,
    imbalance_scale=1.0,
):
    venues = tuple(VenueSpec(0.05, (0.05, 0.10), (-0.5, 0.0, 0.5)) for _ in range(2))
    zones = ZoneMap(((0, 1), (0, 1)), ((0, 1, 2), (0, 1, 2)))
    if zero_generator:
        gen = Generator("factored",
                        spread=tuple(np.zeros((2, 2)) for _ in range(2)),
                        imbalance=tuple(np.zeros((3, 3)) for _ in range(2)))
    else:
        gen = Generator("factored",
                        spread=tuple(spread_scale * R_SPREAD for _ in range(2)),
                        imbalance=tuple(imbalance_scale * R_IMB for _ in range(2)))
    rates = np.zeros((2, 3, 36)) if zero_intensity else two_venue_rates(lam_scale)
    probs = np.zeros((2, 3, 36, 2))
    for n in range(2):
        probs[n, :, :, :] = np.asarray(rho[n])[None, None, :]
    return MarketSpec(
        venues=venues,
        zones=zones,
        generator=gen,
        intensities=IntensityTable(kappa=kappa, rates=rates),
        proportions=ProportionTable(omega=np.array([0.5, 1.0]), probs=probs),
        price=PriceModel(mu=mu, sigma=sigma, s0=100.0),
    )


def single_venue_spec(lam=5.0, rho=(0.1, 0.9), omega=(0.5, 1.0), kappa=0.0, mu=0.0,
                      spread_rates=None, n_spreads=1):
    spreads = tuple(0.05 * (k + 1) for k in range(n_spreads))
    venues = (VenueSpec(0.05, spreads, (-0.5, 0.5)),)
    zones = ZoneMap((tuple(range(n_spreads)),), ((0, 1),))
    sp = np.zeros((n_spreads, n_spreads)) if spread_rates is None else np.asarray(spread_rates)
    gen = Generator("factored", spread=(sp,), imbalance=(np.zeros((2, 2)),))
    n_regimes = n_spreads * 2
    rates = np.full((1, 3, n_regimes), lam)
    probs = np.zeros((1, 3, n_regimes, len(omega)))
    probs[0, :, :, :] = np.asarray(rho)[None, None, :]
    return MarketSpec(
        venues=venues,
        zones=zones,
        generator=gen,
        intensities=IntensityTable(kappa=kappa, rates=rates),
        proportions=ProportionTable(omega=np.asarray(omega, dtype=float), probs=probs),
        price=PriceModel(mu=mu, sigma=0.05, s0=100.0),
    )


def reference_curve():
    return CurveParams(q0=5e4, gamma=1e-6, sigma=0.05, V=1e8, eta=0.1, T=10.0)


def reference_grid(n_t=25, n_q=101, n_l=51):
    return SliceGrid(n_q=n_q, n_l=n_l, n_t=n_t, slice_length=1.0, q_max=5e4)


def small_grid(n_t=3, n_q=11, n_l=6):
    return SliceGrid(n_q=n_q, n_l=n_l, n_t=n_t, slice_length=1.0, q_max=5e4)


def constant_policy_solution(spec, grid, volumes, limits, slice_start=0.0):
    """A SliceSolution posting the same controls at every grid point."""
    n_s = spec.space.n_states
    n = spec.n_venues
    vol = np.zeros((grid.n_t, grid.n_q, n_s, n))
    lim = np.zeros((grid.n_t, grid.n_q, n_s, n), dtype=np.int8)
    for v in range(n):
        vol[:, :, :, v] = volumes[v]
        lim[:, :, :, v] = limits[v]
    # A posted volume must satisfy the feasibility bound at each q.
    q = grid.q_grid
    total = float(np.sum(volumes))
    if total > 0:
        infeasible = q < total
        vol[:, infeasible, :, :] = 0.0
        lim[:, infeasible, :, :] = 0
    return SliceSolution(
        grid=grid,
        slice_start=slice_start,
        value=np.zeros((grid.n_t + 1, grid.n_q, n_s)),
        volumes=vol,
        limits=lim,
        market=np.zeros((grid.n_t, grid.n_q, n_s, n)),
        gain=np.zeros((grid.n_t, grid.n_q, n_s)),
    )


def prior_set_for(spec, *, drift_mode="normal", mu0=0.1, nu=0.02, sigma=0.05,
                  prop_alpha=((0.1, 0.9), (0.1, 0.9)), intensity_confidence=1.0,
                  ctmc_confidence=1.0):
    """Priors centred at the spec's own parameters (shorthand construction)."""
    from mvexec import CtmcChainPrior, NigPrior, NormalDriftPrior, PriorSet
    from mvexec.market import holding_rates, jump_probs

    rates = spec.intensities.rates
    alpha = np.where(rates > 0, rates * intensity_confidence, 1.0)
    beta = np.full_like(alpha, intensity_confidence)
    chains = {}
    for name, mat in spec.generator.chains(spec.n_venues):
        d = mat.shape[0]
        nu_c = holding_rates(mat)
        p = jump_probs(mat)
        alpha_c = p * ctmc_confidence
        if d > 1:
            alpha_c = np.where(np.eye(d, dtype=bool), 0.0, np.maximum(alpha_c, 1e-6))
        chains[name] = CtmcChainPrior(a=nu_c * ctmc_confidence + 1.0,
                                      b=np.full(d, ctmc_confidence), alpha=alpha_c)
    return PriorSet(
        intensity_alpha=alpha,
        intensity_beta=beta,
        prop_alpha=np.asarray(prop_alpha, dtype=float),
        prop_venue_level=True,
        ctmc=chains,
        drift_mode=drift_mode,
        nig=NigPrior(mu0, 1.0, 3.0, 1.0) if drift_mode == "nig" else None,
        normal=NormalDriftPrior(mu0, nu, sigma) if drift_mode == "normal" else None,
    )


@pytest.fixture(autouse=True)
def _isolate_output_env(monkeypatch):
    monkeypatch.delenv("MVEXEC_OUTPUT_DIR", raising=False)


@pytest.fixture(scope="session")
def reference_spec():
    return two_venue_spec()


@pytest.fixture(scope="session")
def penalty():
    return PenaltySpec(1e-5)
