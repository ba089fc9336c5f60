"""YAML configuration: schema, validation and posterior round-trips.

One file carries every section; subcommands read what they need.  See
README.md for the documented schema.  Validation errors name the
offending key path.  Posterior files written by ``calibrate``/``run``
use the explicit array forms of the ``priors`` section and re-load as
prior files unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .bayes import CtmcChainPrior, NigPrior, NormalDriftPrior, PriorSet
from .curve import CurveParams
from .errors import ConfigError
from .market import (
    Generator,
    IntensityTable,
    MarketSpec,
    PriceModel,
    ProportionTable,
    VenueSpec,
    ZoneMap,
    holding_rates,
    jump_probs,
)
from .otc import NiwPrior, RfqGammaPrior, SizeScalePrior
from .solver import DEFAULT_BLOWUP_BOUND, PenaltySpec, SliceGrid

DEFAULT_LIMIT_FACTORS = {-1: 1.6, 0: 1.0, 1: 0.5}


def _req(mapping, key, path):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ConfigError(f"{path}.{key}: required key missing")
    return mapping[key]


def _num(value, path, *, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a sign ("1.0e8") as strings
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _list(value, path):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list")
    return value


# ---------------------------------------------------------------------------
# Market section

def _parse_regime_block(value, imb_dims, path):
    arr = np.asarray(value, dtype=float)
    if arr.shape != imb_dims:
        raise ConfigError(f"{path}: expected imbalance block of shape {imb_dims}, got {arr.shape}")
    return arr


def _parse_keyed_table(venue_entry, n_venues, n_sreg, n_ireg, path):
    """Dense (n_regimes,) vector from {'s1,..,sN': nested imbalance lists}."""
    if not isinstance(venue_entry, dict):
        raise ConfigError(f"{path}: expected a mapping from spread-regime keys")
    spread_dims = (n_sreg,) * n_venues
    imb_dims = (n_ireg,) * n_venues
    out = np.full(spread_dims + imb_dims, np.nan)
    for key, block in venue_entry.items():
        parts = str(key).split(",")
        if len(parts) != n_venues:
            raise ConfigError(f"{path}.{key}: key must list {n_venues} spread regimes")
        try:
            sreg = tuple(int(p) for p in parts)
        except ValueError:
            raise ConfigError(f"{path}.{key}: key parts must be integers") from None
        if any(not 0 <= z < n_sreg for z in sreg):
            raise ConfigError(f"{path}.{key}: spread regime out of range")
        out[sreg] = _parse_regime_block(block, imb_dims, f"{path}.{key}")
    if np.any(np.isnan(out)):
        missing = np.argwhere(np.isnan(out))[0]
        raise ConfigError(
            f"{path}: missing entry for regime tuple {tuple(int(i) for i in missing)}"
        )
    return out.reshape(-1)


def _limit_factors(mapping, path):
    if mapping is None:
        return dict(DEFAULT_LIMIT_FACTORS)
    out = dict(DEFAULT_LIMIT_FACTORS)
    for key, val in mapping.items():
        p = int(key)
        if p not in (-1, 0, 1):
            raise ConfigError(f"{path}: limit keys must be -1, 0 or 1")
        out[p] = _num(val, f"{path}.{key}")
    return out


def build_market(mapping, path="market") -> MarketSpec:
    venues = []
    for k, v in enumerate(_list(_req(mapping, "venues", path), f"{path}.venues")):
        venues.append(VenueSpec(
            tick_size=_num(_req(v, "tick_size", f"{path}.venues[{k}]"), f"{path}.venues[{k}].tick_size"),
            spread_values=tuple(_num(x, f"{path}.venues[{k}].spread_values")
                                for x in _list(_req(v, "spread_values", f"{path}.venues[{k}]"),
                                               f"{path}.venues[{k}].spread_values")),
            imbalance_values=tuple(_num(x, f"{path}.venues[{k}].imbalance_values")
                                   for x in _list(_req(v, "imbalance_values", f"{path}.venues[{k}]"),
                                                  f"{path}.venues[{k}].imbalance_values")),
        ))
    n = len(venues)

    zmap = _req(mapping, "zones", path)
    zones = ZoneMap(
        spread_zone_of=tuple(tuple(_int(z, f"{path}.zones.spread[{k}]") for z in row)
                             for k, row in enumerate(_list(_req(zmap, "spread", f"{path}.zones"),
                                                           f"{path}.zones.spread"))),
        imbalance_zone_of=tuple(tuple(_int(z, f"{path}.zones.imbalance[{k}]") for z in row)
                                for k, row in enumerate(_list(_req(zmap, "imbalance", f"{path}.zones"),
                                                              f"{path}.zones.imbalance"))),
    )
    n_sreg = zones.n_spread_regimes
    n_ireg = zones.n_imbalance_regimes

    gmap = _req(mapping, "generator", path)
    mode = _req(gmap, "mode", f"{path}.generator")
    if mode == "factored":
        generator = Generator(
            mode="factored",
            spread=tuple(np.asarray(m, dtype=float)
                         for m in _list(_req(gmap, "spread", f"{path}.generator"),
                                        f"{path}.generator.spread")),
            imbalance=tuple(np.asarray(m, dtype=float)
                            for m in _list(_req(gmap, "imbalance", f"{path}.generator"),
                                           f"{path}.generator.imbalance")),
        )
    elif mode == "coupled":
        generator = Generator(mode="coupled",
                              joint=np.asarray(_req(gmap, "joint", f"{path}.generator"), dtype=float))
    else:
        raise ConfigError(f"{path}.generator.mode: must be 'factored' or 'coupled'")

    imap = _req(mapping, "intensities", path)
    kappa = _num(_req(imap, "kappa", f"{path}.intensities"), f"{path}.intensities.kappa")
    n_regimes = (n_sreg ** n) * (n_ireg ** n)
    rates = np.empty((n, 3, n_regimes))
    if "base" in imap:
        factors = _limit_factors(imap.get("limit_factors"), f"{path}.intensities.limit_factors")
        base_list = _list(imap["base"], f"{path}.intensities.base")
        if len(base_list) != n:
            raise ConfigError(f"{path}.intensities.base: need one table per venue")
        for k, entry in enumerate(base_list):
            base = _parse_keyed_table(entry, n, n_sreg, n_ireg, f"{path}.intensities.base[{k}]")
            for p in (-1, 0, 1):
                rates[k, p + 1] = base * factors[p]
    elif "rates" in imap:
        rate_list = _list(imap["rates"], f"{path}.intensities.rates")
        if len(rate_list) != n:
            raise ConfigError(f"{path}.intensities.rates: need one entry per venue")
        for k, entry in enumerate(rate_list):
            for p in (-1, 0, 1):
                key = str(p)
                sub = entry.get(key, entry.get(p))
                if sub is None:
                    raise ConfigError(f"{path}.intensities.rates[{k}].{p}: required key missing")
                rates[k, p + 1] = _parse_keyed_table(sub, n, n_sreg, n_ireg,
                                                     f"{path}.intensities.rates[{k}].{p}")
    else:
        raise ConfigError(f"{path}.intensities: need 'base' (with limit factors) or 'rates'")
    intensities = IntensityTable(kappa=kappa, rates=rates)

    pmap = _req(mapping, "proportions", path)
    omega = np.asarray([_num(x, f"{path}.proportions.omega")
                        for x in _list(_req(pmap, "omega", f"{path}.proportions"),
                                       f"{path}.proportions.omega")])
    R = omega.size
    probs_cfg = _list(_req(pmap, "probs", f"{path}.proportions"), f"{path}.proportions.probs")
    if len(probs_cfg) != n:
        raise ConfigError(f"{path}.proportions.probs: need one entry per venue")
    probs = np.empty((n, 3, n_regimes, R))
    for k, entry in enumerate(probs_cfg):
        if isinstance(entry, list):
            vec = np.asarray(entry, dtype=float)
            if vec.shape != (R,):
                raise ConfigError(f"{path}.proportions.probs[{k}]: need {R} probabilities")
            probs[k, :, :, :] = vec[None, None, :]
        elif isinstance(entry, dict):
            for p in (-1, 0, 1):
                sub = entry.get(str(p), entry.get(p))
                if sub is None:
                    raise ConfigError(f"{path}.proportions.probs[{k}].{p}: required key missing")
                for r in range(R):
                    block = _list(sub, f"{path}.proportions.probs[{k}].{p}")
                    if len(block) != R:
                        raise ConfigError(f"{path}.proportions.probs[{k}].{p}: need {R} blocks")
                    probs[k, p + 1, :, r] = _parse_keyed_table(
                        block[r], n, n_sreg, n_ireg, f"{path}.proportions.probs[{k}].{p}[{r}]"
                    )
        else:
            raise ConfigError(f"{path}.proportions.probs[{k}]: expected vector or per-limit mapping")
    proportions = ProportionTable(omega=omega, probs=probs)

    prm = _req(mapping, "price", path)
    price = PriceModel(
        mu=_num(_req(prm, "mu", f"{path}.price"), f"{path}.price.mu"),
        sigma=_num(_req(prm, "sigma", f"{path}.price"), f"{path}.price.sigma"),
        s0=_num(_req(prm, "s0", f"{path}.price"), f"{path}.price.s0"),
    )
    return MarketSpec(venues=tuple(venues), zones=zones, generator=generator,
                      intensities=intensities, proportions=proportions, price=price)


# ---------------------------------------------------------------------------
# Priors section

def _chain_prior_from_matrix(mat, confidence, transition_confidence, estimator, path):
    """Shorthand priors centred at a generator: the point estimate with no
    data reproduces the given rates under the chosen estimator."""
    mat = np.asarray(mat, dtype=float)
    nu = holding_rates(mat)
    p = jump_probs(mat)
    d = mat.shape[0]
    if estimator == "mode":
        a = nu * confidence + 1.0
    else:
        a = nu * confidence
        if np.any(a <= 0):
            raise ConfigError(f"{path}: zero-rate state needs the mode estimator or explicit priors")
    b = np.full(d, confidence)
    alpha = p * transition_confidence
    if d > 1:
        off = alpha.copy()
        np.fill_diagonal(off, 1.0)
        if np.any(off <= 0):
            raise ConfigError(f"{path}: transition prior needs positive off-diagonal mass; "
                              f"zero-probability transitions require explicit alphas")
        np.fill_diagonal(alpha, 0.0)
    return CtmcChainPrior(a=a, b=b, alpha=alpha)


def build_priors(mapping, market: MarketSpec, path="priors") -> PriorSet:
    n = market.n_venues
    space = market.space
    n_regimes = space.n_regimes
    R = market.proportions.n_proportions
    n_sreg = space.n_spread_regimes
    n_ireg = space.n_imbalance_regimes

    imap = _req(mapping, "intensities", path)
    if "alpha" in imap and "beta" in imap:
        alpha = np.asarray(imap["alpha"], dtype=float)
        beta = np.asarray(imap["beta"], dtype=float)
        if alpha.shape != (n, 3, n_regimes) or beta.shape != (n, 3, n_regimes):
            raise ConfigError(
                f"{path}.intensities.alpha/beta: expected shape ({n}, 3, {n_regimes})"
            )
    else:
        conf = _num(_req(imap, "confidence", f"{path}.intensities"),
                    f"{path}.intensities.confidence")
        if conf <= 0:
            raise ConfigError(f"{path}.intensities.confidence: must be positive")
        rmap = _req(imap, "rates", f"{path}.intensities")
        rates = np.empty((n, 3, n_regimes))
        factors = _limit_factors(rmap.get("limit_factors"), f"{path}.intensities.rates.limit_factors")
        base_list = _list(_req(rmap, "base", f"{path}.intensities.rates"),
                          f"{path}.intensities.rates.base")
        for k, entry in enumerate(base_list):
            base = _parse_keyed_table(entry, n, n_sreg, n_ireg,
                                      f"{path}.intensities.rates.base[{k}]")
            for p in (-1, 0, 1):
                rates[k, p + 1] = base * factors[p]
        alpha = rates * conf
        beta = np.full_like(alpha, conf)
        if np.any(alpha <= 0):
            raise ConfigError(f"{path}.intensities: prior rates must be positive "
                              f"(zero-rate cells need explicit alpha/beta)")

    pmap = _req(mapping, "proportions", path)
    level = pmap.get("level", "venue")
    if level not in ("venue", "full"):
        raise ConfigError(f"{path}.proportions.level: must be 'venue' or 'full'")
    alpha_p = np.asarray(_req(pmap, "alpha", f"{path}.proportions"), dtype=float)
    expected = (n, R) if level == "venue" else (n, 3, n_regimes, R)
    if alpha_p.shape != expected:
        raise ConfigError(f"{path}.proportions.alpha: expected shape {expected}, got {alpha_p.shape}")

    cmap = _req(mapping, "ctmc", path)
    estimator = cmap.get("estimator", "mode")
    chains: dict[str, CtmcChainPrior] = {}
    if "chains" in cmap:
        for name, sub in cmap["chains"].items():
            chains[name] = CtmcChainPrior(
                a=np.asarray(_req(sub, "a", f"{path}.ctmc.chains.{name}"), dtype=float),
                b=np.asarray(_req(sub, "b", f"{path}.ctmc.chains.{name}"), dtype=float),
                alpha=np.asarray(_req(sub, "alpha", f"{path}.ctmc.chains.{name}"), dtype=float),
            )
    else:
        conf = _num(_req(cmap, "confidence", f"{path}.ctmc"), f"{path}.ctmc.confidence")
        tconf = _num(cmap.get("transition_confidence", conf), f"{path}.ctmc.transition_confidence")
        gmap = _req(cmap, "generator", f"{path}.ctmc")
        mode = _req(gmap, "mode", f"{path}.ctmc.generator")
        if mode == "factored":
            for k, m in enumerate(_list(_req(gmap, "spread", f"{path}.ctmc.generator"),
                                        f"{path}.ctmc.generator.spread")):
                chains[f"spread:{k}"] = _chain_prior_from_matrix(
                    m, conf, tconf, estimator, f"{path}.ctmc.generator.spread[{k}]")
            for k, m in enumerate(_list(_req(gmap, "imbalance", f"{path}.ctmc.generator"),
                                        f"{path}.ctmc.generator.imbalance")):
                chains[f"imbalance:{k}"] = _chain_prior_from_matrix(
                    m, conf, tconf, estimator, f"{path}.ctmc.generator.imbalance[{k}]")
        elif mode == "coupled":
            chains["joint"] = _chain_prior_from_matrix(
                _req(gmap, "joint", f"{path}.ctmc.generator"), conf, tconf, estimator,
                f"{path}.ctmc.generator.joint")
        else:
            raise ConfigError(f"{path}.ctmc.generator.mode: must be 'factored' or 'coupled'")
    expected_chains = {name for name, _ in market.generator.chains(n)}
    if set(chains) != expected_chains:
        raise ConfigError(
            f"{path}.ctmc: chain priors {sorted(chains)} do not match the market's "
            f"generator chains {sorted(expected_chains)}"
        )

    dmap = _req(mapping, "drift", path)
    dmode = _req(dmap, "mode", f"{path}.drift")
    nig = None
    normal = None
    if dmode == "nig":
        nig = NigPrior(
            mu0=_num(_req(dmap, "mu0", f"{path}.drift"), f"{path}.drift.mu0"),
            nu=_num(_req(dmap, "nu", f"{path}.drift"), f"{path}.drift.nu"),
            alpha_s=_num(_req(dmap, "alpha_s", f"{path}.drift"), f"{path}.drift.alpha_s"),
            beta_s=_num(_req(dmap, "beta_s", f"{path}.drift"), f"{path}.drift.beta_s"),
        )
    elif dmode == "normal":
        normal = NormalDriftPrior(
            mu0=_num(_req(dmap, "mu0", f"{path}.drift"), f"{path}.drift.mu0"),
            nu=_num(_req(dmap, "nu", f"{path}.drift"), f"{path}.drift.nu"),
            sigma=_num(_req(dmap, "sigma", f"{path}.drift"), f"{path}.drift.sigma"),
        )
    else:
        raise ConfigError(f"{path}.drift.mode: must be 'nig' or 'normal'")

    return PriorSet(
        intensity_alpha=alpha,
        intensity_beta=beta,
        prop_alpha=alpha_p,
        prop_venue_level=(level == "venue"),
        ctmc=chains,
        drift_mode=dmode,
        nig=nig,
        normal=normal,
        ctmc_estimator=estimator,
    )


def priors_to_mapping(priors: PriorSet) -> dict:
    """Explicit-array form of the priors section; reloads as a prior file."""
    out = {
        "intensities": {
            "alpha": priors.intensity_alpha.tolist(),
            "beta": priors.intensity_beta.tolist(),
        },
        "proportions": {
            "level": "venue" if priors.prop_venue_level else "full",
            "alpha": priors.prop_alpha.tolist(),
        },
        "ctmc": {
            "estimator": priors.ctmc_estimator,
            "chains": {
                name: {"a": p.a.tolist(), "b": p.b.tolist(), "alpha": p.alpha.tolist()}
                for name, p in sorted(priors.ctmc.items())
            },
        },
    }
    if priors.drift_mode == "nig":
        out["drift"] = {"mode": "nig", "mu0": priors.nig.mu0, "nu": priors.nig.nu,
                        "alpha_s": priors.nig.alpha_s, "beta_s": priors.nig.beta_s}
    else:
        out["drift"] = {"mode": "normal", "mu0": priors.normal.mu0, "nu": priors.normal.nu,
                        "sigma": priors.normal.sigma}
    return out


# ---------------------------------------------------------------------------
# Grid / penalty / curve / engine settings

def build_grid(mapping, path="grid") -> SliceGrid:
    return SliceGrid(
        n_q=_int(_req(mapping, "n_q", path), f"{path}.n_q"),
        n_l=_int(_req(mapping, "n_l", path), f"{path}.n_l"),
        n_t=_int(_req(mapping, "n_t", path), f"{path}.n_t"),
        slice_length=_num(_req(mapping, "slice_length", path), f"{path}.slice_length"),
        q_max=_num(_req(mapping, "q_max", path), f"{path}.q_max"),
        m_max=_num(mapping.get("m_max", 0.0), f"{path}.m_max"),
        n_m=_int(mapping.get("n_m", 0), f"{path}.n_m"),
    )


def build_penalty(mapping, path="penalty") -> PenaltySpec:
    return PenaltySpec(coefficient=_num(_req(mapping, "eta", path), f"{path}.eta"))


def build_curve(mapping, path="curve") -> CurveParams:
    kind = mapping.get("kind", "implementation_shortfall")
    if kind != "implementation_shortfall":
        raise ConfigError(
            f"{path}.kind: only 'implementation_shortfall' is shipped, got {kind!r}"
        )
    return CurveParams(
        q0=_num(_req(mapping, "q0", path), f"{path}.q0"),
        gamma=_num(_req(mapping, "gamma", path), f"{path}.gamma"),
        sigma=_num(_req(mapping, "sigma", path), f"{path}.sigma"),
        V=_num(_req(mapping, "V", path), f"{path}.V"),
        eta=_num(_req(mapping, "eta", path), f"{path}.eta"),
        T=_num(_req(mapping, "T", path), f"{path}.T"),
    )


@dataclass
class EngineSettings:
    n_slices: int
    initial_spreads: tuple[int, ...]
    initial_imbalances: tuple[int, ...]
    initial_q: float | None
    market_orders: bool
    multi_fill: bool
    drift_chain: str
    curve_mode: str
    blowup_bound: float


def build_engine_settings(mapping, n_venues, path="engine") -> EngineSettings:
    spreads = mapping.get("initial_spreads", [0] * n_venues)
    imbs = mapping.get("initial_imbalances", [0] * n_venues)
    if len(spreads) != n_venues or len(imbs) != n_venues:
        raise ConfigError(f"{path}.initial_spreads/initial_imbalances: need one index per venue")
    return EngineSettings(
        n_slices=_int(_req(mapping, "n_slices", path), f"{path}.n_slices"),
        initial_spreads=tuple(_int(i, f"{path}.initial_spreads") for i in spreads),
        initial_imbalances=tuple(_int(i, f"{path}.initial_imbalances") for i in imbs),
        initial_q=_num(mapping.get("initial_q"), f"{path}.initial_q", allow_none=True),
        market_orders=bool(mapping.get("market_orders", False)),
        multi_fill=bool(mapping.get("multi_fill", False)),
        drift_chain=mapping.get("drift_chain", "constant_gain"),
        curve_mode=mapping.get("curve_mode", "global"),
        blowup_bound=_num(mapping.get("blowup_bound", DEFAULT_BLOWUP_BOUND), f"{path}.blowup_bound"),
    )


# ---------------------------------------------------------------------------
# OTC section

@dataclass
class OtcSettings:
    rfq: dict[tuple[int, str], RfqGammaPrior]
    size: dict[tuple[int, str], SizeScalePrior]
    niw: NiwPrior
    niw_variant: str
    quote_decay: float


def build_otc(mapping, path="otc") -> OtcSettings:
    n_assets = _int(_req(mapping, "assets", path), f"{path}.assets")
    sides = ("bid", "ask")

    def per_asset_side(sub, key):
        arr = np.asarray(_req(sub, key, f"{path}"), dtype=float)
        if arr.shape != (n_assets, 2):
            raise ConfigError(f"{path}.{key}: expected shape ({n_assets}, 2) for (bid, ask)")
        return arr

    rmap = _req(mapping, "rfq", path)
    alpha = per_asset_side(rmap, "alpha")
    beta = per_asset_side(rmap, "beta")
    rfq = {(i, s): RfqGammaPrior(alpha[i, j], beta[i, j])
           for i in range(n_assets) for j, s in enumerate(sides)}

    smap = _req(mapping, "size", path)
    shape = per_asset_side(smap, "shape")
    a0 = per_asset_side(smap, "a0")
    b0 = per_asset_side(smap, "b0")
    size = {(i, s): SizeScalePrior(shape[i, j], a0[i, j], b0[i, j])
            for i in range(n_assets) for j, s in enumerate(sides)}

    nmap = _req(mapping, "niw", path)
    niw = NiwPrior(
        mu0=np.asarray(_req(nmap, "mu0", f"{path}.niw"), dtype=float),
        kappa0=_num(_req(nmap, "kappa0", f"{path}.niw"), f"{path}.niw.kappa0"),
        nu0=_num(_req(nmap, "nu0", f"{path}.niw"), f"{path}.niw.nu0"),
        psi=np.asarray(_req(nmap, "psi", f"{path}.niw"), dtype=float),
    )
    variant = nmap.get("variant", "printed")
    if variant not in ("printed", "standard"):
        raise ConfigError(f"{path}.niw.variant: must be 'printed' or 'standard'")
    return OtcSettings(
        rfq=rfq, size=size, niw=niw, niw_variant=variant,
        quote_decay=_num(mapping.get("quote_decay", 0.0), f"{path}.quote_decay"),
    )


# ---------------------------------------------------------------------------
# Whole file

@dataclass
class FullConfig:
    market: MarketSpec
    priors: PriorSet | None
    grid: SliceGrid | None
    penalty: PenaltySpec | None
    curve: CurveParams | None
    engine: EngineSettings | None
    otc: OtcSettings | None
    raw: dict


def load_config(path: str | Path, *, need=("market",)) -> FullConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {p} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {p} must hold a mapping at top level")
    for section in need:
        if section not in raw:
            raise ConfigError(f"{section}: required section missing")

    market = build_market(raw["market"]) if "market" in raw else None
    if market is None and any(s in need for s in ("market", "priors")):
        raise ConfigError("market: required section missing")
    priors = build_priors(raw["priors"], market) if "priors" in raw and market else None
    grid = build_grid(raw["grid"]) if "grid" in raw else None
    penalty = build_penalty(raw["penalty"]) if "penalty" in raw else None
    curve = build_curve(raw["curve"]) if "curve" in raw else None
    engine = (build_engine_settings(raw["engine"], market.n_venues)
              if "engine" in raw and market else None)
    otc = build_otc(raw["otc"]) if "otc" in raw else None
    for section in need:
        built = {"market": market, "priors": priors, "grid": grid, "penalty": penalty,
                 "curve": curve, "engine": engine, "otc": otc}[section]
        if built is None:
            raise ConfigError(f"{section}: required section missing")
    return FullConfig(market=market, priors=priors, grid=grid, penalty=penalty,
                      curve=curve, engine=engine, otc=otc, raw=raw)


def write_priors_file(path: str | Path, priors: PriorSet) -> None:
    mapping = {"priors": priors_to_mapping(priors)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(mapping, sort_keys=True))


def load_priors_file(path: str | Path, market: MarketSpec) -> PriorSet:
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict) or "priors" not in raw:
        raise ConfigError(f"{path}: expected a 'priors' section")
    return build_priors(raw["priors"], market)
