"""Seeded forward simulation of one execution slice.

The market state follows its continuous-time Markov chains (independent
per-venue spread/imbalance chains in factored mode, one joint chain in
coupled mode).  Controls are piecewise constant on decision intervals;
within an interval each posted order carries an exponential fill clock
at the prevailing state's rate, redrawn after every event, which is
exact for exponential clocks under piecewise-constant rates.  By default
an order fills at most once per interval and is re-posted at the next
decision time; ``multi_fill=True`` re-arms it immediately subject to a
residual feasibility check.

All randomness flows through four named streams (market, fills,
proportions, price) derived from the single slice seed, so identical
inputs reproduce the event log byte for byte.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .errors import DomainError
from .market import Generator, MarketSpec, holding_rates, jump_probs
from .solver import SliceSolution


@dataclass(frozen=True)
class Transition:
    time: float
    chain: str           # "spread:n", "imbalance:n" or "joint"
    from_state: int
    to_state: int


@dataclass(frozen=True)
class Fill:
    time: float
    venue: int
    limit: int
    volume: float        # posted volume
    total_volume: float  # sum of volumes posted across venues this interval
    r_index: int
    proportion: float
    regime: int          # flat joint-regime index at fill time
    quantity: float      # proportion * volume
    price: float


@dataclass(frozen=True)
class MarketOrderExec:
    time: float
    venue: int
    volume: float
    price: float


@dataclass
class EventLog:
    """Everything observed during one simulated slice."""

    slice_start: float
    slice_length: float
    seed: int
    initial_q: float
    initial_spreads: tuple[int, ...]
    initial_imbalances: tuple[int, ...]
    transitions: list[Transition] = field(default_factory=list)
    fills: list[Fill] = field(default_factory=list)
    market_orders: list[MarketOrderExec] = field(default_factory=list)
    price_samples: list[tuple[float, float]] = field(default_factory=list)
    inventory_path: list[tuple[float, float]] = field(default_factory=list)
    # (venue, flat regime, limit) -> integral of exp(-kappa * posted volume)
    # over the time the venue's order was live under that regime/limit.
    exposures: dict[tuple[int, int, int], float] = field(default_factory=dict)
    final_spreads: tuple[int, ...] = ()
    final_imbalances: tuple[int, ...] = ()
    lookup_snapped: bool = False

    @property
    def final_q(self) -> float:
        return self.inventory_path[-1][1]

    @property
    def displacement(self) -> float:
        return self.price_samples[-1][1] - self.price_samples[0][1]

    def cash_delta(self) -> float:
        total = 0.0
        for f in self.fills:
            total += f.quantity * f.price
        for m in self.market_orders:
            total += m.volume * m.price
        return total

    def to_jsonl(self) -> str:
        lines = [json.dumps({
            "kind": "meta",
            "slice_start": self.slice_start,
            "slice_length": self.slice_length,
            "seed": self.seed,
            "initial_q": self.initial_q,
            "initial_spreads": list(self.initial_spreads),
            "initial_imbalances": list(self.initial_imbalances),
            "final_spreads": list(self.final_spreads),
            "final_imbalances": list(self.final_imbalances),
            "lookup_snapped": self.lookup_snapped,
        })]
        for t in self.transitions:
            lines.append(json.dumps({
                "kind": "transition", "time": t.time, "chain": t.chain,
                "from": t.from_state, "to": t.to_state,
            }))
        for f in self.fills:
            lines.append(json.dumps({
                "kind": "fill", "time": f.time, "venue": f.venue, "limit": f.limit,
                "volume": f.volume, "total_volume": f.total_volume,
                "r_index": f.r_index, "proportion": f.proportion,
                "regime": f.regime, "quantity": f.quantity, "price": f.price,
            }))
        for m in self.market_orders:
            lines.append(json.dumps({
                "kind": "market_order", "time": m.time, "venue": m.venue,
                "volume": m.volume, "price": m.price,
            }))
        for t, s in self.price_samples:
            lines.append(json.dumps({"kind": "price", "time": t, "mid": s}))
        for t, q in self.inventory_path:
            lines.append(json.dumps({"kind": "inventory", "time": t, "q": q}))
        for (venue, regime, limit) in sorted(self.exposures):
            lines.append(json.dumps({
                "kind": "exposure", "venue": venue, "regime": regime,
                "limit": limit, "value": self.exposures[(venue, regime, limit)],
            }))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        log = None
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "meta":
                log = cls(
                    slice_start=rec["slice_start"],
                    slice_length=rec["slice_length"],
                    seed=rec["seed"],
                    initial_q=rec["initial_q"],
                    initial_spreads=tuple(rec["initial_spreads"]),
                    initial_imbalances=tuple(rec["initial_imbalances"]),
                    final_spreads=tuple(rec["final_spreads"]),
                    final_imbalances=tuple(rec["final_imbalances"]),
                    lookup_snapped=rec["lookup_snapped"],
                )
            elif log is None:
                raise DomainError("event log must start with a meta line")
            elif kind == "transition":
                log.transitions.append(Transition(rec["time"], rec["chain"], rec["from"], rec["to"]))
            elif kind == "fill":
                log.fills.append(Fill(
                    rec["time"], rec["venue"], rec["limit"], rec["volume"],
                    rec["total_volume"], rec["r_index"], rec["proportion"],
                    rec["regime"], rec["quantity"], rec["price"],
                ))
            elif kind == "market_order":
                log.market_orders.append(
                    MarketOrderExec(rec["time"], rec["venue"], rec["volume"], rec["price"])
                )
            elif kind == "price":
                log.price_samples.append((rec["time"], rec["mid"]))
            elif kind == "inventory":
                log.inventory_path.append((rec["time"], rec["q"]))
            elif kind == "exposure":
                log.exposures[(rec["venue"], rec["regime"], rec["limit"])] = rec["value"]
            else:
                raise DomainError(f"unknown event kind {kind!r}")
        if log is None:
            raise DomainError("empty event log")
        return log


def simulate_chain(
    rate_matrix: np.ndarray,
    initial: int,
    duration: float,
    rng: np.random.Generator,
    *,
    t0: float = 0.0,
    chain: str = "joint",
) -> list[Transition]:
    """Trajectory of a single CTMC over [t0, t0 + duration).

    Holding times are exponential with the state's rate; the next state
    is drawn from the embedded jump chain.  A state with zero rate is
    absorbing: the chain stays put without error.
    """
    mat = np.asarray(rate_matrix, dtype=float)
    nu = holding_rates(mat)
    cum = np.cumsum(jump_probs(mat), axis=1)
    out: list[Transition] = []
    t = t0
    s = int(initial)
    if not 0 <= s < mat.shape[0]:
        raise DomainError(f"initial state {s} out of range")
    end = t0 + duration
    while True:
        if nu[s] <= 0:
            break
        t = t + rng.exponential(1.0 / nu[s])
        if t >= end:
            break
        nxt = int(min(np.searchsorted(cum[s], rng.random(), side="right"), mat.shape[0] - 1))
        out.append(Transition(t, chain, s, nxt))
        s = nxt
    return out


def simulate_ctmc(
    generator: Generator,
    initial_spreads: Sequence[int],
    initial_imbalances: Sequence[int],
    duration: float,
    seed: int,
    *,
    n_venues: int | None = None,
    joint_initial: int | None = None,
) -> list[Transition]:
    """Simulate the full market-state process and return merged transitions.

    Factored mode runs the 2N per-venue chains independently, each on
    its own named RNG stream; coupled mode runs one joint chain
    (``joint_initial`` gives its starting index).
    """
    if generator.mode == "coupled":
        if joint_initial is None:
            raise DomainError("coupled simulation needs joint_initial")
        return simulate_chain(
            generator.joint, joint_initial, duration,
            rngmod.stream(seed, "ctmc/joint"), chain="joint",
        )
    n = n_venues if n_venues is not None else len(initial_spreads)
    chains = generator.chains(n)
    initials = list(initial_spreads) + list(initial_imbalances)
    out: list[Transition] = []
    for (name, mat), init in zip(chains, initials):
        out.extend(simulate_chain(
            mat, init, duration, rngmod.stream(seed, f"ctmc/{name}"), chain=name,
        ))
    out.sort(key=lambda tr: (tr.time, tr.chain))
    return out


class _MarketState:
    """Mutable per-chain state with joint-index bookkeeping."""

    def __init__(self, spec: MarketSpec, spreads: Sequence[int], imbalances: Sequence[int]):
        self.spec = spec
        self.levels = list(spreads) + list(imbalances)
        self.chains = spec.generator.chains(spec.n_venues)
        if spec.generator.mode == "coupled":
            self.joint = spec.space.encode(spreads, imbalances)
        self._nu = [holding_rates(m) for _, m in self.chains]
        self._cum = [np.cumsum(jump_probs(m), axis=1) for _, m in self.chains]

    def state_index(self) -> int:
        if self.spec.generator.mode == "coupled":
            return self.joint
        n = self.spec.n_venues
        return self.spec.space.encode(self.levels[:n], self.levels[n:])

    def rates(self) -> list[float]:
        if self.spec.generator.mode == "coupled":
            return [float(self._nu[0][self.joint])]
        return [float(self._nu[c][self.levels[c]]) for c in range(len(self.chains))]

    def jump(self, c: int, u: float) -> tuple[str, int, int]:
        name = self.chains[c][0]
        if self.spec.generator.mode == "coupled":
            cur = self.joint
            nxt = int(min(np.searchsorted(self._cum[0][cur], u, side="right"),
                          self._cum[0].shape[1] - 1))
            self.joint = nxt
            return name, cur, nxt
        cur = self.levels[c]
        nxt = int(min(np.searchsorted(self._cum[c][cur], u, side="right"),
                      self._cum[c].shape[1] - 1))
        self.levels[c] = nxt
        return name, cur, nxt

    def components(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if self.spec.generator.mode == "coupled":
            return self.spec.space.decode(self.joint)
        n = self.spec.n_venues
        return tuple(self.levels[:n]), tuple(self.levels[n:])


def simulate_slice(
    solution: SliceSolution,
    spec: MarketSpec,
    initial_q: float,
    initial_spreads: Sequence[int],
    initial_imbalances: Sequence[int],
    seed: int,
    *,
    multi_fill: bool = False,
    initial_price: float | None = None,
) -> EventLog:
    """Simulate one slice under a fixed policy against ``spec``.

    The policy is looked up at the nearest inventory grid point; with
    the default exact grids the inventory never leaves the grid.
    ``initial_price`` continues the mid-price across slices (defaults to
    the spec's s0).
    """
    grid = solution.grid
    space = spec.space
    n = spec.n_venues
    if initial_q < 0:
        raise DomainError("initial_q must be >= 0")

    market_rng = rngmod.stream(seed, "slice/market")
    fill_rng = rngmod.stream(seed, "slice/fills")
    prop_rng = rngmod.stream(seed, "slice/proportions")
    price_rng = rngmod.stream(seed, "slice/price")

    log = EventLog(
        slice_start=solution.slice_start,
        slice_length=grid.slice_length,
        seed=int(seed),
        initial_q=float(initial_q),
        initial_spreads=tuple(int(i) for i in initial_spreads),
        initial_imbalances=tuple(int(i) for i in initial_imbalances),
    )
    state = _MarketState(spec, log.initial_spreads, log.initial_imbalances)
    q = float(initial_q)
    S = spec.price.s0 if initial_price is None else float(initial_price)
    dt = grid.dt
    sqrt_dt = math.sqrt(dt)
    kappa = spec.intensities.kappa
    omega = spec.proportions.omega
    R = spec.proportions.n_proportions

    log.price_samples.append((solution.slice_start, S))
    log.inventory_path.append((solution.slice_start, q))

    for i in range(grid.n_t):
        t_i = solution.slice_start + i * dt
        qi = grid.q_index(q)
        if abs(grid.q_grid[qi] - q) > 1e-9 * (1.0 + abs(q)):
            log.lookup_snapped = True
        s_idx = state.state_index()
        vols, lims, mos = solution.controls_at(i, qi, s_idx)
        vols = [float(v) for v in vols]
        lims = [int(p) for p in lims]

        for v in range(n):
            m = min(float(mos[v]), q)
            if m > 0.0:
                px = S - space.spread_value[s_idx, v] / 2.0
                q -= m
                log.market_orders.append(MarketOrderExec(t_i, v, m, px))
                log.inventory_path.append((t_i, q))

        # Defensive clamp for off-grid lookups: drop volume from the last
        # venue first until the feasibility bound holds.
        total = sum(vols)
        for v in range(n - 1, -1, -1):
            if total <= q:
                break
            cut = min(vols[v], total - q)
            vols[v] -= cut
            total -= cut

        posted_total = 0.0
        for v in vols:
            posted_total += v
        f_live = math.exp(-kappa * posted_total)
        live = [vols[v] > 0.0 for v in range(n)]

        tau = t_i
        t_end = t_i + dt
        while tau < t_end:
            s_idx = state.state_index()
            m_flat = int(space.regime_flat[s_idx])
            chain_rates = state.rates()
            chain_times = [
                tau + market_rng.exponential(1.0 / r) if r > 0 else math.inf
                for r in chain_rates
            ]
            fill_times = []
            for v in range(n):
                if live[v]:
                    lam = f_live * spec.intensities.rates[v, lims[v] + 1, m_flat]
                    fill_times.append(tau + fill_rng.exponential(1.0 / lam) if lam > 0 else math.inf)
                else:
                    fill_times.append(math.inf)
            t_next = min(chain_times + fill_times + [t_end])

            step = t_next - tau
            for v in range(n):
                if live[v]:
                    key = (v, m_flat, lims[v])
                    log.exposures[key] = log.exposures.get(key, 0.0) + f_live * step
            tau = t_next
            if tau >= t_end:
                break

            c = int(np.argmin(chain_times))
            v_star = int(np.argmin(fill_times))
            if chain_times[c] <= fill_times[v_star]:
                name, frm, to = state.jump(c, market_rng.random())
                log.transitions.append(Transition(tau, name, frm, to))
            else:
                v = v_star
                probs = spec.proportions.probs[v, lims[v] + 1, m_flat]
                r_idx = int(min(np.searchsorted(np.cumsum(probs), prop_rng.random(), side="right"),
                                R - 1))
                qty = omega[r_idx] * vols[v]
                px = S + space.spread_value[s_idx, v] / 2.0 + lims[v] * spec.venues[v].tick_size
                q -= qty
                log.fills.append(Fill(
                    time=tau, venue=v, limit=lims[v], volume=vols[v],
                    total_volume=posted_total, r_index=r_idx,
                    proportion=float(omega[r_idx]), regime=m_flat,
                    quantity=float(qty), price=float(px),
                ))
                log.inventory_path.append((tau, q))
                live[v] = False
                if multi_fill:
                    live_total = 0.0
                    for u in range(n):
                        if live[u]:
                            live_total += vols[u]
                    if live_total + vols[v] <= q:
                        live[v] = True

        S = S + spec.price.mu * dt + spec.price.sigma * sqrt_dt * price_rng.standard_normal()
        log.price_samples.append((t_i + dt, S))
        log.inventory_path.append((t_i + dt, q))

    spreads, imbs = state.components()
    log.final_spreads = spreads
    log.final_imbalances = imbs
    return log
