"""Backward finite-difference solver for the reduced control equation.

One execution slice is solved on a grid over (time, inventory, joint
market state).  Marching backward from a zero terminal condition, each
step applies

    v(t_i) = v(t_{i+1}) - dt * [ g(q - q*_{t_{i+1}}) - mu q
                                 - sum_k r_{sk} (v(t_{i+1}, q, k) - v(t_{i+1}, q, s))
                                 - sup_{p, l} G(q, s, p, l) ],

where the gain of posting volumes ``l`` at limits ``p`` is

    G = exp(-kappa * sum_n l_n) * sum_n lambda[n, m(s), p_n]
          * sum_r rho[n, m(s), p_n, r] * ( omega_r l_n (psi_n/2 + p_n delta_n)
                                           + v(q - omega_r l_n, s) - v(q, s) ).

The supremum is a brute-force search over the full product grid of
per-venue volumes and admissible limits.  Ties are broken
deterministically: smallest total volume first, then the more passive
(larger) limit per venue in venue order, then the smaller volume per
venue in venue order; a venue posting zero volume always reports the
canonical limit 0.

When market orders are enabled the value is floored after each step by
the per-venue intervention value ``sup_m -m psi_n/2 + v(q - m)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, SolverBlowupError
from .market import MarketSpec, check_limits_admissible

DEFAULT_BLOWUP_BOUND = 1e12


@dataclass(frozen=True)
class SliceGrid:
    """Discretisation of one slice: inventory, volume, time, market orders."""

    n_q: int
    n_l: int
    n_t: int
    slice_length: float
    q_max: float
    m_max: float = 0.0
    n_m: int = 0

    def __post_init__(self):
        if self.n_q < 2:
            raise ConfigError("grid.n_q must be >= 2")
        if self.n_l < 2:
            raise ConfigError("grid.n_l must be >= 2")
        if self.n_t < 1:
            raise ConfigError("grid.n_t must be >= 1")
        if self.slice_length <= 0:
            raise ConfigError("grid.slice_length must be positive")
        if self.q_max <= 0:
            raise ConfigError("grid.q_max must be positive")
        if self.m_max < 0 or self.n_m < 0:
            raise ConfigError("grid.m_max and grid.n_m must be >= 0")
        if self.m_max > 0 and self.n_m < 2:
            raise ConfigError("grid.n_m must be >= 2 when m_max > 0")

    @property
    def dt(self) -> float:
        return self.slice_length / self.n_t

    @property
    def dq(self) -> float:
        return self.q_max / (self.n_q - 1)

    @property
    def q_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.q_max, self.n_q)

    @property
    def l_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.q_max, self.n_l)

    @property
    def m_grid(self) -> np.ndarray:
        if self.m_max <= 0 or self.n_m == 0:
            return np.empty(0)
        return np.linspace(0.0, self.m_max, self.n_m)

    def q_index(self, q: float) -> int:
        """Nearest inventory grid index (exact for on-grid q)."""
        return int(min(max(round(q / self.dq), 0), self.n_q - 1))


@dataclass(frozen=True)
class PenaltySpec:
    """Quadratic running penalty g(x) = coefficient * x^2."""

    coefficient: float

    def __post_init__(self):
        if self.coefficient < 0:
            raise ConfigError("penalty.coefficient must be >= 0")

    def value(self, x):
        return self.coefficient * x * x


def _shift_info(volume: float, dq: float) -> tuple[bool, int, float]:
    """Inventory-grid displacement of a fill of ``volume`` shares.

    Returns ``(exact, lo, frac)``: when exact, ``lo`` grid steps; else
    linear interpolation between ``lo`` and ``lo + 1`` with weight
    ``frac`` on the upper node.
    """
    x = volume / dq
    r = round(x)
    if abs(x - r) <= 1e-9 * (1.0 + abs(x)):
        return True, int(r), 0.0
    lo = math.floor(x)
    return False, int(lo), x - lo


class SolverTables:
    """State-indexed parameter tables and control enumeration for one (spec, grid)."""

    def __init__(self, spec: MarketSpec, grid: SliceGrid):
        self.spec = spec
        self.grid = grid
        space = spec.space
        n = spec.n_venues
        n_s = space.n_states
        reg = space.regime_flat

        self.R_joint = spec.joint_generator_matrix()

        # lambda, rho, admissibility and half-spread-plus-limit edge per state.
        self.lam = np.empty((n, 3, n_s))
        self.edge = np.empty((n, 3, n_s))
        R = spec.proportions.n_proportions
        self.rho = np.empty((n, 3, n_s, R))
        self.admissible = np.empty((n, 3, n_s), dtype=bool)
        for v in range(n):
            tick = spec.venues[v].tick_size
            for p in (-1, 0, 1):
                pi = p + 1
                self.lam[v, pi] = spec.intensities.rates[v, pi, reg]
                self.edge[v, pi] = space.spread_value[:, v] / 2.0 + p * tick
                self.rho[v, pi] = spec.proportions.probs[v, pi, reg, :]
                self.admissible[v, pi] = space.admissible[:, v, pi]

        # Fill displacement on the inventory grid, per proportion and volume.
        omega = spec.proportions.omega
        l_grid = grid.l_grid
        self.omega_l = omega[:, None] * l_grid[None, :]  # (R, n_l)
        exact = True
        lo = np.empty((R, grid.n_l), dtype=np.int64)
        frac = np.zeros((R, grid.n_l))
        for r in range(R):
            for j in range(grid.n_l):
                e, lo_rj, fr = _shift_info(float(self.omega_l[r, j]), grid.dq)
                exact &= e
                lo[r, j] = lo_rj
                frac[r, j] = fr
        self.exact_shifts = exact
        if not exact:
            warnings.warn(
                "fill volumes do not land exactly on the inventory grid; "
                "using linear interpolation in q",
                RuntimeWarning,
                stacklevel=3,
            )
        qi = np.arange(grid.n_q)
        self.gather_lo = np.clip(qi[None, None, :] - lo[:, :, None], 0, grid.n_q - 1)
        self.gather_hi = np.clip(self.gather_lo - 1, 0, grid.n_q - 1)  # one further step down
        self.frac = frac

        # Volume combinations with tot <= q_max, their total and decay weight,
        # sorted by the tie-break key (total ascending, then per-venue volume
        # ascending in venue order) so a strict running maximum lands on the
        # documented argmax.
        mesh = np.indices((grid.n_l,) * n).reshape(n, -1).T  # (n_l^N, N)
        tot = l_grid[mesh[:, 0]].copy()
        for v in range(1, n):
            tot = tot + l_grid[mesh[:, v]]
        keep = tot <= grid.q_max
        mesh, tot = mesh[keep], tot[keep]
        order = np.lexsort(tuple(mesh[:, v] for v in range(n - 1, -1, -1)) + (tot,))
        self.combo_idx = np.ascontiguousarray(mesh[order].astype(np.int64))
        self.combo_tot = np.ascontiguousarray(tot[order])
        kappa = spec.intensities.kappa
        self.combo_w = np.array([math.exp(-kappa * t) for t in self.combo_tot])
        # First inventory index at which each combo is feasible (tot <= q).
        self.combo_qmin = np.searchsorted(grid.q_grid, self.combo_tot, side="left")

        # Market-order displacements.
        m_grid = grid.m_grid
        self.m_shift = [_shift_info(float(m), grid.dq) for m in m_grid]

    def _interp_down(self, v_next: np.ndarray, r: int) -> np.ndarray:
        """v(q - omega_r * l_j, s) for all (j, q, s), shape (n_l, n_q, n_s)."""
        vlo = v_next[self.gather_lo[r]]
        if self.exact_shifts:
            return vlo
        fr = self.frac[r][:, None, None]
        vhi = v_next[self.gather_hi[r]]
        return (vlo * (1.0 - fr)) + (vhi * fr)

    def venue_gain(self, v_next: np.ndarray, venue: int, p: int) -> np.ndarray:
        """Per-venue gain lambda * E[...] over (volume, q, state), -inf if p inadmissible."""
        pi = p + 1
        n_l, n_q = self.grid.n_l, self.grid.n_q
        n_s = self.spec.space.n_states
        acc = np.zeros((n_l, n_q, n_s))
        for r in range(self.spec.proportions.n_proportions):
            rev = self.omega_l[r][:, None, None] * self.edge[venue, pi][None, None, :]
            dv = self._interp_down(v_next, r) - v_next[None, :, :]
            acc = acc + self.rho[venue, pi, :, r][None, None, :] * (rev + dv)
        g = self.lam[venue, pi][None, None, :] * acc
        return np.where(self.admissible[venue, pi][None, None, :], g, -np.inf)

    def best_limits(self, v_next: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Per-venue max over admissible limits; ties prefer the larger p.

        Returns per venue the gain array (n_l, n_q, n_s) and the chosen
        limit (int8).  Zero posted volume reports the canonical p = 0.
        """
        hs, pbs = [], []
        for venue in range(self.spec.n_venues):
            best = None
            bestp = None
            for p in (1, 0, -1):
                g = self.venue_gain(v_next, venue, p)
                if best is None:
                    best = g
                    bestp = np.full(g.shape, p, dtype=np.int8)
                else:
                    better = g > best
                    best = np.where(better, g, best)
                    bestp = np.where(better, np.int8(p), bestp)
            bestp[0, :, :] = 0  # l = 0 posts nothing
            hs.append(best)
            pbs.append(bestp)
        return hs, pbs


def candidate_gain(
    v_next: np.ndarray,
    q_index: int,
    state: int,
    limits,
    volumes,
    spec: MarketSpec,
    grid: SliceGrid,
) -> float:
    """Scalar reference for the gain of one control at one grid point.

    This is the exact arithmetic the vectorised search reproduces; tests
    and the stored policy are checked against it.
    """
    space = spec.space
    if not 0 <= q_index < grid.n_q:
        raise DomainError(f"q index {q_index} out of range")
    if not 0 <= state < space.n_states:
        raise DomainError(f"state index {state} out of range")
    vols = [float(x) for x in volumes]
    if len(vols) != spec.n_venues or any(x < 0 for x in vols):
        raise DomainError("need one non-negative volume per venue")
    q = grid.q_grid[q_index]
    total = 0.0
    for x in vols:
        total += x
    if total > q:
        raise DomainError(f"total volume {total:g} exceeds inventory {q:g}")
    check_limits_admissible(state, limits, spec)

    m = space.regime_flat[state]
    f = math.exp(-spec.intensities.kappa * total)
    omega = spec.proportions.omega
    R = spec.proportions.n_proportions
    dq = grid.dq
    vq = v_next[q_index, state]
    gain = 0.0
    for n, (p, ell) in enumerate(zip(limits, vols)):
        if ell == 0.0:
            continue
        edge = space.spread_value[state, n] / 2.0 + p * spec.venues[n].tick_size
        lam = spec.intensities.rates[n, p + 1, m]
        acc = 0.0
        for r in range(R):
            exact, lo, fr = _shift_info(omega[r] * ell, dq)
            ilo = min(max(q_index - lo, 0), grid.n_q - 1)
            if exact:
                vshift = v_next[ilo, state]
            else:
                ihi = min(max(ilo - 1, 0), grid.n_q - 1)
                vshift = (v_next[ilo, state] * (1.0 - fr)) + (v_next[ihi, state] * fr)
            rev = (omega[r] * ell) * edge
            dv = vshift - vq
            acc = acc + spec.proportions.probs[n, p + 1, m, r] * (rev + dv)
        gain += lam * acc
    return f * gain


def _argmax_supremum(
    tables: SolverTables, hs: list[np.ndarray], pbs: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Search over volume combinations; returns (sup, volumes, limits, combo).

    Combos arrive sorted by (total volume, volumes lexicographic), so a
    strict running maximum already realises those tie-break stages; the
    remaining stage (prefer the more passive limit among equal-value,
    equal-total candidates) is applied in an explicit tie branch, which
    only runs when an exact value tie occurs.
    """
    grid = tables.grid
    n = tables.spec.n_venues
    idx = tables.combo_idx
    C = idx.shape[0]
    n_q, n_s = grid.n_q, tables.spec.space.n_states

    # Combo 0 is the all-zero posting: value 0, canonical limits 0.
    best = np.zeros((n_q, n_s))
    best_combo = np.zeros((n_q, n_s), dtype=np.int32)
    best_tot = np.zeros((n_q, n_s))
    best_p = [np.zeros((n_q, n_s), dtype=np.int8) for _ in range(n)]

    for c in range(1, C):
        q0 = tables.combo_qmin[c]
        if q0 >= n_q:
            continue
        hsum = hs[0][idx[c, 0], q0:, :]
        for v in range(1, n):
            hsum = hsum + hs[v][idx[c, v], q0:, :]
        val = tables.combo_w[c] * hsum
        b = best[q0:]
        better = val > b
        eq = val == b
        if eq.any():
            # Equal value: a later combo has a larger-or-equal total and
            # lexicographically later volumes, so it wins only when the
            # totals match and its limit tuple is lexicographically more
            # passive (larger p in venue order).
            tie = eq & (best_tot[q0:] == tables.combo_tot[c])
            if tie.any():
                p_new = [pbs[v][idx[c, v], q0:, :] for v in range(n)]
                wins = np.zeros_like(tie)
                equal_so_far = np.ones_like(tie)
                for v in range(n):
                    pb = best_p[v][q0:]
                    wins |= equal_so_far & (p_new[v] > pb)
                    equal_so_far &= p_new[v] == pb
                better = better | (tie & wins)
        if not better.any():
            continue
        np.copyto(b, val, where=better)
        np.copyto(best_combo[q0:], np.int32(c), where=better)
        np.copyto(best_tot[q0:], tables.combo_tot[c], where=better)
        for v in range(n):
            np.copyto(best_p[v][q0:], pbs[v][idx[c, v], q0:, :], where=better)

    l_grid = grid.l_grid
    vol = np.empty((n_q, n_s, n))
    lim = np.empty((n_q, n_s, n), dtype=np.int8)
    for v in range(n):
        vol[:, :, v] = l_grid[idx[best_combo, v]]
        lim[:, :, v] = best_p[v]
    return best, vol, lim, best_combo


def bellman_step(
    v_next: np.ndarray,
    t_next: float,
    spec: MarketSpec,
    grid: SliceGrid,
    penalty: PenaltySpec,
    target,
    *,
    tables: SolverTables | None = None,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One explicit backward step from the value slice at ``t_next``.

    Returns ``(v_cur, volumes, limits, sup)`` where ``v_cur`` is the
    value slice one time step earlier and the policy arrays hold the
    argmax controls with the documented tie-breaking.
    """
    if not np.all(np.isfinite(v_next)):
        raise DomainError("v_next must be finite")
    if tables is None:
        tables = SolverTables(spec, grid)
    hs, pbs = tables.best_limits(v_next)
    sup, vol, lim, _ = _argmax_supremum(tables, hs, pbs)

    gen = v_next @ tables.R_joint.T
    q = grid.q_grid
    q_star = target(t_next)
    bracket = penalty.value(q - q_star)[:, None] - spec.price.mu * q[:, None] - gen - sup
    v_cur = v_next - grid.dt * bracket

    worst = np.abs(v_cur).max()
    if not np.isfinite(worst) or worst > blowup_bound:
        flat = int(np.nanargmax(np.abs(v_cur)))
        qi, s = np.unravel_index(flat, v_cur.shape)
        raise SolverBlowupError(
            t_next - grid.dt, float(q[qi]), int(s), float(v_cur[qi, s]), blowup_bound
        )
    return v_cur, vol, lim, sup


def market_order_obstacle(
    v: np.ndarray, spec: MarketSpec, grid: SliceGrid, *, tables: SolverTables | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Floor the value with per-venue market-order interventions.

    ``v <- max(v, max_n sup_m -m psi_n/2 + v(q - m))`` over the market
    order grid; returns the floored value and the chosen per-venue
    volumes (at most one venue intervenes per grid point).
    """
    if grid.m_grid.size == 0:
        return v, np.zeros(v.shape + (spec.n_venues,))
    if tables is None:
        tables = SolverTables(spec, grid)
    space = spec.space
    n_q, n_s = v.shape
    q = grid.q_grid
    best = v.copy()
    best_m = np.zeros((n_q, n_s, spec.n_venues))
    for venue in range(spec.n_venues):
        half = space.spread_value[:, venue] / 2.0  # (n_s,)
        for k, m in enumerate(grid.m_grid):
            if m <= 0:
                continue
            exact, lo, fr = tables.m_shift[k]
            ilo = np.clip(np.arange(n_q) - lo, 0, n_q - 1)
            if exact:
                vshift = v[ilo]
            else:
                ihi = np.clip(ilo - 1, 0, n_q - 1)
                vshift = (v[ilo] * (1.0 - fr)) + (v[ihi] * fr)
            cand = vshift - m * half[None, :]
            cand = np.where((q >= m)[:, None], cand, -np.inf)
            better = cand > best
            if np.any(better):
                best = np.where(better, cand, best)
                best_m[better] = 0.0
                best_m[:, :, venue] = np.where(better, m, best_m[:, :, venue])
    return best, best_m


@dataclass
class SliceSolution:
    """Value and policy tensors of one solved slice."""

    grid: SliceGrid
    slice_start: float
    value: np.ndarray        # (n_t + 1, n_q, n_s)
    volumes: np.ndarray      # (n_t, n_q, n_s, N)
    limits: np.ndarray       # (n_t, n_q, n_s, N), int8
    market: np.ndarray       # (n_t, n_q, n_s, N)
    gain: np.ndarray         # (n_t, n_q, n_s), the stored supremum
    times: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = self.slice_start + self.grid.dt * np.arange(self.grid.n_t + 1)

    def controls_at(self, step: int, q_index: int, state: int):
        return (
            self.volumes[step, q_index, state],
            self.limits[step, q_index, state],
            self.market[step, q_index, state],
        )


def solve_slice(
    spec: MarketSpec,
    grid: SliceGrid,
    penalty: PenaltySpec,
    target,
    slice_start: float = 0.0,
    *,
    market_orders: bool = False,
    blowup_bound: float = DEFAULT_BLOWUP_BOUND,
) -> SliceSolution:
    """Solve one slice backward from a zero terminal condition.

    Deterministic: identical inputs produce bit-identical tensors.
    """
    tables = SolverTables(spec, grid)
    n_s = spec.space.n_states
    n = spec.n_venues
    value = np.zeros((grid.n_t + 1, grid.n_q, n_s))
    volumes = np.zeros((grid.n_t, grid.n_q, n_s, n))
    limits = np.zeros((grid.n_t, grid.n_q, n_s, n), dtype=np.int8)
    market = np.zeros((grid.n_t, grid.n_q, n_s, n))
    gain = np.zeros((grid.n_t, grid.n_q, n_s))
    if market_orders and grid.m_grid.size == 0:
        raise ConfigError("market orders enabled but grid.m_max/n_m define no grid")

    for i in range(grid.n_t - 1, -1, -1):
        t_next = slice_start + grid.dt * (i + 1)
        v_cur, vol, lim, sup = bellman_step(
            value[i + 1], t_next, spec, grid, penalty, target,
            tables=tables, blowup_bound=blowup_bound,
        )
        if market_orders:
            v_cur, m_choice = market_order_obstacle(v_cur, spec, grid, tables=tables)
            market[i] = m_choice
        value[i] = v_cur
        volumes[i] = vol
        limits[i] = lim
        gain[i] = sup
    return SliceSolution(
        grid=grid, slice_start=slice_start, value=value,
        volumes=volumes, limits=limits, market=market, gain=gain,
    )
