"""Independent reference computations used by tests only."""
import itertools
import math

import numpy as np


def brute_force_argmax(v_next, qi, s, spec, grid):
    """Exhaustive search over the full (limits, volumes) product grid.

    Enumerates every feasible control at one (inventory, state) point,
    evaluates its gain with plain scalar arithmetic, and keeps the best
    under the documented tie-break key: smallest total volume, then the
    more passive limit per venue in venue order, then the smaller volume
    per venue in venue order.  Zero-volume venues carry the canonical
    limit 0.  Returns (gain, volumes, limits).
    """
    space = spec.space
    n = spec.n_venues
    q = grid.q_grid[qi]
    l_grid = grid.l_grid
    omega = spec.proportions.omega
    R = len(omega)
    m = int(space.regime_flat[s])
    dq = grid.dq
    kappa = spec.intensities.kappa

    term = {}
    for v in range(n):
        tick = spec.venues[v].tick_size
        psi = space.spread_value[s, v]
        for j, ell in enumerate(l_grid):
            if ell == 0.0:
                term[(v, j, 0)] = 0.0
                continue
            ps = (0, 1) if space.spread_ticks[s, v] == 1 else (-1, 0, 1)
            for p in ps:
                edge = psi / 2.0 + p * tick
                lam = spec.intensities.rates[v, p + 1, m]
                acc = 0.0
                for r in range(R):
                    shift = omega[r] * ell / dq
                    rr = round(shift)
                    if abs(shift - rr) <= 1e-9 * (1.0 + abs(shift)):
                        vs = v_next[max(qi - int(rr), 0), s]
                    else:
                        lo = math.floor(shift)
                        fr = shift - lo
                        ilo = max(qi - lo, 0)
                        ihi = max(ilo - 1, 0)
                        vs = (v_next[ilo, s] * (1.0 - fr)) + (v_next[ihi, s] * fr)
                    acc = acc + spec.proportions.probs[v, p + 1, m, r] * (
                        (omega[r] * ell) * edge + (vs - v_next[qi, s]))
                term[(v, j, p)] = lam * acc

    best_gain = None
    best_key = None
    best = None
    for l_idx in itertools.product(range(len(l_grid)), repeat=n):
        total = 0.0
        for j in l_idx:
            total += l_grid[j]
        if total > q:
            continue
        p_choices = []
        for v, j in enumerate(l_idx):
            if l_grid[j] == 0.0:
                p_choices.append((0,))
            elif space.spread_ticks[s, v] == 1:
                p_choices.append((0, 1))
            else:
                p_choices.append((-1, 0, 1))
        f = math.exp(-kappa * total)
        for ps in itertools.product(*p_choices):
            tsum = 0.0
            for v, (j, p) in enumerate(zip(l_idx, ps)):
                tsum += term[(v, j, p)]
            gain = f * tsum
            key = (total, tuple(-p for p in ps), l_idx)
            if best_gain is None or gain > best_gain or (gain == best_gain and key < best_key):
                best_gain = gain
                best_key = key
                best = (l_idx, ps)
    vols = tuple(float(l_grid[j]) for j in best[0])
    return best_gain, vols, best[1]


def penalty_accumulation(grid, penalty, target, slice_start, n_states):
    """Closed-form value when nothing can trade: minus the summed penalty."""
    q = grid.q_grid
    out = np.zeros((grid.n_t + 1, grid.n_q))
    for i in range(grid.n_t - 1, -1, -1):
        t_next = slice_start + grid.dt * (i + 1)
        out[i] = out[i + 1] - grid.dt * (penalty.coefficient * (q - target(t_next)) ** 2)
    return np.repeat(out[:, :, None], n_states, axis=2)


def market_order_brute_force(v, qi, s, spec, grid):
    """One-dimensional search over the market-order grid at one point."""
    best = v[qi, s]
    best_m = np.zeros(spec.n_venues)
    q = grid.q_grid[qi]
    for venue in range(spec.n_venues):
        half = spec.space.spread_value[s, venue] / 2.0
        for m in grid.m_grid:
            if m <= 0 or m > q:
                continue
            shift = m / grid.dq
            rr = round(shift)
            if abs(shift - rr) <= 1e-9 * (1.0 + abs(shift)):
                vs = v[max(qi - int(rr), 0), s]
            else:
                lo = math.floor(shift)
                fr = shift - lo
                ilo = max(qi - lo, 0)
                vs = (v[ilo, s] * (1.0 - fr)) + (v[max(ilo - 1, 0), s] * fr)
            cand = vs - m * half
            if cand > best:
                best = cand
                best_m = np.zeros(spec.n_venues)
                best_m[venue] = m
    return best, best_m
