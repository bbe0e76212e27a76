"""Socially optimal operation of a volume-limited, lossless storage fleet.

The solver iterates on the vector ``EP[S]`` of expected spot prices faced
by a system opening the interval with state of charge ``S``.  Given ``EP``,
each cell ``(S, L)`` picks the closing state ``t`` at which

    g(t) = price(L - (S - t)/dt) - discount * EP(t)

changes sign: the current price with charging to ``t`` meets the
discounted expected price next interval.  ``g`` is nondecreasing in ``t``
(today's price rises, tomorrow's expected price falls), so the crossing is
found by bisection and clamped to the storage bounds.  New prices give a
new ``EP`` and the damped iteration runs to a fixed point.
"""

from __future__ import annotations

import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.optimize import isotonic_regression

from .market import LoadGrid, PriceCurve

logger = logging.getLogger(__name__)

ROOT_PRICE_TOL = 1e-9


class Regime(IntEnum):
    AT_MIN = -1
    INTERIOR = 0
    AT_MAX = 1


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual_history):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass(frozen=True)
class StorageGrid:
    """State-of-charge grid with interval length and per-interval discount."""

    s_values: np.ndarray
    delta_t: float = 1.0
    discount: float = 0.999

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s_values, dtype=float))
        if s.ndim != 1 or s.size == 0 or np.any(np.diff(s) <= 0):
            raise ValueError("s_values must be a strictly increasing 1-d array")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if not self.delta_t > 0:
            raise ValueError("delta_t must be > 0")
        s.flags.writeable = False
        object.__setattr__(self, "s_values", s)

    @classmethod
    def uniform(cls, s_min: float, capacity: float, n: int = 101, **kw) -> "StorageGrid":
        """``n`` evenly spaced states on ``[s_min, s_min + capacity]``.

        A zero capacity collapses the grid to the single state ``s_min``.
        """
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        if capacity == 0:
            return cls(np.array([float(s_min)]), **kw)
        if n < 2:
            raise ValueError("need at least two states for positive capacity")
        return cls(np.linspace(s_min, s_min + capacity, n), **kw)

    @property
    def s_min(self) -> float:
        return float(self.s_values[0])

    @property
    def s_max(self) -> float:
        return float(self.s_values[-1])

    @property
    def capacity(self) -> float:
        return self.s_max - self.s_min

    @property
    def n(self) -> int:
        return self.s_values.size

    @property
    def mid_index(self) -> int:
        return int(np.argmin(np.abs(self.s_values - 0.5 * (self.s_min + self.s_max))))


def interp_ep(t, s_values, ep):
    """Piecewise-linear interpolation of ``ep`` over the state grid."""
    if s_values.size == 1:
        return np.full(np.shape(t), ep[0]) if np.ndim(t) else float(ep[0])
    return np.interp(t, s_values, ep)


def _net_demand(load, opening, closing, delta_t):
    return load - (opening - closing) / delta_t


def _g(curve, grid, ep, opening, load, t):
    nd = np.maximum(_net_demand(load, opening, t, grid.delta_t), 0.0)
    return curve.price(nd) - grid.discount * interp_ep(t, grid.s_values, ep)


def solve_cells(curve, grid: StorageGrid, ep, opening, load, xtol=None):
    """Closing states and regimes for arrays of ``(opening, load)`` cells.

    Returns ``(closing, regime)`` with the shapes of the broadcast inputs.
    Where ``g`` vanishes on a whole interval the midpoint is returned.
    """
    opening, load = np.broadcast_arrays(np.asarray(opening, float), np.asarray(load, float))
    shape = opening.shape
    opening, load = opening.ravel(), load.ravel()
    lo_s, hi_s = grid.s_min, grid.s_max
    if xtol is None:
        xtol = 4e-15 * max(1.0, abs(lo_s), abs(hi_s))

    g_lo = _g(curve, grid, ep, opening, load, np.full_like(opening, lo_s))
    g_hi = _g(curve, grid, ep, opening, load, np.full_like(opening, hi_s))
    regime = np.zeros(opening.size, dtype=np.int8)
    regime[g_lo > 0] = Regime.AT_MIN
    regime[g_hi < 0] = Regime.AT_MAX
    closing = np.where(regime == Regime.AT_MIN, lo_s, hi_s).astype(float)

    inner = np.nonzero(regime == Regime.INTERIOR)[0]
    if inner.size and hi_s > lo_s:
        s_in, l_in = opening[inner], load[inner]

        # first t with g(t) >= 0
        a = np.full(inner.size, lo_s)
        b = np.full(inner.size, hi_s)
        done = g_lo[inner] >= 0
        b[done] = lo_s
        while True:
            active = ~done & (b - a > xtol)
            if not active.any():
                break
            m = 0.5 * (a + b)
            gm = _g(curve, grid, ep, s_in[active], l_in[active], m[active])
            idx = np.nonzero(active)[0]
            up = gm >= 0
            b[idx[up]] = m[active][up]
            a[idx[~up]] = m[active][~up]
        first = b

        # g may be flat at zero over an interval; find its right end
        probe = np.minimum(first + 1e3 * xtol, hi_s)
        flat = (probe > first) & (_g(curve, grid, ep, s_in, l_in, probe) <= 0)
        last = first.copy()
        if flat.any():
            fi = np.nonzero(flat)[0]
            a2 = probe[fi]
            b2 = np.full(fi.size, hi_s)
            top_ok = _g(curve, grid, ep, s_in[fi], l_in[fi], b2) <= 0
            a2[top_ok] = hi_s
            while True:
                active = b2 - a2 > xtol
                if not active.any():
                    break
                m = 0.5 * (a2 + b2)
                gm = _g(curve, grid, ep, s_in[fi][active], l_in[fi][active], m[active])
                idx = np.nonzero(active)[0]
                down = gm <= 0
                a2[idx[down]] = m[active][down]
                b2[idx[~down]] = m[active][~down]
            last[fi] = a2
        closing[inner] = np.clip(0.5 * (first + last), lo_s, hi_s)
    return closing.reshape(shape), regime.reshape(shape)


def price_field(policy, grid: StorageGrid, curve, loads: LoadGrid):
    """Spot prices ``P[S][L]`` implied by a policy.

    Returns ``(prices, floor_events)``; a floor event marks a cell where
    storage discharge would push net demand below zero, which is clamped.
    """
    policy = np.asarray(policy, dtype=float)
    if np.any(policy < grid.s_min - 1e-12) or np.any(policy > grid.s_max + 1e-12):
        raise ValueError("policy outside storage bounds")
    nd = _net_demand(loads.values[None, :], grid.s_values[:, None], policy, grid.delta_t)
    floor = nd < 0
    return curve.price(np.maximum(nd, 0.0)), floor


def clearing_prices(curve, grid: StorageGrid, loads: LoadGrid, policy, regime, ep):
    """Spot prices with storage as the marginal unit where it is interior.

    An interior cell whose net demand sits on a step of the price curve is
    cleared at ``discount * E[P+]``, which lies inside the step: storage
    sets the price there.  Elsewhere this is :func:`price_field`.
    """
    prices, floor = price_field(policy, grid, curve, loads)
    nd = np.maximum(
        _net_demand(loads.values[None, :], grid.s_values[:, None], policy, grid.delta_t), 0.0
    )
    left, right = curve.price_bounds(nd)
    target = grid.discount * interp_ep(policy, grid.s_values, ep)
    inner = (np.asarray(regime) == Regime.INTERIOR) & (left < right)
    prices = np.where(inner, np.clip(target, left, right), prices)
    return prices, floor


def expected_next_price(prices, loads: LoadGrid):
    """Row means ``EP[S] = sum_L prob(L) * P[S][L]``."""
    return np.asarray(prices, dtype=float) @ loads.probabilities


def policy_update(ep, grid: StorageGrid, curve, loads: LoadGrid):
    """Closing-state matrix ``S+[S][L]`` for a given ``EP`` vector."""
    ep = _monotone(np.asarray(ep, dtype=float))
    closing, _ = solve_cells(curve, grid, ep, grid.s_values[:, None], loads.values[None, :])
    return closing


def _monotone(ep):
    if ep.size > 1 and np.any(np.diff(ep) > 0):
        return isotonic_regression(ep, increasing=False).x
    return ep


@dataclass
class PolicySolution:
    curve: object
    grid: StorageGrid
    loads: LoadGrid
    policy: np.ndarray
    prices: np.ndarray
    ep: np.ndarray
    ep_next: np.ndarray
    regime: np.ndarray
    floor_events: np.ndarray
    residual: float
    iterations: int
    residual_history: list = field(default_factory=list, repr=False)
    _solver: object = field(default=None, init=False, repr=False, compare=False)

    @property
    def discount(self) -> float:
        return self.grid.discount

    @property
    def discounted_ep_next(self) -> np.ndarray:
        """``discount * E[P+]`` for every cell."""
        return self.discount * self.ep_next

    @property
    def row_mean_price(self) -> np.ndarray:
        return expected_next_price(self.prices, self.loads)

    @property
    def ep_max(self) -> float:
        """Expected next price when the system closes full."""
        return float(self.ep[-1])

    @property
    def ep_min(self) -> float:
        """Expected next price when the system closes empty."""
        return float(self.ep[0])

    def ep_at(self, t):
        return interp_ep(t, self.grid.s_values, self.ep)

    def load_index(self, load: float) -> int:
        j = int(np.searchsorted(self.loads.values, load))
        if j >= self.loads.values.size or self.loads.values[j] != load:
            raise KeyError(f"load {load} is not on the load grid")
        return j

    def closing_state(self, opening: float, load: float) -> tuple[float, int]:
        """Closing state and regime for a single, possibly off-grid, opening state."""
        if self._solver is None:
            self._solver = _CellSolver(self)
        return self._solver.solve(opening, load)

    def cell(self, opening: float, load: float) -> dict:
        """Closing state, price, ``E[P+]`` and regime for one cell."""
        closing, regime = self.closing_state(opening, load)
        nd = max(_net_demand(load, opening, closing, self.grid.delta_t), 0.0)
        ep_next = float(self.ep_at(closing))
        price = self.curve.price_scalar(nd)
        if regime == Regime.INTERIOR:
            left, right = (float(v) for v in self.curve.price_bounds(nd))
            if left < right:
                price = min(max(self.discount * ep_next, left), right)
        return {"closing": closing, "price": price, "ep_next": ep_next, "regime": regime}


class _CellSolver:
    """Scalar twin of :func:`solve_cells` for sequential simulation."""

    def __init__(self, sol: PolicySolution):
        self.price = sol.curve.price_scalar
        self.s = sol.grid.s_values.tolist()
        self.ep = sol.ep.tolist()
        self.dt = sol.grid.delta_t
        self.disc = sol.grid.discount
        self.lo, self.hi = self.s[0], self.s[-1]
        self.xtol = 4e-15 * max(1.0, abs(self.lo), abs(self.hi))

    def ep_at(self, t):
        s, ep = self.s, self.ep
        if len(s) == 1 or t <= s[0]:
            return ep[0]
        if t >= s[-1]:
            return ep[-1]
        k = bisect_right(s, t) - 1
        w = (t - s[k]) / (s[k + 1] - s[k])
        return ep[k] + w * (ep[k + 1] - ep[k])

    def g(self, opening, load, t):
        nd = load - (opening - t) / self.dt
        return self.price(nd if nd > 0 else 0.0) - self.disc * self.ep_at(t)

    def solve(self, opening, load):
        lo, hi, xtol = self.lo, self.hi, self.xtol
        g_lo = self.g(opening, load, lo)
        if g_lo > 0:
            return lo, int(Regime.AT_MIN)
        if self.g(opening, load, hi) < 0:
            return hi, int(Regime.AT_MAX)
        if hi == lo:
            return hi, int(Regime.INTERIOR)
        a, b = lo, hi
        if g_lo >= 0:
            b = lo
        while b - a > xtol:
            m = 0.5 * (a + b)
            if self.g(opening, load, m) >= 0:
                b = m
            else:
                a = m
        first = last = b
        probe = min(first + 1e3 * xtol, hi)
        if probe > first and self.g(opening, load, probe) <= 0:
            a, b = probe, hi
            if self.g(opening, load, hi) <= 0:
                a = hi
            while b - a > xtol:
                m = 0.5 * (a + b)
                if self.g(opening, load, m) <= 0:
                    a = m
                else:
                    b = m
            last = a
        return min(max(0.5 * (first + last), lo), hi), int(Regime.INTERIOR)


def solve_policy(
    curve: PriceCurve,
    grid: StorageGrid,
    loads: LoadGrid,
    tol: float = 1e-9,
    max_iter: int = 20000,
    damping: float = 0.5,
    ep0=None,
) -> PolicySolution:
    """Fixed point of the expected-price iteration.

    Convergence is declared when ``max|EP_new - EP| <= tol``.  ``damping``
    is the weight on the new iterate.  Raises :class:`ConvergenceError`
    carrying the residual history when ``max_iter`` is exhausted.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")

    s_col = grid.s_values[:, None]
    l_row = loads.values[None, :]
    if ep0 is None:
        base = expected_next_price(curve.price(loads.values)[None, :], loads)[0]
        ep = np.full(grid.n, base)
    else:
        ep = np.asarray(ep0, dtype=float).copy()

    history = []
    for it in range(1, max_iter + 1):
        closing, regime = solve_cells(curve, grid, ep, s_col, l_row)
        prices, _ = clearing_prices(curve, grid, loads, closing, regime, ep)
        ep_new = expected_next_price(prices, loads)
        residual = float(np.max(np.abs(ep_new - ep)))
        history.append(residual)
        if residual <= tol:
            break
        ep = _monotone(ep + damping * (ep_new - ep))
    else:
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations (residual {history[-1]:.3e})", history
        )
    logger.debug("policy converged in %d iterations, residual %.2e", it, residual)

    closing, regime = solve_cells(curve, grid, ep, s_col, l_row)
    prices, floor = clearing_prices(curve, grid, loads, closing, regime, ep)
    return PolicySolution(
        curve=curve,
        grid=grid,
        loads=loads,
        policy=closing,
        prices=prices,
        ep=ep,
        ep_next=interp_ep(closing, grid.s_values, ep),
        regime=regime,
        floor_events=floor,
        residual=residual,
        iterations=it,
        residual_history=history,
    )


def complementarity_gap(sol: PolicySolution) -> np.ndarray:
    """Per-cell violation of the charge/discharge trichotomy ($/MWh).

    Zero when a full cell has ``P <= dEP``, an empty cell has ``P >= dEP``
    and an interior cell has ``P == dEP``.
    """
    diff = sol.prices - sol.discounted_ep_next
    gap = np.abs(diff)
    gap = np.where(sol.regime == Regime.AT_MAX, np.maximum(diff, 0.0), gap)
    gap = np.where(sol.regime == Regime.AT_MIN, np.maximum(-diff, 0.0), gap)
    return gap


def threshold_loads(sol: PolicySolution):
    """Per opening state, the largest load that fills storage and the
    smallest load that empties it (``nan`` where no such load exists)."""
    values = sol.loads.values
    at_max = sol.regime == Regime.AT_MAX
    at_min = sol.regime == Regime.AT_MIN
    l_fill = np.array([values[row].max() if row.any() else np.nan for row in at_max])
    l_empty = np.array([values[row].min() if row.any() else np.nan for row in at_min])
    return l_fill, l_empty
