"""Screening-curve analytics for generation and storage capacity.

All expectations are taken under the product of the stationary
state-of-charge distribution and the load distribution, so the
price-duration curve here already mixes over storage states.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .market import LoadGrid, TechSet
from .markov import StationaryDistribution, stationary_distribution, transition_matrix
from .policy import PolicySolution, StorageGrid, solve_policy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriceDurationCurve:
    """Atoms ``(duration, price)`` in descending price order.

    ``durations[k]`` is the probability that the price is at least
    ``prices[k]``.
    """

    durations: np.ndarray
    prices: np.ndarray

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.durations, prepend=0.0)

    @property
    def mean(self) -> float:
        return float(self.masses @ self.prices)

    @property
    def max(self) -> float:
        return float(self.prices[0])

    @property
    def min(self) -> float:
        return float(self.prices[-1])

    def price_at(self, duration) -> np.ndarray:
        """Step-function lookup of the price at a given duration."""
        idx = np.searchsorted(self.durations, duration, side="left")
        return self.prices[np.clip(idx, 0, self.prices.size - 1)]


def _weights(sol: PolicySolution, x) -> np.ndarray:
    mass = x.mass if isinstance(x, StationaryDistribution) else np.asarray(x, dtype=float)
    return mass[:, None] * sol.loads.probabilities[None, :]


def price_duration_curve(sol: PolicySolution, x) -> PriceDurationCurve:
    w = _weights(sol, x).ravel()
    p = sol.prices.ravel()
    keep = w > 0
    prices, inverse = np.unique(p[keep], return_inverse=True)
    mass = np.bincount(inverse, weights=w[keep])
    # prices equal up to solver round-off are one atom (mass-weighted price)
    scale = max(1.0, float(np.max(np.abs(prices))))
    group = np.concatenate(([0], np.cumsum(np.diff(prices) > 1e-9 * scale)))
    mass_g = np.bincount(group, weights=mass)
    prices = np.bincount(group, weights=mass * prices) / mass_g
    prices, mass = prices[::-1], mass_g[::-1]
    return PriceDurationCurve(np.cumsum(mass), prices)


def generation_margin(variable_cost: float, sol: PolicySolution, x) -> float:
    """Expected area under the price-duration curve above ``variable_cost``."""
    return float(np.sum(_weights(sol, x) * np.maximum(sol.prices - variable_cost, 0.0)))


def storage_marginal_benefit(sol: PolicySolution, x, discount: float | None = None) -> float:
    """Stationary mean of the shadow value of one more MWh of storage volume.

    Averages ``(discount*E[P+] - P)^+`` over states and loads: the area
    between the discounted next-interval expected price and the current
    price wherever charging to the top would still pay.
    """
    d = sol.discount if discount is None else discount
    gain = np.maximum(d * sol.ep_next - sol.prices, 0.0)
    return float(np.sum(_weights(sol, x) * gain))


@dataclass
class CapacityReport:
    generation_margins: dict
    fixed_costs: dict
    storage_marginal_benefit: float
    storage_fixed_cost: float | None = None


def capacity_report(sol: PolicySolution, x, techs: TechSet | None = None, f_s=None):
    margins, fixed = {}, {}
    for tech in techs.techs if techs is not None else ():
        margins[tech.name] = generation_margin(tech.variable_cost, sol, x)
        fixed[tech.name] = tech.fixed_cost
    return CapacityReport(margins, fixed, storage_marginal_benefit(sol, x), f_s)


@dataclass
class StorageCase:
    """A solved storage size: policy, chain and stationary distribution."""

    capacity: float
    solution: PolicySolution
    stationary: StationaryDistribution
    transition: object = field(repr=False, default=None)

    @property
    def marginal_benefit(self) -> float:
        return storage_marginal_benefit(self.solution, self.stationary)

    @property
    def mean_price(self) -> float:
        return price_duration_curve(self.solution, self.stationary).mean


def solve_storage_case(
    curve,
    loads: LoadGrid,
    capacity: float,
    n_states: int = 101,
    discount: float = 0.999,
    delta_t: float = 1.0,
    s_min: float = 0.0,
    tol: float = 1e-9,
    max_iter: int = 20000,
    damping: float = 0.5,
    ep0=None,
) -> StorageCase:
    grid = StorageGrid.uniform(s_min, capacity, n_states, delta_t=delta_t, discount=discount)
    sol = solve_policy(curve, grid, loads, tol=tol, max_iter=max_iter, damping=damping, ep0=ep0)
    m = transition_matrix(sol)
    return StorageCase(capacity, sol, stationary_distribution(m), m)


def marginal_benefit_curve(curve, loads, capacities, **solver_kw) -> np.ndarray:
    return np.array(
        [solve_storage_case(curve, loads, k, **solver_kw).marginal_benefit for k in capacities]
    )


@dataclass
class OptimalCapacity:
    capacity: float
    marginal_benefit: float
    flag: str | None
    probes: list

    @property
    def bracketed(self) -> bool:
        return self.flag is None


def optimal_storage_capacity(
    curve,
    loads: LoadGrid,
    fixed_cost: float,
    bounds: tuple | None = None,
    capacity_tol: float | None = None,
    **solver_kw,
) -> OptimalCapacity:
    """Storage volume at which the stationary marginal benefit meets ``fixed_cost``.

    Bisection on capacity, re-solving policy and stationary distribution at
    each probe.  ``capacity_tol`` (MWh) defaults to 1% of the load range;
    ``solver_kw`` go to :func:`solve_storage_case`.  If the marginal
    benefit is already below the fixed cost at the lower bound the lower
    bound is returned with flag ``"below_lower"``; if it is still above at
    the upper bound, the upper bound with flag ``"above_upper"``.
    """
    if not fixed_cost > 0:
        raise ValueError("fixed cost must be > 0")
    span = loads.span
    lo, hi = bounds if bounds is not None else (0.0, 2.0 * span)
    tol = 0.01 * span if capacity_tol is None else capacity_tol
    probes = []

    def mb(k):
        value = solve_storage_case(curve, loads, k, **solver_kw).marginal_benefit
        probes.append((k, value))
        logger.info("capacity %.4g: marginal benefit %.6g", k, value)
        return value

    mb_lo, mb_hi = mb(lo), mb(hi)
    if mb_lo <= fixed_cost:
        return OptimalCapacity(lo, mb_lo, "below_lower", probes)
    if mb_hi >= fixed_cost:
        return OptimalCapacity(hi, mb_hi, "above_upper", probes)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        mb_mid = mb(mid)
        if mb_mid > fixed_cost:
            lo, mb_lo = mid, mb_mid
        else:
            hi, mb_hi = mid, mb_mid
    # linear interpolation inside the final bracket
    frac = (mb_lo - fixed_cost) / (mb_lo - mb_hi) if mb_lo != mb_hi else 0.5
    k_star = lo + frac * (hi - lo)
    ordered = sorted(probes)
    values = [v for _, v in ordered]
    if any(b > a + 1e-9 * max(1.0, abs(a)) for a, b in zip(values, values[1:])):
        logger.warning("marginal benefit not monotone over the probes")
    return OptimalCapacity(k_star, mb_lo + frac * (mb_hi - mb_lo), None, probes)


def percent_to_capacity(pct: float, loads: LoadGrid, delta_t: float = 1.0) -> float:
    """Storage volume (MWh) for a capacity stated as a percent of load variation."""
    if pct < 0 or not math.isfinite(pct):
        raise ValueError("percent must be finite and >= 0")
    return pct / 100.0 * loads.span * delta_t
