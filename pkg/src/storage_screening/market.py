"""Generation stack, load distribution and the no-storage price curve.

Two price curves are supported: a merit-order stack of generation
technologies (with lost load modelled as a final, uncapped technology priced
at VoLL) and an affine curve ``a + b*L``.  Both expose the same small surface
(``price``, ``dispatch_cost``, ``inverse``) so the policy solver never needs
to know which one it has.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

PROB_TOL = 1e-12


@dataclass(frozen=True)
class GenerationTech:
    name: str
    variable_cost: float
    fixed_cost: float = 0.0
    capacity: float = 0.0

    def __post_init__(self):
        for attr in ("variable_cost", "fixed_cost", "capacity"):
            value = getattr(self, attr)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{self.name}: {attr} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class TechSet:
    """Generation technologies in merit order plus the value of lost load.

    Technologies sharing a variable cost are merged (capacities summed) so
    the stack is strictly increasing in cost.
    """

    techs: tuple
    voll: float

    def __init__(self, techs: Sequence[GenerationTech], voll: float):
        merged: dict[float, GenerationTech] = {}
        for tech in sorted(techs, key=lambda t: t.variable_cost):
            prev = merged.get(tech.variable_cost)
            if prev is None:
                merged[tech.variable_cost] = tech
            else:
                merged[tech.variable_cost] = GenerationTech(
                    name=f"{prev.name}+{tech.name}",
                    variable_cost=tech.variable_cost,
                    fixed_cost=min(prev.fixed_cost, tech.fixed_cost),
                    capacity=prev.capacity + tech.capacity,
                )
        ordered = tuple(merged.values())
        if ordered and voll <= ordered[-1].variable_cost:
            raise ValueError("voll must exceed every variable cost")
        object.__setattr__(self, "techs", ordered)
        object.__setattr__(self, "voll", float(voll))

    @property
    def costs(self) -> np.ndarray:
        return np.array([t.variable_cost for t in self.techs], dtype=float)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([t.capacity for t in self.techs], dtype=float)

    @property
    def total_capacity(self) -> float:
        return float(self.capacities.sum())

    def with_capacities(self, capacities: Sequence[float]) -> "TechSet":
        if len(capacities) != len(self.techs):
            raise ValueError("one capacity per technology required")
        return TechSet(
            [
                GenerationTech(t.name, t.variable_cost, t.fixed_cost, float(k))
                for t, k in zip(self.techs, capacities)
            ],
            self.voll,
        )


@dataclass(frozen=True)
class LoadGrid:
    """Discrete i.i.d. load distribution.

    ``support`` records the continuous interval a uniform grid was built
    from; it is used for percent-of-variation scaling and for screening
    quantiles.  Explicit grids fall back to their first and last atoms.
    """

    values: np.ndarray
    probabilities: np.ndarray
    support: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probabilities, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise ValueError("values and probabilities must be equal-length 1-d arrays")
        if np.any(np.diff(values) <= 0):
            raise ValueError("load values must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("load values must be >= 0")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("probabilities must be >= 0 and sum to 1")
        values.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "LoadGrid":
        """Equal-weight atoms on ``linspace(lo, hi, n)``."""
        if n < 1 or hi < lo or (n > 1 and hi == lo):
            raise ValueError("need n >= 1 and lo < hi")
        values = np.linspace(lo, hi, n)
        probs = np.full(n, 1.0 / n)
        probs[-1] = 1.0 - probs[:-1].sum()
        return cls(values, probs, support=(float(lo), float(hi)))

    @classmethod
    def from_pairs(cls, values: Sequence[float], weights: Sequence[float]) -> "LoadGrid":
        weights = np.asarray(weights, dtype=float)
        return cls(np.asarray(values, dtype=float), weights / weights.sum())

    @property
    def l_min(self) -> float:
        return float(self.values[0])

    @property
    def l_max(self) -> float:
        return float(self.values[-1])

    @property
    def span(self) -> float:
        lo, hi = self.support if self.support else (self.l_min, self.l_max)
        return hi - lo

    @property
    def mean(self) -> float:
        return float(self.values @ self.probabilities)

    def durations(self) -> np.ndarray:
        """Probability that load is at or above each atom, Pr(L >= l)."""
        return np.cumsum(self.probabilities[::-1])[::-1]

    def load_at_duration(self, h: float) -> float:
        """Load level exceeded with probability ``h``.

        Uniform grids use the continuous uniform quantile so screening
        capacities land on round numbers; explicit grids use the smallest
        atom whose upper tail probability does not exceed ``h``.
        """
        if not 0.0 <= h <= 1.0:
            raise ValueError("duration must lie in [0, 1]")
        if self.support is not None:
            lo, hi = self.support
            return hi - h * (hi - lo)
        tail = self.durations()
        idx = np.nonzero(tail <= h + PROB_TOL)[0]
        return float(self.values[idx[0]]) if idx.size else self.l_max


class MeritOrder:
    """Step price curve from cheapest-first dispatch of a ``TechSet``.

    At a capacity breakpoint the price is the cost of the *next* unit
    (right-continuous), i.e. the cost of serving one more MW.
    """

    kind = "merit_order"

    def __init__(self, techs: TechSet):
        self.techs = techs
        self._costs = np.append(techs.costs, techs.voll)
        self._caps = techs.capacities
        self._cum = np.cumsum(self._caps)
        self._cum_list = self._cum.tolist()
        self._cost_list = self._costs.tolist()

    def __repr__(self):
        return f"MeritOrder({self.techs!r})"

    @property
    def floor(self) -> float:
        return self.price(0.0)

    @property
    def ceiling(self) -> float:
        return self.techs.voll

    def price(self, load):
        idx = np.searchsorted(self._cum, load, side="right")
        out = self._costs[idx]
        return float(out) if np.ndim(out) == 0 else out

    def price_scalar(self, load: float) -> float:
        from bisect import bisect_right

        return self._cost_list[bisect_right(self._cum_list, load)]

    def price_bounds(self, load, eta=1e-9):
        """Left and right price around ``load``; they differ only at a step."""
        load = np.asarray(load, dtype=float)
        return self.price(np.maximum(load - eta, 0.0)), self.price(load + eta)

    def dispatch_cost(self, load):
        load = np.asarray(load, dtype=float)
        lower = np.concatenate(([0.0], self._cum[:-1]))
        served = np.clip(load[..., None] - lower, 0.0, self._caps)
        cost = served @ self._costs[:-1]
        cost = cost + self.techs.voll * np.maximum(load - self.techs.total_capacity, 0.0)
        return float(cost) if cost.ndim == 0 else cost

    def inverse(self, p: float) -> tuple[float, bool]:
        if p < self._costs[0]:
            return 0.0, True
        if p >= self.techs.voll:
            return math.inf, False
        # techs priced at or below p run flat out; the jump to the next tech
        # happens exactly at their cumulative capacity
        m = int(np.searchsorted(self._costs[:-1], p, side="right"))
        return float(self._cum[m - 1]) if m else 0.0, False


@dataclass(frozen=True)
class Affine:
    """Linear price curve ``intercept + slope * L``."""

    intercept: float
    slope: float
    kind: str = field(default="affine", init=False)

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("affine slope must be > 0")

    @property
    def floor(self) -> float:
        return self.intercept

    @property
    def ceiling(self) -> float:
        return math.inf

    def price(self, load):
        out = self.intercept + self.slope * np.asarray(load, dtype=float)
        return float(out) if out.ndim == 0 else out

    def price_scalar(self, load: float) -> float:
        return self.intercept + self.slope * load

    def price_bounds(self, load, eta=1e-9):
        p = self.price(load)
        return p, p

    def dispatch_cost(self, load):
        load = np.asarray(load, dtype=float)
        out = self.intercept * load + 0.5 * self.slope * load**2
        return float(out) if out.ndim == 0 else out

    def inverse(self, p: float) -> tuple[float, bool]:
        if p < self.intercept:
            return 0.0, True
        return (p - self.intercept) / self.slope, False


PriceCurve = Union[MeritOrder, Affine]


def _check_load(load):
    if np.any(np.asarray(load) < 0):
        raise ValueError("load must be >= 0")


def dispatch_cost(load, curve: PriceCurve | TechSet):
    """Least-cost dispatch cost ($/h) of serving ``load``."""
    _check_load(load)
    if isinstance(curve, TechSet):
        curve = MeritOrder(curve)
    return curve.dispatch_cost(load)


def price(load, curve: PriceCurve):
    """Marginal dispatch cost at ``load`` ($/MWh)."""
    _check_load(load)
    return curve.price(load)


def inverse_price(p: float, curve: PriceCurve) -> tuple[float, bool]:
    """Largest load whose price does not exceed ``p``.

    Returns ``(load, at_floor)``; ``at_floor`` is set when ``p`` lies below
    the price of the first MW, in which case the load is clamped to zero.
    """
    return curve.inverse(p)


def generator_optimal_output(price: float, variable_cost: float, capacity: float) -> float:
    """Profit-maximising output of a price-taking generator.

    At ``price == variable_cost`` the generator is indifferent over
    ``[0, capacity]``; full output is returned by convention.
    """
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    return capacity if price >= variable_cost else 0.0


def screening_capacities(techs: TechSet, loads: LoadGrid) -> TechSet:
    """Least-cost generation capacities for ``loads`` without storage.

    Classic screening: technology ``i`` is the cheapest way to serve a load
    slice running a fraction ``h`` of the time when ``h`` lies between its
    cost crossovers with its neighbours in the stack.  Technologies that
    are never least cost receive zero capacity.
    """
    costs = list(techs.costs) + [techs.voll]
    fixed = [t.fixed_cost for t in techs.techs] + [0.0]
    # lower envelope of the screening lines f + c*h over h in [0, 1]
    h = 1.0
    current = min(range(len(costs)), key=lambda i: (fixed[i] + costs[i], costs[i]))
    # walk from baseload duty (h=1) towards peaking duty (h=0)
    boundaries = {}
    while True:
        best, best_h = None, -1.0
        for j in range(current + 1, len(costs)):
            if fixed[j] >= fixed[current]:
                continue
            cross = (fixed[current] - fixed[j]) / (costs[j] - costs[current])
            if cross > best_h or (cross == best_h and j > best):
                best, best_h = j, cross
        if best is None or best_h <= 0:
            break
        best_h = min(best_h, h)
        boundaries[current] = best_h
        current, h = best, best_h
    caps = np.zeros(len(techs.techs))
    served = 0.0
    for i in range(len(techs.techs)):
        if i in boundaries:
            level = loads.load_at_duration(boundaries[i])
            caps[i] = max(level - served, 0.0)
            served += caps[i]
    return techs.with_capacities(caps)
