"""Hedge contracts for a small, price-taking storage facility.

The facility sits inside a power system whose storage follows a solved
:class:`~storage_screening.policy.PolicySolution`.  Its own state of charge
``s`` lives on ``[s_min, s_max]``; the system state ``S`` and the load ``L``
determine the spot price and the discounted next-interval expected price
``dEP = discount * E[P+]``.

The perfect hedge pays

    H = P*(s - s*) - dEP*(s+ - s*) - c

where ``s*`` is the facility's optimal closing state.  It splits into a cap
struck at ``discount*EP_min`` on volume ``s - s_min``, a floor struck at
``discount*EP_max`` on volume ``s_max - s``, and an "S-shaped" leg paying
``(s - s+) * dEP``.  A cap and floor alone cannot do the job: they do not
depend on ``s+`` and so remove the facility's reason to charge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import PolicySolution, Regime


def cap_payoff(price, strike, volume):
    """``(P - strike) * volume`` when the price is at or above the strike."""
    if np.any(np.asarray(volume) < 0):
        raise ValueError("cap volume must be >= 0")
    return np.maximum(np.asarray(price, float) - strike, 0.0) * volume


def floor_payoff(price, strike, volume):
    """``(strike - P) * volume`` when the price is below the strike."""
    if np.any(np.asarray(volume) < 0):
        raise ValueError("floor volume must be >= 0")
    return np.maximum(strike - np.asarray(price, float), 0.0) * volume


@dataclass(frozen=True)
class EpBounds:
    """Expected next-interval price when the system closes full / empty."""

    ep_max: float
    ep_min: float

    def __post_init__(self):
        if self.ep_max > self.ep_min + 1e-9 * max(1.0, abs(self.ep_min)):
            raise ValueError("ep_max must not exceed ep_min")

    @classmethod
    def from_solution(cls, sol: PolicySolution) -> "EpBounds":
        return cls(sol.ep_max, sol.ep_min)


@dataclass(frozen=True)
class HedgeComponents:
    cap: float
    floor: float
    s_shaped: float
    constant: float = 0.0

    @property
    def total(self) -> float:
        return self.cap + self.floor + self.s_shaped + self.constant


@dataclass(frozen=True)
class SettlementRow:
    soc: float
    load: float
    price: float
    dep: float
    pi: float
    fv: float
    fcf: float
    cv: float
    ccf: float
    scf: float
    total: float

    FIELDS = ("SoC", "L", "P", "dEP", "pi", "FV", "FCF", "CV", "CCF", "SCF", "Total")

    def values(self) -> tuple:
        return (self.soc, self.load, self.price, self.dep, self.pi, self.fv,
                self.fcf, self.cv, self.ccf, self.scf, self.total)

    @property
    def hedged_net(self) -> float:
        return self.pi - self.total


def settlement_row(soc, closing, load, price, dep, cap_strike, floor_strike, s_min, s_max):
    """One settlement line from the interval's prices and storage states.

    Volumes are fixed from the opening state: the cap covers what could be
    discharged (``soc - s_min``), the floor what could be charged
    (``s_max - soc``).
    """
    cv, fv = soc - s_min, s_max - soc
    ccf = float(cap_payoff(price, cap_strike, cv))
    fcf = float(floor_payoff(price, floor_strike, fv))
    scf = (soc - closing) * dep
    return SettlementRow(
        soc=soc, load=load, price=price, dep=dep, pi=price * (soc - closing),
        fv=fv, fcf=fcf, cv=cv, ccf=ccf, scf=scf, total=fcf + ccf + scf,
    )


class HedgePortfolio:
    """Perfect hedge for a facility with bounds ``[s_min, s_max]``.

    When the system is indifferent (interior cell) the facility is too; it
    then closes at the same fraction of its range as the system does, so a
    facility that is a scaled copy of the system tracks it exactly.
    """

    def __init__(self, solution: PolicySolution, s_min: float | None = None,
                 s_max: float | None = None, constant: float = 0.0):
        self.solution = solution
        self.s_min = solution.grid.s_min if s_min is None else float(s_min)
        self.s_max = solution.grid.s_max if s_max is None else float(s_max)
        if self.s_max < self.s_min:
            raise ValueError("facility needs s_max >= s_min")
        self.constant = constant
        self.bounds = EpBounds.from_solution(solution)
        self._cells = {}

    @property
    def cap_strike(self) -> float:
        return self.solution.discount * self.bounds.ep_min

    @property
    def floor_strike(self) -> float:
        return self.solution.discount * self.bounds.ep_max

    def cell(self, S: float, L: float) -> dict:
        key = (S, L)
        out = self._cells.get(key)
        if out is None:
            out = self.solution.cell(S, L)
            out["dep"] = self.solution.discount * out["ep_next"]
            if len(self._cells) < 100_000:
                self._cells[key] = out
        return out

    def optimal_closing(self, s: float, S: float, L: float) -> float:
        c = self.cell(S, L)
        if c["regime"] == Regime.AT_MAX:
            return self.s_max
        if c["regime"] == Regime.AT_MIN:
            return self.s_min
        grid = self.solution.grid
        frac = (c["closing"] - grid.s_min) / grid.capacity if grid.capacity > 0 else 0.5
        return self.s_min + frac * (self.s_max - self.s_min)

    def cashflow(self, s_plus: float, s: float, S: float, L: float) -> float:
        return self.cell(S, L)["price"] * (s - s_plus)

    def perfect_payoff(self, s_plus: float, s: float, S: float, L: float) -> float:
        c = self.cell(S, L)
        target = self.optimal_closing(s, S, L)
        return c["price"] * (s - target) - c["dep"] * (s_plus - target) - self.constant

    def components(self, s_plus: float, s: float, S: float, L: float) -> HedgeComponents:
        c = self.cell(S, L)
        return HedgeComponents(
            cap=float(cap_payoff(c["price"], self.cap_strike, s - self.s_min)),
            floor=float(floor_payoff(c["price"], self.floor_strike, self.s_max - s)),
            s_shaped=(s - s_plus) * c["dep"],
            # the constant enters the decomposition with the opposite sign
            constant=-self.constant,
        )

    def hedged_net(self, s_plus: float, s: float, S: float, L: float) -> float:
        return self.cashflow(s_plus, s, S, L) - self.perfect_payoff(s_plus, s, S, L)


def perfect_hedge_payoff(s_plus, s, S, L, solution: PolicySolution, s_min=None, s_max=None):
    """Payoff of the perfect hedge, with the free constant set to zero."""
    return HedgePortfolio(solution, s_min, s_max).perfect_payoff(s_plus, s, S, L)


def decomposed_hedge_payoff(s_plus, s, S, L, solution: PolicySolution, s_min=None, s_max=None):
    """Cap, floor, S-shaped and constant legs of the perfect hedge."""
    return HedgePortfolio(solution, s_min, s_max).components(s_plus, s, S, L)


def settlement_table(trajectory, solution: PolicySolution, rtol: float = 1e-9):
    """Settlement ledger for the system storage along a simulated path.

    Raises ``ValueError`` if the trajectory does not follow the solution's
    policy.
    """
    hp = HedgePortfolio(solution)
    rows = []
    scale = max(1.0, solution.grid.s_max)
    for S, L, closing in zip(trajectory.opening, trajectory.load, trajectory.closing):
        S, L, closing = float(S), float(L), float(closing)
        c = hp.cell(S, L)
        if abs(c["closing"] - closing) > rtol * scale:
            raise ValueError(
                f"trajectory closes at {closing} from ({S}, {L}); policy gives {c['closing']}"
            )
        rows.append(settlement_row(S, closing, L, c["price"], c["dep"],
                                   hp.cap_strike, hp.floor_strike, hp.s_min, hp.s_max))
    return rows


def collar_only_residual(trajectory, solution: PolicySolution, strikes=None) -> float:
    """Variance of the storage cashflow net of cap and floor legs only.

    ``strikes`` is ``(cap_strike, floor_strike)``; by default the perfect
    hedge's own strikes.  Volumes follow the opening state as in the full
    portfolio.  Without the S-shaped leg this is strictly positive whenever
    the storage trades at all.
    """
    hp = HedgePortfolio(solution)
    cap_k, floor_k = strikes if strikes is not None else (hp.cap_strike, hp.floor_strike)
    s = np.asarray(trajectory.opening, float)
    p = np.asarray(trajectory.price, float)
    collar = cap_payoff(p, cap_k, s - hp.s_min) + floor_payoff(p, floor_k, hp.s_max - s)
    return float(np.var(np.asarray(trajectory.cashflow, float) - collar))


def perfect_hedge_residual(trajectory, solution: PolicySolution) -> float:
    """Variance of the cashflow net of the full perfect hedge (zero in theory)."""
    rows = settlement_table(trajectory, solution)
    return float(np.var([r.hedged_net for r in rows]))
