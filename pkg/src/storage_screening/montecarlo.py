"""Seeded simulation of the power system under a solved storage policy.

Loads are drawn i.i.d. from the load grid with numpy's Philox generator
(counter-based, so a seed fully determines the stream on any platform).
Closing states come from the continuous policy; nothing is snapped to the
state grid, which is why comparisons with the Markov chain are made on
distributions rather than paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hedging import HedgePortfolio
from .investment import storage_marginal_benefit
from .markov import split_onto_grid, stationary_distribution, transition_matrix
from .policy import PolicySolution, Regime

RNG_NAME = "Philox"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Trajectory:
    """One simulated path.  Arrays are indexed by interval."""

    seed: int
    opening: np.ndarray
    load: np.ndarray
    closing: np.ndarray
    price: np.ndarray
    cashflow: np.ndarray
    rng: str = RNG_NAME

    def __len__(self):
        return self.opening.size

    def rows(self):
        for t in range(len(self)):
            yield (t, self.opening[t], self.load[t], self.closing[t], self.price[t], self.cashflow[t])


def draw_loads(loads, n: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.choice(loads.values.size, size=n, p=loads.probabilities)
    return loads.values[idx]


def simulate(solution: PolicySolution, T: int, seed: int, s0: float | None = None) -> Trajectory:
    """Run the system for ``T`` intervals from ``s0`` (default: mid charge).

    The storage cashflow is ``P * (S - S+)``: revenue when discharging,
    a payment when charging.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    grid = solution.grid
    S = 0.5 * (grid.s_min + grid.s_max) if s0 is None else float(s0)
    if not grid.s_min <= S <= grid.s_max:
        raise ValueError("initial state outside storage bounds")
    loads = draw_loads(solution.loads, T, make_rng(seed))
    opening, closing, price = np.empty(T), np.empty(T), np.empty(T)
    for t, L in enumerate(loads.tolist()):
        cell = solution.cell(S, L)
        opening[t], closing[t], price[t] = S, cell["closing"], cell["price"]
        S = cell["closing"]
    return Trajectory(seed, opening, loads, closing, price, price * (opening - closing))


def empirical_state_distribution(traj: Trajectory, s_values) -> np.ndarray:
    """Histogram of opening states on the grid, via the two-point split."""
    s_values = np.asarray(s_values, float)
    k, w = split_onto_grid(traj.opening, s_values)
    hist = np.bincount(k, weights=w, minlength=s_values.size)
    if s_values.size > 1:
        hist += np.bincount(k + 1, weights=1.0 - w, minlength=s_values.size + 1)[: s_values.size]
    return hist / hist.sum()


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def summary(traj: Trajectory, solution: PolicySolution | None = None) -> dict:
    """Plain key/value statistics of a trajectory."""
    T = len(traj)
    out = {
        "seed": traj.seed,
        "rng": traj.rng,
        "intervals": T,
        "mean_price": float(traj.price.mean()),
        "mean_price_se": float(traj.price.std(ddof=1) / math.sqrt(T)) if T > 1 else float("nan"),
        "mean_cashflow": float(traj.cashflow.mean()),
        "mean_opening_state": float(traj.opening.mean()),
    }
    if solution is not None:
        x = stationary_distribution(transition_matrix(solution))
        out["stationary_mean_price"] = float(x.mass @ solution.row_mean_price)
        out["state_tv_distance"] = total_variation(
            empirical_state_distribution(traj, solution.grid.s_values), x.mass
        )
    return out


@dataclass
class PrivateOptimalityReport:
    rule_value: np.ndarray
    optimal_value: np.ndarray
    best_alternative: float
    worst_deviation_gain: float
    relative_gap: float
    marginal_profit: float
    marginal_profit_se: float
    marginal_benefit: float

    @property
    def rule_is_optimal(self) -> bool:
        return self.relative_gap <= 1e-6

    @property
    def marginal_profit_error(self) -> float:
        return abs(self.marginal_profit - self.marginal_benefit) / self.marginal_benefit


class _FacilityMDP:
    """A price-taking facility on a small grid, riding the system chain.

    State ``(i, n)`` pairs facility level ``f[i]`` with system state
    ``S[n]``.  The system moves by the two-point split of its continuous
    closing state, so its next-state law matches the transition matrix.
    """

    def __init__(self, solution: PolicySolution, f_values):
        self.f = np.asarray(f_values, float)
        self.sol = solution
        grid = solution.grid
        self.k, self.w = split_onto_grid(solution.policy, grid.s_values)
        self.lam = solution.loads.probabilities
        self.delta = solution.discount
        self.nf, self.ns = self.f.size, grid.n
        self.nl = self.lam.size

    def stage(self, i_f, a):
        """Expected reward over loads for facility action ``a[n, l]``."""
        p = self.sol.prices
        return ((p * (self.f[i_f] - self.f[a])) * self.lam).sum(axis=1)

    def evaluate(self, pol) -> np.ndarray:
        """Value of ``pol[i, n, l]`` (facility action indices), shape ``(nf, ns)``."""
        nf, ns, nl = self.nf, self.ns, self.nl
        size = nf * ns
        m = np.zeros((size, size))
        r = np.zeros(size)
        n_idx = np.arange(ns)[:, None]
        for i in range(nf):
            a = pol[i]
            r[i * ns:(i + 1) * ns] = self.stage(i, a)
            rows = np.broadcast_to(i * ns + n_idx, a.shape)
            np.add.at(m, (rows, a * ns + self.k), self.lam * self.w)
            if ns > 1:
                np.add.at(m, (rows, a * ns + np.minimum(self.k + 1, ns - 1)), self.lam * (1 - self.w))
        v = np.linalg.solve(np.eye(size) - self.delta * m, r)
        return v.reshape(nf, ns)

    def continuation(self, v):
        """``E[V(f[a], S+)]`` per system cell and action: shape ``(nf, ns, nl)``."""
        k1 = np.minimum(self.k + 1, self.ns - 1)
        return self.w[None] * v[:, self.k] + (1 - self.w[None]) * v[:, k1]

    def q_values(self, v):
        """``Q[i, a, n, l]`` for every facility level and action."""
        p = self.sol.prices
        cont = self.continuation(v)
        return (p[None, None] * (self.f[:, None, None, None] - self.f[None, :, None, None])
                + self.delta * cont[None])

    def policy_iteration(self, pol, max_iter=1000):
        """Howard improvement from ``pol``; returns ``(value, policy)``."""
        v = self.evaluate(pol)
        for _ in range(max_iter):
            q = self.q_values(v)
            current = np.take_along_axis(q, pol[:, None], axis=1)[:, 0]
            best = q.argmax(axis=1)
            better = np.take_along_axis(q, best[:, None], axis=1)[:, 0] > current + 1e-12 * max(
                1.0, float(np.max(np.abs(v))))
            if not better.any():
                return v, pol
            pol = np.where(better, best, pol)
            v = self.evaluate(pol)
        raise RuntimeError("policy iteration did not terminate")


def facility_rule_policy(solution: PolicySolution, f_values) -> np.ndarray:
    """Charge/discharge rule on a facility grid, as action indices.

    Interior (indifferent) cells close at the facility level nearest to the
    system's fractional position.
    """
    f = np.asarray(f_values, float)
    grid = solution.grid
    frac = (solution.policy - grid.s_min) / grid.capacity if grid.capacity > 0 else 0.5
    interior = np.rint(frac * (f.size - 1)).astype(int)
    act = np.where(solution.regime == Regime.AT_MAX, f.size - 1,
                   np.where(solution.regime == Regime.AT_MIN, 0, interior))
    return np.broadcast_to(act, (f.size,) + act.shape).copy()


def unit_facility_profit(solution: PolicySolution, traj: Trajectory, capacity: float = 1.0):
    """Mean per-interval profit of a facility of ``capacity`` riding ``traj``."""
    hp = HedgePortfolio(solution, 0.0, capacity)
    s = 0.5 * capacity
    flows = np.empty(len(traj))
    for t, (S, L, P) in enumerate(zip(traj.opening.tolist(), traj.load.tolist(), traj.price.tolist())):
        s_plus = hp.optimal_closing(s, S, L)
        flows[t] = P * (s - s_plus)
        s = s_plus
    return float(flows.mean()), float(flows.std(ddof=1) / math.sqrt(flows.size))


def private_optimality_check(
    solution: PolicySolution,
    n_facility: int = 5,
    T: int = 100_000,
    seed: int = 0,
    n_random: int = 200,
    trajectory: Trajectory | None = None,
) -> PrivateOptimalityReport:
    """Check that the price-taker's rule is privately optimal and that its
    per-unit profit matches the social marginal benefit of storage.

    Optimality is checked three ways on a unit facility with ``n_facility``
    levels: against policy iteration started from a random policy, against every
    single-cell deviation (a policy-improvement certificate), and against
    ``n_random`` random stationary policies.  The profit comparison
    simulates a unit facility along a system trajectory.
    """
    if not 2 <= n_facility <= 7:
        raise ValueError("facility grid must have between 2 and 7 levels")
    f = np.linspace(0.0, 1.0, n_facility)
    mdp = _FacilityMDP(solution, f)
    rule = facility_rule_policy(solution, f)
    v_rule = mdp.evaluate(rule)
    rng = make_rng(seed)
    v_opt, _ = mdp.policy_iteration(rng.integers(0, n_facility, size=rule.shape))
    scale = max(1.0, float(np.max(np.abs(v_opt))))
    gap = float(np.max(v_opt - v_rule)) / scale

    q = mdp.q_values(v_rule)
    chosen = np.take_along_axis(q, rule[:, None], axis=1)[:, 0]
    deviation_gain = float(np.max(q.max(axis=1) - chosen)) / scale

    best_alt = -np.inf
    for _ in range(n_random):
        alt = rng.integers(0, n_facility, size=rule.shape)
        best_alt = max(best_alt, float(np.max(mdp.evaluate(alt) - v_rule)) / scale)

    traj = trajectory if trajectory is not None else simulate(solution, T, seed)
    profit, se = unit_facility_profit(solution, traj)
    x = stationary_distribution(transition_matrix(solution))
    return PrivateOptimalityReport(
        rule_value=v_rule,
        optimal_value=v_opt,
        best_alternative=best_alt,
        worst_deviation_gain=deviation_gain,
        relative_gap=max(gap, deviation_gain, best_alt, 0.0),
        marginal_profit=profit,
        marginal_profit_se=se,
        marginal_benefit=storage_marginal_benefit(solution, x),
    )
