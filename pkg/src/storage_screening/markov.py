"""State-of-charge Markov chain induced by a storage policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

ROW_TOL = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    probs: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.probs, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("transition matrix must be row-stochastic")
        object.__setattr__(self, "probs", m)

    @property
    def n(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class StationaryDistribution:
    mass: np.ndarray
    residual: float
    iterations: int
    reducible: bool

    def expect(self, values) -> float:
        return float(self.mass @ np.asarray(values, dtype=float))


def split_onto_grid(points, s_values):
    """Two-point, mean-preserving allocation of ``points`` onto ``s_values``.

    Returns ``(lower_index, lower_weight)``; the remaining weight goes to
    ``lower_index + 1``.  Points on a node put all weight on that node.
    """
    points = np.asarray(points, dtype=float)
    if s_values.size == 1:
        return np.zeros(points.shape, dtype=int), np.ones(points.shape)
    k = np.clip(np.searchsorted(s_values, points, side="right") - 1, 0, s_values.size - 2)
    left, right = s_values[k], s_values[k + 1]
    w = np.clip((right - points) / (right - left), 0.0, 1.0)
    return k, w


def transition_matrix(solution) -> TransitionMatrix:
    """``M[s][t]``: probability that opening state ``s`` closes at ``t``."""
    s_values = solution.grid.s_values
    n = s_values.size
    k, w = split_onto_grid(solution.policy, s_values)
    lam = np.broadcast_to(solution.loads.probabilities, k.shape)
    rows = np.broadcast_to(np.arange(n)[:, None], k.shape)
    m = np.zeros((n, n))
    np.add.at(m, (rows, k), lam * w)
    if n > 1:
        np.add.at(m, (rows, np.minimum(k + 1, n - 1)), lam * (1.0 - w))
    m /= m.sum(axis=1, keepdims=True)
    return TransitionMatrix(m)


def is_reducible(m) -> bool:
    probs = m.probs if isinstance(m, TransitionMatrix) else np.asarray(m)
    n_comp, _ = connected_components(probs > 0, directed=True, connection="strong")
    return n_comp > 1


def stationary_distribution(m, tol: float = 1e-12, max_iter: int = 200) -> StationaryDistribution:
    """Stationary distribution by power iteration from the uniform vector.

    The iteration runs on the lazy kernel ``(I + M)/2``, which shares its
    fixed points with ``M`` but cannot cycle on periodic chains, and squares
    the kernel every step so ``k`` iterations advance ``2**k`` transitions.
    Convergence is judged on ``||xM - x||_1`` for the original ``M``.
    Reducible chains return the limit reached from the uniform start and
    are flagged rather than rejected.
    """
    probs = m.probs if isinstance(m, TransitionMatrix) else np.asarray(m, dtype=float)
    n = probs.shape[0]
    x = np.full(n, 1.0 / n)
    kernel = 0.5 * (np.eye(n) + probs)
    residual = float(np.abs(x @ probs - x).sum())
    it = 0
    while residual > tol:
        if it >= max_iter:
            raise RuntimeError(f"stationary distribution not reached, residual {residual:.3e}")
        x = x @ kernel
        x = np.maximum(x, 0.0)
        x /= x.sum()
        kernel = kernel @ kernel
        residual = float(np.abs(x @ probs - x).sum())
        it += 1
    return StationaryDistribution(x, residual, it, is_reducible(probs))


def stationary_recursive_solve(g, discount: float, x) -> float:
    """Stationary mean of ``f`` solving ``f = g + discount * M f``.

    Averaging the recursion under a stationary ``x`` gives
    ``E_x[f] = E_x[g] / (1 - discount)`` without solving for ``f``.
    """
    if not 0 < discount < 1:
        raise ValueError("discount must lie strictly between 0 and 1")
    mass = x.mass if isinstance(x, StationaryDistribution) else np.asarray(x, dtype=float)
    return float(mass @ np.asarray(g, dtype=float)) / (1.0 - discount)
