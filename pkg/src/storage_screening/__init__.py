"""Operation of, investment in, and hedging of volume-limited storage in a
power market with i.i.d. load."""

from .hedging import (
    EpBounds,
    HedgePortfolio,
    SettlementRow,
    cap_payoff,
    collar_only_residual,
    decomposed_hedge_payoff,
    floor_payoff,
    perfect_hedge_payoff,
    settlement_row,
    settlement_table,
)
from .investment import (
    PriceDurationCurve,
    capacity_report,
    generation_margin,
    marginal_benefit_curve,
    optimal_storage_capacity,
    percent_to_capacity,
    price_duration_curve,
    solve_storage_case,
    storage_marginal_benefit,
)
from .market import (
    Affine,
    GenerationTech,
    LoadGrid,
    MeritOrder,
    TechSet,
    dispatch_cost,
    generator_optimal_output,
    inverse_price,
    price,
    screening_capacities,
)
from .markov import (
    StationaryDistribution,
    TransitionMatrix,
    stationary_distribution,
    stationary_recursive_solve,
    transition_matrix,
)
from .montecarlo import Trajectory, private_optimality_check, simulate
from .policy import (
    ConvergenceError,
    PolicySolution,
    Regime,
    StorageGrid,
    complementarity_gap,
    expected_next_price,
    policy_update,
    price_field,
    solve_policy,
    threshold_loads,
)

__version__ = "0.1.0"
