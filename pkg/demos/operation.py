"""How a price-taking store runs a linear-price system.

Solves the storage policy for a store sized at 10% of the load range,
prints the charge/discharge bands at a few states of charge and shows
where the system spends its time.

    python demos/operation.py
"""

import numpy as np

from storage_screening import (
    Affine, LoadGrid, percent_to_capacity, price_duration_curve, solve_storage_case,
)
from storage_screening.policy import Regime, threshold_loads

loads = LoadGrid.uniform(0.0, 100.0, 101)
curve = Affine(20.0, 1.5)

for pct in (10, 50, 150):
    case = solve_storage_case(curve, loads, percent_to_capacity(pct, loads))
    sol = case.solution
    print(f"\n--- store = {pct}% of the load range ({case.capacity:g} MWh) ---")
    print(f"solved in {sol.iterations} iterations, residual {sol.residual:.1e}")

    # Below the lower threshold the store fills completely; above the upper
    # one it empties; in between it is indifferent and prices are pinned
    # to the discounted expected price of the next interval.
    l_fill, l_empty = threshold_loads(sol)

    def band(value):
        return "  never" if np.isnan(value) else f"{value:7.2f}"

    for i in (0, sol.grid.mid_index, sol.grid.n - 1):
        print(f"  S = {sol.grid.s_values[i]:6.2f}: fill below L ={band(l_fill[i])}, "
              f"empty above L ={band(l_empty[i])}, "
              f"{np.mean(sol.regime[i] == Regime.INTERIOR):.0%} of loads indifferent")

    x = case.stationary.mass
    pd = price_duration_curve(sol, case.stationary)
    print(f"  time at empty/full: {x[0]:.3f} / {x[-1]:.3f}")
    print(f"  mean price {pd.mean:.4f} (unchanged by storage), "
          f"price at 10%/90% duration: {pd.price_at(0.1):.2f} / {pd.price_at(0.9):.2f}")
    print(f"  marginal benefit of one more MWh: {case.marginal_benefit:.3f} $/h")
