"""Screening-curve investment with and without storage.

Builds the three-technology system at its least-cost capacities, then
traces how the marginal value of storage falls as the store grows and
where it meets the storage fixed cost.

    python demos/investment.py
"""

from storage_screening import (
    GenerationTech, LoadGrid, MeritOrder, TechSet, generation_margin,
    optimal_storage_capacity, percent_to_capacity, screening_capacities, solve_storage_case,
)

loads = LoadGrid.uniform(0.0, 100.0, 101)
techs = TechSet(
    [GenerationTech("L", 50, 185), GenerationTech("M", 100, 150), GenerationTech("H", 300, 70)],
    voll=1000,
)
screened = screening_capacities(techs, loads)
print("least-cost capacities (MW):",
      {t.name: round(float(k), 2) for t, k in zip(screened.techs, screened.capacities)})
curve = MeritOrder(screened)

print("\nstore %   MB $/h   peaker margin   baseload margin")
for pct in (0, 2, 10, 20, 50):
    case = solve_storage_case(curve, loads, percent_to_capacity(pct, loads))
    sol, x = case.solution, case.stationary
    print(f"{pct:7g} {case.marginal_benefit:8.2f} {generation_margin(300, sol, x):15.2f} "
          f"{generation_margin(50, sol, x):17.2f}")

for f_s in (30.0, 25.0):
    res = optimal_storage_capacity(curve, loads, f_s, capacity_tol=1.0)
    print(f"\nstorage fixed cost {f_s:g} $/MWh/h -> build {res.capacity:.1f} MWh "
          f"({res.capacity / loads.span:.1%} of the load range), {len(res.probes)} solves")
