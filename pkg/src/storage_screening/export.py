"""CSV and key/value text emitters.

Every writer returns the file body as a string so callers can assemble a
whole run in memory and only touch the disk once it has succeeded.
Numbers are written with ``%.12g`` so identical inputs give identical
bytes.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .hedging import SettlementRow
from .investment import price_duration_curve
from .policy import PolicySolution

PER_STATE_HEADER = ("Load", "PSmin", "EPSmin", "PSmid", "EPSmid", "PSmax", "EPSmax")
POLICY_HEADER = ("S", "L", "Splus", "P", "dEP", "regime")
STATIONARY_HEADER = ("s", "xs")
PD_HEADER = ("prob", "price")
SWEEP_HEADER = ("k_s", "mb")
TRAJECTORY_HEADER = ("t", "S", "L", "Splus", "P", "pi")
RESIDUAL_HEADER = ("iteration", "residual")


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".12g")


def write_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_report(items: dict) -> str:
    lines = []
    for key, value in items.items():
        text = value if isinstance(value, str) else fmt(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def per_state_csv(sol: PolicySolution) -> str:
    """Price and discounted expected next price against load duration, for
    the empty, half-full and full opening states.  Rows run from the
    highest load (duration near 0) to the lowest (duration 1)."""
    grid = sol.grid
    rows_idx = (0, grid.mid_index, grid.n - 1)
    dep = sol.discounted_ep_next
    duration = sol.loads.durations()
    order = np.argsort(-sol.loads.values)
    rows = []
    for j in order:
        row = [duration[j]]
        for i in rows_idx:
            row += [sol.prices[i, j], dep[i, j]]
        rows.append(row)
    return write_csv(PER_STATE_HEADER, rows)


def policy_csv(sol: PolicySolution) -> str:
    rows = []
    dep = sol.discounted_ep_next
    for i, S in enumerate(sol.grid.s_values):
        for j, L in enumerate(sol.loads.values):
            rows.append((S, L, sol.policy[i, j], sol.prices[i, j], dep[i, j], int(sol.regime[i, j])))
    return write_csv(POLICY_HEADER, rows)


def stationary_csv(sol: PolicySolution, x) -> str:
    """State of charge as a percent of capacity against stationary mass."""
    grid = sol.grid
    pct = (grid.s_values - grid.s_min) / grid.capacity * 100.0 if grid.capacity > 0 else [0.0]
    return write_csv(STATIONARY_HEADER, zip(pct, x.mass))


def pd_csv(sol: PolicySolution, x) -> str:
    pdc = price_duration_curve(sol, x)
    return write_csv(PD_HEADER, zip(pdc.durations, pdc.prices))


def sweep_csv(pcts, mbs) -> str:
    return write_csv(SWEEP_HEADER, zip(pcts, mbs))


def settlement_csv(rows: list[SettlementRow]) -> str:
    return write_csv(SettlementRow.FIELDS, (r.values() for r in rows))


def trajectory_csv(traj) -> str:
    return write_csv(TRAJECTORY_HEADER, traj.rows())


def residual_csv(history) -> str:
    return write_csv(RESIDUAL_HEADER, enumerate(history, start=1))
