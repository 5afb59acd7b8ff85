"""Thin wrapper around scipy's HiGHS solver.

Every exact linear program in the package goes through solve_lp, so the
solver choice and its error handling live in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


class LPError(RuntimeError):
    """The solver failed to return a proven optimum."""


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    objective: float


def solve_lp(c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, bounds=None) -> LPSolution:
    """Minimize c @ x subject to a_eq @ x == b_eq, a_ub @ x <= b_ub and bounds.

    bounds is an (n, 2) array of [lower, upper]; use np.inf for free
    uppers. Raises LPError unless HiGHS proves optimality.
    """
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise LPError(f"LP not solved to optimality (status {res.status}): {res.message}")
    return LPSolution(x=np.asarray(res.x), objective=float(res.fun))
