"""Rental market clearing over fitted savings curves.

At a rental price r every household maximizes its savings net of rent;
owners keep the capacity they value above r and rent out the rest,
non-owners rent capacity they value above r. Both problems share the
same maximizer, so a single per-curve argmax drives both sides. The
excess supply

    E(r) = sum_owners (y_bar - y*(r)) - sum_non_owners y*(r)

is a nondecreasing step function of r whose jumps sit exactly at the
curves' segment slopes. Clearing therefore searches the sorted slope
values for the zero crossing:

  * if E is zero on a whole price interval, the clearing price is the
    interval midpoint (symmetric surplus split) and allocations are the
    unique maximizers there;
  * if E jumps across zero at a slope value, that value clears the
    market and the households indifferent there are rationed
    proportionally: each trades the same fraction of its indifference
    span, which balances supply and demand exactly.

Both rules are documented conventions for degenerate ties; away from
ties the equilibrium is the unique supply-equals-demand point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .curves import SavingsCurve
from .model import DomainError

PARTICIPATION_TOL = 1e-9


@dataclass(frozen=True)
class MarketEquilibrium:
    """Clearing outcome for a fixed owner set.

    clearing_price is None when one market side is empty (degenerate:
    no trade, zero volume). allocations map every household to the
    capacity it ends up using; surpluses are the gains over the
    no-market outcome (own-use for owners, nothing for non-owners).
    """

    clearing_price: float | None
    volume: float
    allocations: dict[str, float]
    surpluses: dict[str, float]
    owner_ids: frozenset[str]
    owner_surplus_total: float
    renter_surplus_total: float
    total_surplus: float
    owner_participation: float
    non_owner_participation: float
    total_participation: float
    residual: float  # supply minus demand at the clearing price
    degenerate: bool = False


def _owner_set(curves: Mapping[str, SavingsCurve], owners: Iterable[str]) -> frozenset[str]:
    owner_ids = frozenset(owners)
    unknown = owner_ids - set(curves)
    if unknown:
        raise DomainError(f"owner ids without curves: {sorted(unknown)[:3]}")
    return owner_ids


def aggregate_demand(curves: Mapping[str, SavingsCurve], owners: Iterable[str], r: float) -> float:
    """Total capacity non-owners want to rent at price r."""
    owner_ids = _owner_set(curves, owners)
    return float(sum(curves[hid].inverse_marginal(r)
                     for hid in sorted(curves) if hid not in owner_ids))


def aggregate_supply(curves: Mapping[str, SavingsCurve], owners: Iterable[str], r: float) -> float:
    """Total capacity owners offer for rent at price r."""
    owner_ids = _owner_set(curves, owners)
    return float(sum(curves[hid].max_size - curves[hid].inverse_marginal(r)
                     for hid in sorted(owner_ids)))


def _excess_bounds(ids, curves, owner_ids, r: float):
    """(E_low, E_high, intervals): excess supply using the largest and the
    smallest maximizer for every household, plus each argmax interval."""
    e_low = 0.0
    e_high = 0.0
    intervals = {}
    for hid in ids:
        lo, hi = curves[hid].argmax_interval(r)
        intervals[hid] = (lo, hi)
        if hid in owner_ids:
            e_low += curves[hid].max_size - hi
            e_high += curves[hid].max_size - lo
        else:
            e_low -= hi
            e_high -= lo
    return e_low, e_high, intervals


def _degenerate(ids, curves, owner_ids) -> MarketEquilibrium:
    allocations = {hid: (curves[hid].max_size if hid in owner_ids else 0.0) for hid in ids}
    return MarketEquilibrium(
        clearing_price=None, volume=0.0, allocations=allocations,
        surpluses={hid: 0.0 for hid in ids}, owner_ids=owner_ids,
        owner_surplus_total=0.0, renter_surplus_total=0.0, total_surplus=0.0,
        owner_participation=0.0, non_owner_participation=0.0, total_participation=0.0,
        residual=0.0, degenerate=True)


def clear_market(curves: Mapping[str, SavingsCurve], owners: Iterable[str]) -> MarketEquilibrium:
    """Find the price equating rental supply and demand and allocate.

    Degenerate owner sets (empty, or everyone) yield a no-trade
    equilibrium with clearing_price None rather than an error.
    """
    ids = sorted(curves)
    owner_ids = _owner_set(curves, owners)
    if not owner_ids or len(owner_ids) == len(ids):
        return _degenerate(ids, curves, owner_ids)

    total_size = sum(curves[hid].max_size for hid in ids)
    tol = max(1e-6, 1e-9 * total_size)

    # candidate prices: every segment slope of every curve
    breakpoints = np.unique(np.concatenate([curves[hid].slopes for hid in ids]))

    def e_high(r):
        return _excess_bounds(ids, curves, owner_ids, r)[1]

    def e_low(r):
        return _excess_bounds(ids, curves, owner_ids, r)[0]

    # smallest breakpoint where the optimistic excess turns nonnegative
    lo_i, hi_i = 0, breakpoints.size - 1
    if e_high(breakpoints[lo_i]) >= 0:
        r_a = breakpoints[lo_i]
    else:
        while hi_i - lo_i > 1:  # invariant: e_high(lo) < 0 <= e_high(hi)
            mid = (lo_i + hi_i) // 2
            if e_high(breakpoints[mid]) >= 0:
                hi_i = mid
            else:
                lo_i = mid
        r_a = breakpoints[hi_i]

    # largest breakpoint where the pessimistic excess is still nonpositive
    lo_i, hi_i = 0, breakpoints.size - 1
    if e_low(breakpoints[hi_i]) <= 0:
        r_b = breakpoints[hi_i]
    else:
        while hi_i - lo_i > 1:  # invariant: e_low(lo) <= 0 < e_low(hi)
            mid = (lo_i + hi_i) // 2
            if e_low(breakpoints[mid]) <= 0:
                lo_i = mid
            else:
                hi_i = mid
        r_b = breakpoints[lo_i]

    if r_a > r_b:
        raise AssertionError(f"clearing interval is empty: [{r_a}, {r_b}]")

    price = 0.5 * (r_a + r_b)
    e_lo, e_hi, intervals = _excess_bounds(ids, curves, owner_ids, price)
    allocations = {}
    if e_hi - e_lo > 0 and e_lo < 0:
        # jump straddling zero: ration the indifferent households
        ratio = min(1.0, -e_lo / (e_hi - e_lo))
        for hid in ids:
            lo, hi = intervals[hid]
            allocations[hid] = hi - ratio * (hi - lo)
    else:
        for hid in ids:
            allocations[hid] = intervals[hid][1]

    supply = sum(curves[hid].max_size - allocations[hid] for hid in ids if hid in owner_ids)
    demand = sum(allocations[hid] for hid in ids if hid not in owner_ids)
    residual = supply - demand
    if abs(residual) > tol:
        raise AssertionError(f"market failed to balance: residual {residual} > {tol}")

    surpluses = {}
    owner_total = 0.0
    renter_total = 0.0
    n_owner_part = 0
    n_renter_part = 0
    for hid in ids:
        c = curves[hid]
        y = allocations[hid]
        if hid in owner_ids:
            w = c.eval(y) + price * (c.max_size - y) - c.total
            owner_total += w
            if c.max_size - y > PARTICIPATION_TOL * max(c.max_size, 1.0):
                n_owner_part += 1
        else:
            w = c.eval(y) - price * y
            renter_total += w
            if y > PARTICIPATION_TOL * max(c.max_size, 1.0):
                n_renter_part += 1
        surpluses[hid] = w

    n_owners = len(owner_ids)
    n_renters = len(ids) - n_owners
    return MarketEquilibrium(
        clearing_price=float(price),
        volume=float(supply),
        allocations=allocations,
        surpluses=surpluses,
        owner_ids=owner_ids,
        owner_surplus_total=float(owner_total),
        renter_surplus_total=float(renter_total),
        total_surplus=float(owner_total + renter_total),
        owner_participation=n_owner_part / n_owners,
        non_owner_participation=n_renter_part / n_renters,
        total_participation=(n_owner_part + n_renter_part) / len(ids),
        residual=float(residual),
    )
