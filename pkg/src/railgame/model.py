"""Physical line description, operator economics, and the players' utilities.

Everything here is a pure function of immutable parameter records, so values
can be shared freely across threads and re-evaluated cheaply inside grid
oracles (all formula helpers accept scalars or numpy arrays).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SECONDS_PER_HOUR = 3600.0

# Comparison slack for feasibility bounds: optima may legitimately sit exactly
# on a bound after projection or load-factor repair.
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class LineConfig:
    """Physical description of one unidirectional line.

    stations          number of stations, origin to terminus
    carriages         carriages per train
    carriage_capacity passengers per carriage
    travel_time_h     one-way travel time (hours)
    operating_hours_h daily operating time (hours)
    headway_min_s     minimum gap between departures (seconds)
    headway_max_s     maximum gap between departures (seconds)
    """

    stations: int
    carriages: int
    carriage_capacity: int
    travel_time_h: float
    operating_hours_h: float
    headway_min_s: float
    headway_max_s: float

    def __post_init__(self):
        if self.stations < 2:
            raise ValueError("line needs at least 2 stations")
        if self.carriages < 1 or self.carriage_capacity < 1:
            raise ValueError("train capacity must be positive")
        if not 0 < self.headway_min_s < self.headway_max_s:
            raise ValueError("need 0 < headway_min_s < headway_max_s")
        if self.travel_time_h <= 0 or self.operating_hours_h <= 0:
            raise ValueError("travel and operating times must be positive")

    @property
    def train_capacity(self) -> int:
        return self.carriages * self.carriage_capacity


@dataclass(frozen=True)
class EconomicParams:
    """Operator cost/income parameters plus the passengers' utility shape.

    Monetary values are in scenario currency; fares are in abstract fare
    units and only converted to currency (via ``fare_conversion``) when
    reported.
    """

    energy_per_trip: float          # currency per one-way trip
    hourly_wage: float              # currency per hour of staffing
    period_hours: float             # duration of the studied period (hours)
    fare_elasticity: float          # demand lost per fare unit
    frequency_attraction: float     # demand gained per train/hour (hours)
    min_load_factor: float          # lowest acceptable load factor
    utility_curvature: float        # concavity of the passengers' utility
    maintenance_per_train_day: float = 0.0   # currency per train per day
    depreciation_per_trip_pair: float = 0.0  # currency per out-and-back trip
    max_fare: float = 100.0         # largest fare passengers will consider
    fare_conversion: float = 1.0    # currency per fare unit in reports

    def __post_init__(self):
        if self.utility_curvature <= 0:
            raise ValueError("utility_curvature must be positive")
        if self.fare_elasticity < 0 or self.frequency_attraction < 0:
            raise ValueError("elasticity factors must be non-negative")
        if not 0 < self.min_load_factor < 1:
            raise ValueError("min_load_factor must be in (0, 1)")
        if self.max_fare <= 0:
            raise ValueError("max_fare must be positive")
        for name in ("energy_per_trip", "hourly_wage", "period_hours",
                     "maintenance_per_train_day", "depreciation_per_trip_pair"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class FrequencyBounds:
    """Allowed departure-frequency interval, trains per hour."""

    f_min: float
    f_max: float

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max")

    def contains(self, f: float, tol: float = BOUNDARY_TOL) -> bool:
        return self.f_min - tol <= f <= self.f_max + tol


def frequency_bounds(line: LineConfig) -> FrequencyBounds:
    """Derive the frequency interval from the line's headway limits."""
    return FrequencyBounds(
        f_min=SECONDS_PER_HOUR / line.headway_max_s,
        f_max=SECONDS_PER_HOUR / line.headway_min_s,
    )


def demand_multiplier(c, f, params: EconomicParams):
    """Linear demand response 1 - e_c*c + e_f*f (may be negative; see callers)."""
    return 1.0 - params.fare_elasticity * c + params.frequency_attraction * f


def actual_traffic(Q, c, f, params: EconomicParams):
    """Traffic actually served at fare c and frequency f, clamped at zero.

    The linear response can go negative for very high fares; negative demand
    is meaningless, so it is floored at zero.  The solver flags the clamp
    when it binds.
    """
    return np.maximum(0.0, Q * demand_multiplier(c, f, params))


def income(Q, c, f, params: EconomicParams):
    """Fare revenue: fare times the traffic actually served."""
    return c * actual_traffic(Q, c, f, params)


def cost_coefficient(line: LineConfig, params: EconomicParams) -> float:
    """Marginal cost of one extra dispatch per hour over the studied period.

    Bundles energy for the period plus the round-trip share of depreciation,
    wages, and daily maintenance prorated by operating time.
    """
    T = params.period_hours
    per_round_trip = (
        params.depreciation_per_trip_pair
        + params.hourly_wage * T
        + params.maintenance_per_train_day * T / line.operating_hours_h
    )
    return params.energy_per_trip * T + 2.0 * line.travel_time_h * per_round_trip


def operation_cost(f, B):
    """Variable operating cost at frequency f; linear with coefficient B."""
    return B * f


def operator_utility(Q, c, f, B, params: EconomicParams):
    """Operator's net benefit: fare revenue minus variable operating cost."""
    return income(Q, c, f, params) - operation_cost(f, B)


def passenger_utility(c, f, curvature):
    """Passengers' benefit c*f - curvature*c**2, concave in the fare."""
    return c * f - curvature * np.square(c)


def load_factor(q_prime, f, line: LineConfig, period_hours: float):
    """Served traffic divided by seat-capacity offered during the period.

    Capacity is frequency x period x train capacity, so the ratio is
    dimensionless regardless of the period length.
    """
    if np.any(np.asarray(f) < 0):
        raise ValueError("frequency must be non-negative")
    return q_prime / (f * period_hours * line.train_capacity)


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of checking the load-factor band and frequency bounds."""

    violations: tuple[str, ...]

    @property
    def feasible(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "violations": list(self.violations)}


def feasibility_check(theta: float, f: float, params: EconomicParams,
                      bounds: FrequencyBounds) -> FeasibilityReport:
    """Report which operating constraints (if any) the point (theta, f) breaks.

    Bounds are treated as closed up to a 1e-9 slack: repaired optima sit
    exactly on a boundary and must still count as feasible.
    """
    violations = []
    if theta < params.min_load_factor - BOUNDARY_TOL:
        violations.append(
            f"load factor below minimum ({theta:.6g} < {params.min_load_factor:.6g})")
    if theta > 1.0 + BOUNDARY_TOL:
        violations.append(f"load factor above capacity ({theta:.6g} > 1)")
    if f < bounds.f_min - BOUNDARY_TOL:
        violations.append(f"frequency below minimum ({f:.6g} < {bounds.f_min:.6g})")
    if f > bounds.f_max + BOUNDARY_TOL:
        violations.append(f"frequency above maximum ({f:.6g} > {bounds.f_max:.6g})")
    return FeasibilityReport(violations=tuple(violations))
