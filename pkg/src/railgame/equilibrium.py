"""Leader-follower solution of the frequency/fare game.

The operator (leader) commits to a departure frequency; passengers (the
follower) answer with the fare they are willing to pay.  Backward induction
substitutes the follower's best response into the operator's objective, which
becomes piecewise quadratic in the frequency: a quadratic arc while the fare
response is unclamped, linear once the fare cap binds.  The solver maximizes
exactly over that structure (vertex plus kink and boundary candidates), then
restores the load-factor band by shrinking the frequency interval if needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DegenerateDemandError, InfeasibleScenarioError
from .model import (
    EconomicParams,
    FeasibilityReport,
    FrequencyBounds,
    LineConfig,
    actual_traffic,
    cost_coefficient,
    demand_multiplier,
    feasibility_check,
    frequency_bounds,
    load_factor,
    operator_utility,
    passenger_utility,
)

# Deviation gains below this relative size count as zero in equilibrium checks.
EQUILIBRIUM_TOL = 1e-6

# Root refinement tolerance for the load-factor boundary search.
REPAIR_XTOL = 1e-8

_VALUE_TIE_TOL = 1e-9


def best_response_fare(f, curvature, max_fare):
    """Follower's optimal fare for a given frequency: f/(2*curvature), capped.

    This is the argmax of the concave passenger utility c*f - curvature*c^2
    over [0, max_fare]; works elementwise on arrays.
    """
    return np.minimum(f / (2.0 * curvature), max_fare)


def leader_objective(f, Q, B, params: EconomicParams):
    """Operator utility at frequency f with the follower already responding."""
    c = best_response_fare(f, params.utility_curvature, params.max_fare)
    return operator_utility(Q, c, f, B, params)


def quadratic_coefficients(Q, B, params: EconomicParams) -> tuple[float, float]:
    """(a1, a2) of the unclamped-branch objective a1*f + a2*f^2.

    a2's sign decides concavity: negative iff the fare elasticity outweighs
    the frequency attraction (e_c > 2*curvature*e_f).
    """
    alpha = params.utility_curvature
    a1 = Q / (2.0 * alpha) - B
    a2 = Q * (params.frequency_attraction / (2.0 * alpha)
              - params.fare_elasticity / (4.0 * alpha * alpha))
    return a1, a2


class LeaderSolution(NamedTuple):
    f_star: float
    regime: str
    leader_concave: bool


def _segment_candidates(Q, B, params, lo, hi, bounds):
    """Candidate maximizers of the leader objective on one frequency segment.

    The objective is quadratic below the fare-cap kink 2*curvature*max_fare
    and linear above it, so the maximum is at a segment endpoint, the kink,
    or (concave case) the quadratic's vertex.
    """
    def endpoint_label(f):
        if f == bounds.f_min:
            return "boundary-low"
        if f == bounds.f_max:
            return "boundary-high"
        return "boundary-theta"

    candidates = [(lo, endpoint_label(lo)), (hi, endpoint_label(hi))]
    f_break = 2.0 * params.utility_curvature * params.max_fare
    if lo < f_break < hi:
        candidates.append((f_break, "boundary-clamp"))
    a1, a2 = quadratic_coefficients(Q, B, params)
    if a2 < 0:
        vertex = -a1 / (2.0 * a2)
        if lo < vertex < hi and vertex <= f_break:
            candidates.append((vertex, "interior"))
    return candidates


def _argmax_candidates(Q, B, params, candidates) -> tuple[float, str]:
    """Pick the best candidate; near-ties resolve to the smallest frequency."""
    seen: dict[float, str] = {}
    for f, label in candidates:
        seen.setdefault(f, label)
    values = {f: float(leader_objective(f, Q, B, params)) for f in seen}
    best = max(values.values())
    slack = _VALUE_TIE_TOL * max(1.0, abs(best))
    f_star = min(f for f, v in values.items() if v >= best - slack)
    return f_star, seen[f_star]


def closed_form_frequency(Q: float, B: float, params: EconomicParams,
                          bounds: FrequencyBounds) -> LeaderSolution:
    """Exact maximizer of the leader objective over [f_min, f_max].

    Ignores the load-factor band (see :func:`solve_stackelberg` for the
    repaired version).  ``regime`` tells where the optimum sits: ``interior``
    (first-order condition holds), ``boundary-low``/``boundary-high`` (a
    frequency bound), or ``boundary-clamp`` (the fare-cap kink).
    """
    if Q <= 0:
        raise DegenerateDemandError("total traffic must be positive to optimize frequency")
    _, a2 = quadratic_coefficients(Q, B, params)
    candidates = _segment_candidates(Q, B, params, bounds.f_min, bounds.f_max, bounds)
    f_star, regime = _argmax_candidates(Q, B, params, candidates)
    return LeaderSolution(f_star=f_star, regime=regime, leader_concave=bool(a2 < 0))


def _theta(f, Q, params, line):
    c = best_response_fare(f, params.utility_curvature, params.max_fare)
    q_prime = actual_traffic(Q, c, f, params)
    return load_factor(q_prime, f, line, params.period_hours)


def theta_feasible_intervals(Q: float, params: EconomicParams, line: LineConfig,
                             bounds: FrequencyBounds,
                             scan_points: int = 2049) -> list[tuple[float, float]]:
    """Frequency sub-intervals of [f_min, f_max] keeping the load factor in band.

    The band edges theta(f) = theta_min and theta(f) = 1 are located by a
    sign-change scan refined with Brent's method (xtol 1e-8); the result is a
    list of closed feasible intervals (possibly empty).
    """
    grid = np.linspace(bounds.f_min, bounds.f_max, scan_points)
    theta_g = _theta(grid, Q, params, line)

    cuts = {bounds.f_min, bounds.f_max}
    for level in (params.min_load_factor, 1.0):
        g = theta_g - level
        sign_flip = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
        for k in sign_flip:
            root = brentq(lambda f: float(_theta(f, Q, params, line)) - level,
                          float(grid[k]), float(grid[k + 1]), xtol=REPAIR_XTOL)
            cuts.add(float(root))
        cuts.update(float(grid[k]) for k in np.nonzero(g == 0.0)[0])

    edges = sorted(cuts)
    intervals: list[tuple[float, float]] = []
    for lo, hi in zip(edges, edges[1:]):
        mid = 0.5 * (lo + hi)
        theta_mid = float(_theta(mid, Q, params, line))
        if params.min_load_factor - REPAIR_XTOL <= theta_mid <= 1.0 + REPAIR_XTOL:
            if intervals and intervals[-1][1] == lo:
                intervals[-1] = (intervals[-1][0], hi)
            else:
                intervals.append((lo, hi))
    return intervals


@dataclass(frozen=True)
class EquilibriumResult:
    """Solved game point with diagnostics.

    ``regime`` is one of interior, boundary-low, boundary-high,
    boundary-clamp (fare cap kink), boundary-theta (load-factor repair
    boundary); ``iterations`` is 0 for the closed-form solver.
    """

    f_star: float
    c_star: float
    leader_utility: float
    follower_utility: float
    traffic_served: float
    load_factor: float
    regime: str
    leader_concave: bool
    iterations: int
    feasibility: FeasibilityReport
    load_repaired: bool
    B: float
    f_min: float
    f_max: float
    train_capacity: float
    period_hours: float
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "f_star": self.f_star,
            "c_star": self.c_star,
            "leader_utility": self.leader_utility,
            "follower_utility": self.follower_utility,
            "traffic_served": self.traffic_served,
            "load_factor": self.load_factor,
            "regime": self.regime,
            "leader_concave": self.leader_concave,
            "iterations": self.iterations,
            "feasible": self.feasibility.feasible,
            "violations": list(self.feasibility.violations),
            "load_repaired": self.load_repaired,
            "B": self.B,
            "f_min": self.f_min,
            "f_max": self.f_max,
            "train_capacity": self.train_capacity,
            "period_hours": self.period_hours,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EquilibriumResult":
        return cls(
            f_star=data["f_star"],
            c_star=data["c_star"],
            leader_utility=data["leader_utility"],
            follower_utility=data["follower_utility"],
            traffic_served=data["traffic_served"],
            load_factor=data["load_factor"],
            regime=data["regime"],
            leader_concave=data["leader_concave"],
            iterations=data["iterations"],
            feasibility=FeasibilityReport(violations=tuple(data["violations"])),
            load_repaired=data["load_repaired"],
            B=data["B"],
            f_min=data["f_min"],
            f_max=data["f_max"],
            train_capacity=data["train_capacity"],
            period_hours=data["period_hours"],
            warnings=tuple(data.get("warnings", ())),
        )


def _assemble_result(f_star: float, regime: str, concave: bool, Q: float, B: float,
                     params: EconomicParams, line: LineConfig, bounds: FrequencyBounds,
                     repaired: bool, iterations: int) -> EquilibriumResult:
    c_star = float(best_response_fare(f_star, params.utility_curvature, params.max_fare))
    q_prime = float(actual_traffic(Q, c_star, f_star, params))
    theta = float(load_factor(q_prime, f_star, line, params.period_hours))
    u_l = float(operator_utility(Q, c_star, f_star, B, params))
    u_f = float(passenger_utility(c_star, f_star, params.utility_curvature))
    report = feasibility_check(theta, f_star, params, bounds)

    warnings = []
    if repaired:
        warnings.append("load-factor repair applied: frequency restricted to the feasible band")
    if demand_multiplier(c_star, f_star, params) < 0:
        warnings.append("demand response clamped to zero at the optimum")
    if u_l <= 0:
        warnings.append("operator utility non-positive at the optimum")

    return EquilibriumResult(
        f_star=f_star, c_star=c_star, leader_utility=u_l, follower_utility=u_f,
        traffic_served=q_prime, load_factor=theta, regime=regime,
        leader_concave=concave, iterations=iterations, feasibility=report,
        load_repaired=repaired, B=B, f_min=bounds.f_min, f_max=bounds.f_max,
        train_capacity=float(line.train_capacity), period_hours=params.period_hours,
        warnings=tuple(warnings),
    )


def _optimal_frequency(Q: float, B: float, params: EconomicParams, line: LineConfig,
                       bounds: FrequencyBounds) -> tuple[float, str, bool, bool]:
    """Leader optimum honoring the load-factor band; returns (f, regime, concave, repaired)."""
    solution = closed_form_frequency(Q, B, params, bounds)
    theta = float(_theta(solution.f_star, Q, params, line))
    report = feasibility_check(theta, solution.f_star, params, bounds)
    if report.feasible:
        return solution.f_star, solution.regime, solution.leader_concave, False

    intervals = theta_feasible_intervals(Q, params, line, bounds)
    if not intervals:
        raise InfeasibleScenarioError(
            f"no frequency in [{bounds.f_min:g}, {bounds.f_max:g}] keeps the load factor "
            f"within ({params.min_load_factor:g}, 1); at the unconstrained optimum "
            f"f={solution.f_star:g}: {'; '.join(report.violations)}",
            report=report)
    candidates = []
    for lo, hi in intervals:
        candidates.extend(_segment_candidates(Q, B, params, lo, hi, bounds))
    f_star, regime = _argmax_candidates(Q, B, params, candidates)
    return f_star, regime, solution.leader_concave, True


def solve_stackelberg(Q: float, line: LineConfig, params: EconomicParams,
                      B: float | None = None) -> EquilibriumResult:
    """Solve the game by backward induction for total traffic Q.

    ``B`` overrides the marginal dispatch cost; by default it is derived from
    the line and cost parameters.  Raises
    :class:`~railgame.errors.InfeasibleScenarioError` when no frequency keeps
    the load factor in band, and
    :class:`~railgame.errors.DegenerateDemandError` for Q <= 0.
    """
    bounds = frequency_bounds(line)
    if B is None:
        B = cost_coefficient(line, params)
    f_star, regime, concave, repaired = _optimal_frequency(Q, B, params, line, bounds)
    return _assemble_result(f_star, regime, concave, Q, B, params, line, bounds,
                            repaired, iterations=0)


def iterative_play(Q: float, line: LineConfig, params: EconomicParams, f_init: float,
                   max_iters: int = 50, tol: float = 1e-9,
                   B: float | None = None) -> EquilibriumResult:
    """Play the game as an explicit adjustment loop from a starting frequency.

    Each round the follower responds to the posted frequency and the leader
    re-optimizes against the response map; the loop stops when the posted
    frequency moves by less than ``tol``.  Because the leader step is exact
    the loop settles after at most two rounds, but the trajectory is recorded
    and a :class:`~railgame.errors.ConvergenceError` carries it if
    ``max_iters`` is exhausted.
    """
    bounds = frequency_bounds(line)
    if B is None:
        B = cost_coefficient(line, params)
    if not bounds.contains(f_init):
        raise ValueError(
            f"f_init={f_init:g} outside bounds [{bounds.f_min:g}, {bounds.f_max:g}]")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")

    if Q <= 0:
        raise DegenerateDemandError("total traffic must be positive to optimize frequency")

    trajectory = [float(f_init)]
    regime = concave = repaired = None
    for iteration in range(1, max_iters + 1):
        # Follower's reply to the currently posted frequency ...
        best_response_fare(trajectory[-1], params.utility_curvature, params.max_fare)
        # ... which the leader anticipates over the whole response map.
        f_next, regime, concave, repaired = _optimal_frequency(Q, B, params, line, bounds)
        moved = abs(f_next - trajectory[-1])
        trajectory.append(f_next)
        if moved < tol:
            return _assemble_result(f_next, regime, concave, Q, B, params, line,
                                    bounds, repaired, iterations=iteration)
    raise ConvergenceError(
        f"no fixed point after {max_iters} iterations (last step moved "
        f"{abs(trajectory[-1] - trajectory[-2]):g})", trajectory=trajectory)


@dataclass(frozen=True)
class DeviationReport:
    """Grid check of the equilibrium conditions.

    ``leader_max_gain`` is the best improvement any feasible unilateral
    frequency deviation (with the follower re-responding) would earn the
    operator; ``follower_max_gain`` likewise for fare deviations at the
    equilibrium frequency.  Both should be zero up to tolerance.
    """

    leader_max_gain: float
    follower_max_gain: float
    leader_best_f: float
    follower_best_c: float
    grid_n: int
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "leader_max_gain": self.leader_max_gain,
            "follower_max_gain": self.follower_max_gain,
            "leader_best_f": self.leader_best_f,
            "follower_best_c": self.follower_best_c,
            "grid_n": self.grid_n,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def verify_equilibrium(result: EquilibriumResult, Q: float, params: EconomicParams,
                       grid_n: int = 10001,
                       tolerance: float = EQUILIBRIUM_TOL) -> DeviationReport:
    """Check that no unilateral deviation on a grid beats the solved point.

    Leader deviations range over a ``grid_n``-point frequency grid restricted
    to the load-factor-feasible set; follower deviations range over a fare
    grid on [0, max_fare] at the solved frequency.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    alpha = params.utility_curvature

    f_grid = np.linspace(result.f_min, result.f_max, grid_n)
    c_resp = best_response_fare(f_grid, alpha, params.max_fare)
    q_prime = np.maximum(0.0, Q * demand_multiplier(c_resp, f_grid, params))
    u_l = c_resp * q_prime - result.B * f_grid
    theta = q_prime / (f_grid * result.period_hours * result.train_capacity)
    feasible = (theta >= params.min_load_factor - REPAIR_XTOL) & (theta <= 1.0 + REPAIR_XTOL)
    if not np.any(feasible):
        feasible = np.ones_like(feasible)  # degenerate scenario: compare unconstrained
    gains_l = u_l[feasible] - result.leader_utility
    k_l = int(np.argmax(gains_l))
    leader_gain = float(gains_l[k_l])
    leader_best_f = float(f_grid[feasible][k_l])

    c_grid = np.linspace(0.0, params.max_fare, grid_n)
    u_f = passenger_utility(c_grid, result.f_star, alpha)
    gains_f = u_f - result.follower_utility
    k_f = int(np.argmax(gains_f))
    follower_gain = float(gains_f[k_f])
    follower_best_c = float(c_grid[k_f])

    passed = (leader_gain <= tolerance * max(1.0, abs(result.leader_utility))
              and follower_gain <= tolerance * max(1.0, abs(result.follower_utility)))
    return DeviationReport(
        leader_max_gain=leader_gain, follower_max_gain=follower_gain,
        leader_best_f=leader_best_f, follower_best_c=follower_best_c,
        grid_n=grid_n, tolerance=tolerance, passed=passed,
    )
