"""Outer-loop multiplier search: bisection and intersection variants.

Both searches drive an injected inner solver (exact value iteration by
default, a learned solver if the caller supplies one) and end with either
a deterministic policy or a two-policy mixture whose average transmission
frequency hits the budget exactly.

The intersection variant exploits that the optimal relaxed cost is a
piecewise-linear concave function of the multiplier with slope equal to
the average transmission frequency: intersecting the tangents at an
infeasible and a feasible anchor jumps directly between corners, so it
terminates in at most (#segments - 1) inner solves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

from . import chain_analysis, rvi
from .chain_analysis import DeterministicPolicy, PolicyEvaluation
from .errors import BadBracket, DegenerateSlope, InfeasiblePair, NonConvergence
from .mdp_core import Kernel, kernel_for
from .scenario import Scenario

DEFAULT_LAMBDA_MAX = 100.0
DEFAULT_XI = 1e-3
DEFAULT_EPSILON_L = 1e-6
FEAS_TOL = 1e-9
MAX_OUTER_ITERATIONS = 200
TERMINAL_EPSILON = 1e-8  # perturbation solves sit within zeta/4 of a breakpoint


@dataclass(frozen=True)
class MixturePolicy:
    """Randomize once per run between an infeasible and a feasible policy."""

    pi_minus: DeterministicPolicy
    pi_plus: DeterministicPolicy
    mu: float

    def __post_init__(self):
        if not (0.0 <= self.mu <= 1.0):
            raise ValueError("mu must lie in [0, 1]")


@dataclass(frozen=True)
class SearchIteration:
    n: int
    lam: float
    avg_freq: float
    avg_cae: float
    avg_lagrangian: float
    lo: float
    hi: float


@dataclass
class SearchTrace:
    method: str
    gamma: float
    final_policy: object
    final_evaluation: PolicyEvaluation
    iterations: list[SearchIteration] = field(default_factory=list)

    @property
    def n_solves(self) -> int:
        """Inner-solver calls inside the search loop (the gamma=0 check and
        the two terminal perturbation solves are not counted)."""
        return len(self.iterations)


def _as_kernel(problem) -> Kernel:
    if isinstance(problem, Scenario):
        return kernel_for(problem)
    return problem


def _default_solver(kernel: Kernel, epsilon: float) -> Callable[[float], rvi.SolveResult]:
    return lambda lam: rvi.solve_lmdp(kernel, lam, epsilon=epsilon)


def mix_policies(
    pi_minus: DeterministicPolicy,
    pi_plus: DeterministicPolicy,
    f_minus: float,
    f_plus: float,
    f_max: float,
) -> MixturePolicy:
    """Weight the two policies so the blended frequency equals f_max exactly."""
    if not (f_plus <= f_max <= f_minus) or not (f_minus > f_plus):
        raise InfeasiblePair(
            f"cannot mix: F-={f_minus!r}, F+={f_plus!r}, budget {f_max!r}"
        )
    mu = (f_max - f_plus) / (f_minus - f_plus)
    return MixturePolicy(pi_minus=pi_minus, pi_plus=pi_plus, mu=mu)


def cmax_upper_bound(problem) -> float:
    """Certified upper bound on the never-transmit average CAE.

    The never-transmit chain freezes the estimate, so its average CAE
    depends on which estimate configuration the chain is stuck in; the
    bound takes the worst configuration per source under the source's own
    stationary law.  Any upper bound with slope zero is a valid feasible
    anchor for the intersection search.
    """
    scenario = problem.space.scenario if isinstance(problem, Kernel) else problem
    total = 0.0
    for src in scenario.sources:
        nu = chain_analysis.stationary_distribution(src.transition)
        total += src.weight * max(float(nu @ src.cae[:, j]) for j in range(src.n_states))
    return total


def _finalize(
    kernel: Kernel,
    solver,
    gamma: float,
    res_minus: rvi.SolveResult | None,
    res_plus: rvi.SolveResult | None,
    zeta: float,
    feas_tol: float,
):
    """Build the terminal policy: pure when the budget is hit, mixed otherwise.

    The two perturbation solves at gamma -+ zeta/4 must land on the two
    plateaus adjacent to the corner.  If a solve still reports the wrong
    side (an inner solver too loose to separate near-tied actions that
    close to the breakpoint), the offset is widened geometrically.
    """
    f_max = kernel.f_max
    if res_plus is not None and abs(res_plus.avg_freq - f_max) <= feas_tol:
        return res_plus.policy
    if res_minus is None or res_plus is None:
        offset = zeta / 4.0
        for _ in range(10):
            lo = solver(max(gamma - offset, 0.0))
            hi = solver(gamma + offset)
            if lo.avg_freq > f_max + feas_tol and hi.avg_freq <= f_max + feas_tol:
                res_minus, res_plus = lo, hi
                break
            offset *= 4.0
        else:
            raise InfeasiblePair(
                f"could not bracket the corner at gamma={gamma!r} within the widening cap"
            )
    if abs(res_plus.avg_freq - f_max) <= feas_tol:
        return res_plus.policy
    if abs(res_minus.avg_freq - f_max) <= feas_tol:
        return res_minus.policy
    return mix_policies(
        res_minus.policy, res_plus.policy, res_minus.avg_freq, res_plus.avg_freq, f_max
    )


def bisection_search(
    problem,
    lambda_max: float = DEFAULT_LAMBDA_MAX,
    xi: float = DEFAULT_XI,
    epsilon: float = rvi.DEFAULT_EPSILON,
    solver: Callable[[float], rvi.SolveResult] | None = None,
    feas_tol: float = FEAS_TOL,
) -> SearchTrace:
    """Interval halving on the frequency excess over [0, lambda_max]."""
    if xi <= 0.0:
        raise ValueError("xi must be positive")
    kernel = _as_kernel(problem)
    if solver is None:
        solver = _default_solver(kernel, epsilon)
        terminal_solver = _default_solver(kernel, min(epsilon, TERMINAL_EPSILON))
    else:
        terminal_solver = solver
    f_max = kernel.f_max

    res0 = solver(0.0)
    if res0.avg_freq <= f_max + feas_tol:
        ev = chain_analysis.evaluate_policy(kernel, res0.policy)
        return SearchTrace("bisect", 0.0, res0.policy, ev, [])

    res_hi = solver(lambda_max)
    if res_hi.avg_freq > f_max + feas_tol:
        raise BadBracket(
            f"F at lambda_max={lambda_max} is {res_hi.avg_freq:.4f} > budget {f_max}"
        )

    lo, hi = 0.0, lambda_max
    res_lo = res0
    iterations: list[SearchIteration] = []
    n = 0
    while hi - lo >= xi:
        n += 1
        mid = 0.5 * (lo + hi)
        res = solver(mid)
        if res.avg_freq > f_max + feas_tol:
            lo, res_lo = mid, res
        else:
            hi, res_hi = mid, res
        iterations.append(
            SearchIteration(n, mid, res.avg_freq, res.avg_cae, res.avg_lagrangian, lo, hi)
        )
        if n > MAX_OUTER_ITERATIONS:
            raise NonConvergence("bisection exceeded the outer iteration cap")

    gamma = hi
    policy = _finalize(
        kernel, terminal_solver, gamma, res_lo, res_hi, zeta=xi, feas_tol=feas_tol
    )
    ev = chain_analysis.evaluate_policy(kernel, policy)
    return SearchTrace("bisect", gamma, policy, ev, iterations)


def intersection_search(
    problem,
    epsilon_l: float = DEFAULT_EPSILON_L,
    zeta: float = DEFAULT_XI,
    epsilon: float = rvi.DEFAULT_EPSILON,
    solver: Callable[[float], rvi.SolveResult] | None = None,
    feas_tol: float = FEAS_TOL,
) -> SearchTrace:
    """Tangent-intersection search along the concave relaxed-cost envelope."""
    if epsilon_l <= 0.0 or zeta <= 0.0:
        raise ValueError("epsilon_l and zeta must be positive")
    kernel = _as_kernel(problem)
    if solver is None:
        solver = _default_solver(kernel, epsilon)
        terminal_solver = _default_solver(kernel, min(epsilon, TERMINAL_EPSILON))
    else:
        terminal_solver = solver
    f_max = kernel.f_max

    res0 = solver(0.0)
    if res0.avg_freq <= f_max + feas_tol:
        ev = chain_analysis.evaluate_policy(kernel, res0.policy)
        return SearchTrace("insect", 0.0, res0.policy, ev, [])

    # Infeasible anchor: the unconstrained solution.  Feasible anchor: a
    # synthetic zero-slope point at the never-transmit cost bound.
    lam_minus, f_minus, c_minus, l_minus = 0.0, res0.avg_freq, res0.avg_cae, res0.avg_lagrangian
    f_plus, c_plus = 0.0, cmax_upper_bound(kernel)
    res_plus: rvi.SolveResult | None = None

    iterations: list[SearchIteration] = []
    for n in range(1, MAX_OUTER_ITERATIONS + 1):
        if f_minus == f_plus:
            if res_plus is not None:
                policy = res_plus.policy
                ev = chain_analysis.evaluate_policy(kernel, policy)
                return SearchTrace("insect", res_plus.lam, policy, ev, iterations)
            raise DegenerateSlope("tangent anchors share one slope before any feasible solve")

        gamma = (c_plus - c_minus) / (f_minus - f_plus)
        l_tilde = f_minus * (gamma - lam_minus) + l_minus

        res = solver(gamma)
        iterations.append(
            SearchIteration(
                n, gamma, res.avg_freq, res.avg_cae, res.avg_lagrangian, lam_minus, gamma
            )
        )
        if abs(l_tilde - res.avg_lagrangian) <= epsilon_l * max(1.0, abs(res.avg_lagrangian)):
            policy = _finalize(kernel, terminal_solver, gamma, None, res, zeta, feas_tol)
            if abs(res.avg_freq - f_max) <= feas_tol:
                policy = res.policy
            ev = chain_analysis.evaluate_policy(kernel, policy)
            return SearchTrace("insect", gamma, policy, ev, iterations)

        if res.avg_freq <= f_max + feas_tol:
            f_plus, c_plus, res_plus = res.avg_freq, res.avg_cae, res
        else:
            lam_minus, f_minus, c_minus, l_minus = (
                gamma,
                res.avg_freq,
                res.avg_cae,
                res.avg_lagrangian,
            )

    raise NonConvergence("intersection search exceeded the outer iteration cap")


def trace_to_csv(trace: SearchTrace, path) -> None:
    """One row per inner solve, for convergence plots."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lambda", "F", "C", "L", "lo", "hi"])
        for it in trace.iterations:
            writer.writerow(
                [it.n, it.lam, it.avg_freq, it.avg_cae, it.avg_lagrangian, it.lo, it.hi]
            )
