"""Relative value iteration for the multiplier-relaxed MDP.

Iterates v(s) <- min_a E[l + v_rel(s')] with the reference-state value
subtracted each sweep, stopping on the sup-norm of successive iterates.
The greedy policy is extracted from the converged relative values and its
averages are computed exactly through the induced chain, so the reported
(C, F, L) are not polluted by the iteration tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import chain_analysis
from .chain_analysis import DeterministicPolicy
from .errors import NonConvergence
from .mdp_core import Kernel, kernel_for
from .scenario import Scenario

S_REF = 0
DEFAULT_EPSILON = 1e-2
MAX_ITERATIONS = 10**6


@dataclass(frozen=True)
class SolveResult:
    policy: DeterministicPolicy
    h: np.ndarray
    avg_lagrangian: float
    avg_cae: float
    avg_freq: float
    iterations: int
    lam: float


def _as_kernel(problem) -> Kernel:
    if isinstance(problem, Scenario):
        return kernel_for(problem)
    return problem


def greedy_policy(kernel: Kernel, lam: float, h: np.ndarray) -> DeterministicPolicy:
    """Argmin of the Bellman right-hand side; ties go to the lowest action."""
    rhs = bellman_rhs(kernel, lam, h)
    return DeterministicPolicy(actions=np.argmin(rhs, axis=1))


def bellman_rhs(kernel: Kernel, lam: float, h: np.ndarray) -> np.ndarray:
    """Q-values of the relaxed cost against relative values h, shape (S, A)."""
    return kernel.cbar + lam * kernel.f[None, :] + (kernel.P @ h).T


def solve_lmdp(
    problem,
    lam: float,
    epsilon: float = DEFAULT_EPSILON,
    max_iterations: int = MAX_ITERATIONS,
    span_stop: bool = False,
) -> SolveResult:
    """Solve the relaxed MDP at a fixed multiplier.

    A damping transform P <- (P + I) / 2 (costs unchanged) is applied when
    some source has a zero self-transition probability; it preserves fixed
    points, argmins, and the average cost while guaranteeing aperiodicity.
    """
    if lam < 0.0:
        raise ValueError("lam must be non-negative")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    kernel = _as_kernel(problem)

    needs_damping = any(
        np.any(np.diagonal(src.transition) == 0.0) for src in kernel.space.scenario.sources
    )
    p = kernel.P
    if needs_damping:
        p = 0.5 * (p + np.eye(kernel.n_states)[None, :, :])

    r = kernel.cbar + lam * kernel.f[None, :]
    v = np.zeros(kernel.n_states)
    v_rel = np.zeros(kernel.n_states)
    for it in range(1, max_iterations + 1):
        q = r + (p @ v_rel).T
        v_new = q.min(axis=1)
        if span_stop:
            diff = v_new - v
            gap = diff.max() - diff.min()
        else:
            gap = np.max(np.abs(v_new - v))
        v = v_new
        v_rel = v - v[S_REF]
        if gap < epsilon:
            break
    else:
        raise NonConvergence(f"RVI did not converge within {max_iterations} iterations")

    policy = DeterministicPolicy(actions=np.argmin(r + (p @ v_rel).T, axis=1))
    ev = chain_analysis.evaluate_policy(kernel, policy, lam)
    return SolveResult(
        policy=policy,
        h=v_rel,
        avg_lagrangian=ev.avg_lagrangian,
        avg_cae=ev.avg_cae,
        avg_freq=ev.avg_freq,
        iterations=it,
        lam=lam,
    )
