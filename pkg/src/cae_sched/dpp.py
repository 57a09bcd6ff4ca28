"""Online drift-plus-penalty scheduler.

Keeps a virtual queue that grows by one on every transmission and drains
by the frequency budget each slot; a stable queue certifies that the
long-run transmission frequency meets the budget.  Each slot the policy
minimizes  z * (1(a != 0) - f_max) + v * E[CAE | s, a]  over actions,
where the expectation is the closed-form one-step expected cost.  Unlike
the planning solvers this needs the source and channel statistics at run
time, but no offline computation at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp_core import StateSpace, SystemState

DEFAULT_V = 100.0


@dataclass
class DPPState:
    """Virtual queue backlog plus the cost-emphasis weight."""

    z: float = 0.0
    v: float = DEFAULT_V

    def __post_init__(self):
        if self.z < 0.0:
            raise ValueError("queue backlog must be non-negative")


def drift_bound_constant(f_max: float) -> float:
    """Diagnostic constant from the quadratic drift bound; never used for control."""
    return (1.0 + f_max * f_max) / 2.0


def expected_one_step_cae(space: StateSpace, s: SystemState, a: int) -> float:
    """Closed-form E[CAE | s, a] under the configured delay."""
    scenario = space.scenario
    p_s = scenario.channel.p_success
    total = 0.0
    for m, src in enumerate(scenario.sources):
        i, j = s[m]
        if scenario.channel.delay == 0:
            dbar = src.cae[i, j] * (1.0 - p_s) if a == m + 1 else src.cae[i, j]
        else:
            q = src.transition
            idle = float(q[i, :] @ src.cae[:, j])
            if a == m + 1:
                dbar = p_s * float(q[i, :] @ src.cae[:, i]) + (1.0 - p_s) * idle
            else:
                dbar = idle
        total += src.weight * dbar
    return total


def expected_cae_table(space: StateSpace) -> np.ndarray:
    """Dense (S, A) table of expected one-step CAE, for simulation loops."""
    out = np.empty((space.n_states, space.n_actions))
    for idx, s in enumerate(space.states()):
        for a in range(space.n_actions):
            out[idx, a] = expected_one_step_cae(space, s, a)
    return out


def dpp_decide(space: StateSpace, s: SystemState, dpp: DPPState, f_max: float) -> int:
    """MinWeight action; ties break toward idle, then the lowest source index."""
    best_a = 0
    best = dpp.v * expected_one_step_cae(space, s, 0) - dpp.z * f_max
    for a in range(1, space.n_actions):
        obj = dpp.z * (1.0 - f_max) + dpp.v * expected_one_step_cae(space, s, a)
        if obj < best:
            best, best_a = obj, a
    return best_a


def queue_update(z: float, a: int, f_max: float) -> float:
    if z < 0.0:
        raise ValueError("queue backlog must be non-negative")
    return max(z - f_max, 0.0) + (1.0 if a != 0 else 0.0)
