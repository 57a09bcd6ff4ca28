"""Joint state space, transition kernel, and instantaneous costs.

The joint state pairs each source's true state with the receiver-side
estimate.  Under the zero-delay convention the estimate component is the
one available at decision time (last slot's reconstruction); under
one-delay it is the current reconstruction.  The kernel itself is the same
for both delays; only the cost timing differs.

Indexing is mixed-radix over the digits (x_1, xhat_1, ..., x_M, xhat_M)
with x_1 most significant, so the all-synced state at source state 1 maps
to index 0, which doubles as the reference state for relative value
iteration.

Cost convention note (zero delay): the per-slot cost pairs the current
source state with the estimate produced by this slot's transmission, i.e.
delta is evaluated against x from the current state and xhat from the
successor.  This is the unique reading under which the three-argument cost
c(s, a, s') is well-defined on the (X_t, Xhat_{t-1}) state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from .errors import CapacityError
from .scenario import Scenario

STATE_CEILING = 10**7
DENSE_CEILING = 2000

SystemState = tuple[tuple[int, int], ...]  # ((x_m, xhat_m), ...) 0-based


@dataclass(frozen=True)
class StateSpace:
    """Bijective codec between joint states and integers 0..n_states-1."""

    scenario: Scenario
    sizes: tuple[int, ...] = field(init=False)
    n_states: int = field(init=False)

    def __post_init__(self):
        sizes = tuple(src.n_states for src in self.scenario.sources)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "n_states", prod(n * n for n in sizes))

    @property
    def n_actions(self) -> int:
        return len(self.sizes) + 1

    def index_of(self, state: SystemState) -> int:
        idx = 0
        for (x, xhat), n in zip(state, self.sizes):
            if not (0 <= x < n and 0 <= xhat < n):
                raise IndexError(f"component {(x, xhat)} out of range for {n} states")
            idx = idx * (n * n) + x * n + xhat
        return idx

    def state_of(self, idx: int) -> SystemState:
        if not (0 <= idx < self.n_states):
            raise IndexError(f"index {idx} out of range")
        comps = []
        for n in reversed(self.sizes):
            digit = idx % (n * n)
            idx //= n * n
            comps.append((digit // n, digit % n))
        return tuple(reversed(comps))

    def states(self):
        return (self.state_of(i) for i in range(self.n_states))


def enumerate_states(scenario: Scenario, ceiling: int = STATE_CEILING) -> StateSpace:
    space = StateSpace(scenario)
    if space.n_states > ceiling:
        raise CapacityError(
            f"{space.n_states} joint states exceed the ceiling of {ceiling}"
        )
    return space


def subsystem_transition_prob(
    q: np.ndarray, p_s: float, sm: tuple[int, int], transmit: bool, sm2: tuple[int, int]
) -> float:
    """Per-source kernel: the six-case table shared by both delay modes."""
    i, j = sm
    k, l = sm2
    if transmit and i != j:
        p = 0.0
        if l == i:
            p += q[i, k] * p_s
        if l == j:
            p += q[i, k] * (1.0 - p_s)
        return p
    # idle, or already synced (success and failure coincide)
    return q[i, k] if l == j else 0.0


def transition_prob(space: StateSpace, s: SystemState, a: int, s2: SystemState) -> float:
    """Product-form joint kernel: sources evolve independently given the action."""
    p_s = space.scenario.channel.p_success
    p = 1.0
    for m, src in enumerate(space.scenario.sources):
        p *= subsystem_transition_prob(src.transition, p_s, s[m], a == m + 1, s2[m])
        if p == 0.0:
            return 0.0
    return p


def instantaneous_cae(space: StateSpace, s: SystemState, a: int, s2: SystemState) -> float:
    """Realized weighted error cost of the transition (delay-dependent timing)."""
    delay = space.scenario.channel.delay
    total = 0.0
    for m, src in enumerate(space.scenario.sources):
        x = s2[m][0] if delay == 1 else s[m][0]
        total += src.weight * src.cae[x, s2[m][1]]
    return total


def transmission_cost(a: int) -> int:
    return 1 if a != 0 else 0


def lagrangian_cost(
    space: StateSpace, s: SystemState, a: int, s2: SystemState, lam: float
) -> float:
    return instantaneous_cae(space, s, a, s2) + lam * transmission_cost(a)


def _subsystem_kernel(q: np.ndarray, p_s: float, transmit: bool) -> np.ndarray:
    """Dense N^2 x N^2 kernel of one source under transmit/idle."""
    n = q.shape[0]
    out = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            row = i * n + j
            for k in range(n):
                if transmit and i != j:
                    out[row, k * n + i] += q[i, k] * p_s
                    out[row, k * n + j] += q[i, k] * (1.0 - p_s)
                else:
                    out[row, k * n + j] += q[i, k]
    return out


def _subsystem_cost(src, delay: int) -> np.ndarray:
    """Per-source cost of a subsystem transition (i,j) -> (k,l)."""
    n = src.n_states
    out = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    x = k if delay == 1 else i
                    out[i * n + j, k * n + l] = src.weight * src.cae[x, l]
    return out


def _expand_sum(mats: list[np.ndarray], sizes: list[int]) -> np.ndarray:
    """Sum of per-source matrices lifted to the joint index (additive costs)."""
    m_count = len(mats)
    out = np.zeros([*sizes, *sizes])
    for m, mat in enumerate(mats):
        shape = [1] * (2 * m_count)
        shape[m] = sizes[m]
        shape[m_count + m] = sizes[m]
        out = out + mat.reshape(shape)
    s = prod(sizes)
    return out.reshape(s, s)


@dataclass(frozen=True)
class Kernel:
    """Materialized transition/cost tables: P, instantaneous CAE, expectations.

    Shapes: P and cae are (A, S, S); cbar is (S, A); f is (A,).  Arrays are
    immutable once built, so a kernel is safe to share across solver runs.
    """

    space: StateSpace
    P: np.ndarray
    cae: np.ndarray
    cbar: np.ndarray
    f: np.ndarray

    @property
    def n_states(self) -> int:
        return self.space.n_states

    @property
    def n_actions(self) -> int:
        return self.space.n_actions

    @property
    def f_max(self) -> float:
        return self.space.scenario.f_max


def build_kernel(space: StateSpace) -> Kernel:
    """Build dense tables; refuses instances too large for exact methods."""
    if space.n_states > DENSE_CEILING:
        raise CapacityError(
            f"{space.n_states} states exceed the dense-kernel ceiling of {DENSE_CEILING}"
        )
    scenario = space.scenario
    p_s = scenario.channel.p_success
    delay = scenario.channel.delay
    n_sub = [n * n for n in space.sizes]
    a_count = space.n_actions

    idle = [_subsystem_kernel(src.transition, p_s, transmit=False) for src in scenario.sources]
    tx = [_subsystem_kernel(src.transition, p_s, transmit=True) for src in scenario.sources]
    costs = [_subsystem_cost(src, delay) for src in scenario.sources]

    s_count = space.n_states
    big_p = np.zeros((a_count, s_count, s_count))
    for a in range(a_count):
        mat = np.ones((1, 1))
        for m in range(len(scenario.sources)):
            mat = np.kron(mat, tx[m] if a == m + 1 else idle[m])
        big_p[a] = mat

    big_c = np.broadcast_to(_expand_sum(costs, n_sub), (a_count, s_count, s_count)).copy()
    cbar = np.einsum("ast,ast->sa", big_p, big_c)
    f = np.array([transmission_cost(a) for a in range(a_count)], dtype=float)

    for arr in (big_p, big_c, cbar, f):
        arr.setflags(write=False)
    return Kernel(space=space, P=big_p, cae=big_c, cbar=cbar, f=f)


def kernel_for(scenario: Scenario) -> Kernel:
    return build_kernel(enumerate_states(scenario))
