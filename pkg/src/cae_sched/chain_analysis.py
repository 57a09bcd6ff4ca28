"""Stationary-policy machinery: induced chains, stationary laws, averages.

Stationary distributions are computed by strongly-connected-component
analysis followed by a direct linear solve on the single closed class.
Power iteration is deliberately avoided: it needs aperiodicity, which can
fail when a source has a zero self-transition probability, while the
linear solve is unconditional.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import MultichainError
from .mdp_core import Kernel

ROW_TOL = 1e-9
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class DeterministicPolicy:
    """State-index -> action table."""

    actions: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.actions, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "actions", arr)

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True)
class RandomizedPolicy:
    """State-index -> action-distribution table (rows sum to 1)."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=float)
        if np.any(np.abs(arr.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("randomized policy rows must sum to 1")
        arr.setflags(write=False)
        object.__setattr__(self, "rows", arr)

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class SAPolicyParams:
    """Fixed per-source transmit probabilities of the source-agnostic policy."""

    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if any(p <= 0.0 for p in self.probs):
            raise ValueError("source-agnostic probabilities must be positive")
        if sum(self.probs) > 1.0 + ROW_TOL:
            raise ValueError("source-agnostic probabilities must sum to at most 1")


@dataclass(frozen=True)
class PolicyEvaluation:
    avg_cae: float
    avg_freq: float
    avg_lagrangian: float
    stationary: np.ndarray | None


def is_mixture(policy) -> bool:
    return hasattr(policy, "pi_minus") and hasattr(policy, "pi_plus") and hasattr(policy, "mu")


def policy_transition_matrix(kernel: Kernel, policy) -> np.ndarray:
    """Chain induced by a deterministic or randomized stationary policy."""
    if isinstance(policy, DeterministicPolicy):
        return kernel.P[policy.actions, np.arange(kernel.n_states), :]
    if isinstance(policy, RandomizedPolicy):
        return np.einsum("sa,ast->st", policy.rows, kernel.P)
    raise TypeError(f"unsupported policy type {type(policy)!r}")


def closed_classes(matrix: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Closed recurrent classes of a stochastic matrix plus the SCC labels."""
    support = sp.csr_matrix(matrix > 0.0)
    n_comp, labels = connected_components(support, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(matrix.shape[0], dtype=bool)
        outside[members] = False
        if not np.any(matrix[np.ix_(members, np.flatnonzero(outside))] > 0.0):
            closed.append(members)
    return closed, labels

def stationary_distribution(matrix: np.ndarray) -> np.ndarray:
    """Stationary law of a unichain stochastic matrix (zeros on transients).

    Solves nu P = nu with one equation replaced by the normalization
    constraint, restricted to the unique closed class.
    """
    n = matrix.shape[0]
    closed, _ = closed_classes(matrix)
    if len(closed) != 1:
        raise MultichainError(classes=[c.tolist() for c in closed])
    members = closed[0]
    sub = matrix[np.ix_(members, members)]
    k = len(members)
    a = sub.T - np.eye(k)
    a[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    nu_sub = np.linalg.solve(a, b)
    nu = np.zeros(n)
    nu[members] = nu_sub
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    residual = np.max(np.abs(nu @ matrix - nu))
    if residual > RESIDUAL_TOL:
        raise ArithmeticError(f"stationary solve residual {residual:.3e} too large")
    return nu


def _expected_costs(kernel: Kernel, policy) -> tuple[np.ndarray, np.ndarray]:
    """Per-state expected CAE and transmission cost under the policy."""
    if isinstance(policy, DeterministicPolicy):
        idx = np.arange(kernel.n_states)
        return kernel.cbar[idx, policy.actions], kernel.f[policy.actions]
    if isinstance(policy, RandomizedPolicy):
        return (policy.rows * kernel.cbar).sum(axis=1), policy.rows @ kernel.f
    raise TypeError(f"unsupported policy type {type(policy)!r}")


CLASS_TIE_TOL = 1e-9


def evaluate_policy(kernel: Kernel, policy, lam: float = 0.0) -> PolicyEvaluation:
    """Long-run averages of a stationary (or mixture) policy.

    Mixtures are evaluated as the mu-weighted sum of the two component
    evaluations; each component's averages are initial-state independent,
    so the weighting is exact for per-run component randomization.

    A multichain policy is accepted when all of its closed classes agree
    on both averages within tolerance (the averages are then still
    initial-state independent, e.g. never-transmit under a cost matrix
    with equal column means); a genuine spread raises MultichainError.
    """
    if is_mixture(policy):
        lo = evaluate_policy(kernel, policy.pi_plus, lam)
        hi = evaluate_policy(kernel, policy.pi_minus, lam)
        mu = policy.mu
        cae = mu * hi.avg_cae + (1.0 - mu) * lo.avg_cae
        freq = mu * hi.avg_freq + (1.0 - mu) * lo.avg_freq
        return PolicyEvaluation(cae, freq, cae + lam * freq, None)

    matrix = policy_transition_matrix(kernel, policy)
    try:
        nu = stationary_distribution(matrix)
    except MultichainError:
        evals = evaluate_policy_per_class(kernel, policy, lam)
        spread_c = max(e.avg_cae for e in evals) - min(e.avg_cae for e in evals)
        spread_f = max(e.avg_freq for e in evals) - min(e.avg_freq for e in evals)
        scale = max(1.0, abs(evals[0].avg_cae))
        if spread_c > CLASS_TIE_TOL * scale or spread_f > CLASS_TIE_TOL:
            raise
        return evals[0]
    cvec, fvec = _expected_costs(kernel, policy)
    cae = float(nu @ cvec)
    freq = float(nu @ fvec)
    return PolicyEvaluation(cae, freq, cae + lam * freq, nu)


def _class_stationary(matrix: np.ndarray, members: np.ndarray) -> np.ndarray:
    sub = matrix[np.ix_(members, members)]
    k = len(members)
    a = sub.T - np.eye(k)
    a[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    nu = np.zeros(matrix.shape[0])
    nu[members] = np.linalg.solve(a, b)
    return nu


def evaluate_policy_per_class(kernel: Kernel, policy, lam: float = 0.0) -> list[PolicyEvaluation]:
    """Averages restricted to each closed recurrent class separately.

    For a multichain policy the long-run averages depend on which closed
    class the run ends up in; this reports all of them.
    """
    matrix = policy_transition_matrix(kernel, policy)
    closed, _ = closed_classes(matrix)
    cvec, fvec = _expected_costs(kernel, policy)
    out = []
    for members in closed:
        nu = _class_stationary(matrix, members)
        cae, freq = float(nu @ cvec), float(nu @ fvec)
        out.append(PolicyEvaluation(cae, freq, cae + lam * freq, nu))
    return out


def sa_policy(kernel: Kernel, params: SAPolicyParams) -> RandomizedPolicy:
    """Source-agnostic policy: the same action distribution in every state."""
    if len(params.probs) != kernel.n_actions - 1:
        raise ValueError("need one probability per source")
    row = np.array([1.0 - sum(params.probs), *params.probs])
    return RandomizedPolicy(rows=np.tile(row, (kernel.n_states, 1)))


def occupancy(kernel: Kernel, policy) -> np.ndarray:
    """Stationary state-action frequencies nu(s) * pi(a|s), shape (S, A).

    Multichain policies with tied class averages use the first closed
    class's stationary law, matching `evaluate_policy`.
    """
    if is_mixture(policy):
        return policy.mu * occupancy(kernel, policy.pi_minus) + (
            1.0 - policy.mu
        ) * occupancy(kernel, policy.pi_plus)
    nu = evaluate_policy(kernel, policy).stationary
    if isinstance(policy, DeterministicPolicy):
        occ = np.zeros((kernel.n_states, kernel.n_actions))
        occ[np.arange(kernel.n_states), policy.actions] = nu
        return occ
    return nu[:, None] * policy.rows


def _period_of_class(matrix: np.ndarray, members: np.ndarray) -> int:
    """Period of one strongly connected class via BFS level differences."""
    from math import gcd

    sub = matrix[np.ix_(members, members)] > 0.0
    k = len(members)
    level = np.full(k, -1)
    level[0] = 0
    frontier = [0]
    order = []
    while frontier:
        nxt = []
        for u in frontier:
            order.append(u)
            for v in np.flatnonzero(sub[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    rows, cols = np.nonzero(sub)
    for u, v in zip(rows, cols):
        g = gcd(g, level[u] + 1 - level[v])
    return abs(g) if g else 1


def check_recurrent_aperiodic(matrix: np.ndarray) -> str:
    """Classify a stochastic matrix: recurrent_aperiodic / not_irreducible / periodic."""
    closed, labels = closed_classes(matrix)
    n_comp = labels.max() + 1
    if n_comp != 1:
        return "not_irreducible"
    members = np.arange(matrix.shape[0])
    if _period_of_class(matrix, members) == 1:
        return "recurrent_aperiodic"
    return "periodic"


def policy_to_dict(policy) -> dict:
    if is_mixture(policy):
        return {
            "kind": "mixture",
            "pi_minus": policy_to_dict(policy.pi_minus),
            "pi_plus": policy_to_dict(policy.pi_plus),
            "mu": policy.mu,
        }
    if isinstance(policy, DeterministicPolicy):
        return {"kind": "deterministic", "actions": policy.actions.tolist()}
    if isinstance(policy, RandomizedPolicy):
        return {"kind": "randomized", "rows": policy.rows.tolist()}
    raise TypeError(f"unsupported policy type {type(policy)!r}")


def policy_from_dict(doc: dict):
    kind = doc["kind"]
    if kind == "deterministic":
        return DeterministicPolicy(actions=np.array(doc["actions"], dtype=np.int64))
    if kind == "randomized":
        return RandomizedPolicy(rows=np.array(doc["rows"], dtype=float))
    if kind == "mixture":
        from .lagrange_search import MixturePolicy

        return MixturePolicy(
            pi_minus=policy_from_dict(doc["pi_minus"]),
            pi_plus=policy_from_dict(doc["pi_plus"]),
            mu=float(doc["mu"]),
        )
    raise ValueError(f"unknown policy kind {kind!r}")


def save_policy(policy, path) -> None:
    with open(path, "w") as fh:
        json.dump(policy_to_dict(policy), fh, indent=2)


def load_policy(path):
    with open(path) as fh:
        return policy_from_dict(json.load(fh))
