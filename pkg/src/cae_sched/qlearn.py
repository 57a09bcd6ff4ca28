"""Model-free average-cost Q-learning for the relaxed MDP.

The learner sees the system only through a generative sampler: give it a
state-action pair, get back a successor and a realized error cost.  It
never reads transition matrices, cost expectations, or the channel
success probability.  The primary training mode sweeps every state-action
pair per iteration (which presumes the system can be reset to any state);
an on-trajectory epsilon-greedy mode is available when resets are
impossible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain_analysis import DeterministicPolicy
from .mdp_core import Kernel, kernel_for, transmission_cost

S_REF = 0
DEFAULT_ALPHA = 1e-3
DEFAULT_EPS_GREEDY = 0.1


@dataclass
class QTable:
    values: np.ndarray
    s_ref: int = S_REF

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    def greedy_policy(self) -> DeterministicPolicy:
        """Argmin per state; argmin ties resolve to the lowest action (idle first)."""
        return DeterministicPolicy(actions=np.argmin(self.values, axis=1))

    def gain_estimate(self) -> float:
        return float(self.values[self.s_ref].min())


@dataclass(frozen=True)
class LearnConfig:
    lam: float
    sweeps: int
    alpha: float = DEFAULT_ALPHA
    rng_seed: int = 0
    eval_horizon: int = 200_000
    mode: str = "sweep"  # "sweep" (generative resets) or "trajectory"
    eps_greedy: float = DEFAULT_EPS_GREEDY
    alpha_schedule: tuple[float, float] | None = None  # alpha_k = a / (b + k)

    def alpha_at(self, sweep: int) -> float:
        if self.alpha_schedule is None:
            return self.alpha
        a, b = self.alpha_schedule
        return a / (b + sweep)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.alpha_schedule is not None:
            a, b = self.alpha_schedule
            if a <= 0.0 or b <= 0.0:
                raise ValueError("alpha_schedule constants must be positive")
        if self.lam < 0.0:
            raise ValueError("lam must be non-negative")
        if self.sweeps < 1 or self.eval_horizon < 1:
            raise ValueError("sweeps and eval_horizon must be positive")
        if self.mode not in ("sweep", "trajectory"):
            raise ValueError("mode must be 'sweep' or 'trajectory'")


class KernelSampler:
    """Generative black box over a scenario.

    Exposes only the state/action counts and draws (s', realized CAE);
    the underlying kernel stays private so learners cannot peek at the
    statistics.
    """

    def __init__(self, problem):
        kernel = problem if isinstance(problem, Kernel) else kernel_for(problem)
        self._cum = np.cumsum(kernel.P, axis=2)
        self._cum[:, :, -1] = 2.0
        self._cae = kernel.cae
        self.n_states = kernel.n_states
        self.n_actions = kernel.n_actions

    def sample(self, s: int, a: int, rng: np.random.Generator) -> tuple[int, float]:
        s2 = int(np.searchsorted(self._cum[a, s], rng.random(), side="right"))
        return s2, float(self._cae[a, s, s2])


def q_sweep(
    q: QTable, lam: float, alpha: float, sampler, rng: np.random.Generator
) -> QTable:
    """One full pass over all (s, a) pairs in deterministic order, in place."""
    values = q.values
    for s in range(q.n_states):
        for a in range(sampler.n_actions):
            s2, cae = sampler.sample(s, a, rng)
            lcost = cae + lam * transmission_cost(a)
            target = lcost + values[s2].min() - values[q.s_ref].min()
            values[s, a] = (1.0 - alpha) * values[s, a] + alpha * target
    return q


def _trajectory_updates(
    q: QTable,
    lam: float,
    alpha: float,
    sampler,
    rng: np.random.Generator,
    n_updates: int,
    eps0: float,
    start: int,
    episode: int,
) -> int:
    """On-trajectory epsilon-greedy updates; returns the final state."""
    values = q.values
    s = start
    eps = eps0 / np.sqrt(max(episode, 1))
    for _ in range(n_updates):
        if rng.random() < eps:
            a = int(rng.integers(sampler.n_actions))
        else:
            a = int(values[s].argmin())
        s2, cae = sampler.sample(s, a, rng)
        lcost = cae + lam * transmission_cost(a)
        target = lcost + values[s2].min() - values[q.s_ref].min()
        values[s, a] = (1.0 - alpha) * values[s, a] + alpha * target
        s = s2
    return s


def rollout_estimates(
    sampler, policy: DeterministicPolicy, horizon: int, rng: np.random.Generator, lam: float
):
    """Empirical (C, F, L) of a policy with batch-means standard errors."""
    n_batches = min(20, horizon)
    base = horizon // n_batches
    lens = [base] * n_batches
    lens[-1] += horizon - base * n_batches
    cae_means = np.empty(n_batches)
    freq_means = np.empty(n_batches)
    s = 0
    actions = policy.actions
    for b, ln in enumerate(lens):
        cae_sum = 0.0
        tx = 0
        for _ in range(ln):
            a = int(actions[s])
            s, cae = sampler.sample(s, a, rng)
            cae_sum += cae
            tx += transmission_cost(a)
        cae_means[b] = cae_sum / ln
        freq_means[b] = tx / ln
    c_hat = float(np.average(cae_means, weights=lens))
    f_hat = float(np.average(freq_means, weights=lens))
    if n_batches > 1:
        se_c = float(np.std(cae_means, ddof=1) / np.sqrt(n_batches))
        se_f = float(np.std(freq_means, ddof=1) / np.sqrt(n_batches))
    else:
        se_c = se_f = float("nan")
    return c_hat, f_hat, c_hat + lam * f_hat, se_c, se_f


@dataclass
class LearnResult:
    qtable: QTable
    policy: DeterministicPolicy
    avg_cae: float
    avg_freq: float
    avg_lagrangian: float
    se_cae: float
    se_freq: float
    lam: float
    gain_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def se_lagrangian(self) -> float:
        return self.se_cae + self.lam * self.se_freq


def save_qtable(q: QTable, path) -> None:
    """Raw-values sidecar for resuming training (greedy projection is the
    policy document; this keeps the full table)."""
    import json

    with open(path, "w") as fh:
        json.dump({"values": q.values.tolist(), "s_ref": q.s_ref}, fh)


def load_qtable(path) -> QTable:
    import json

    with open(path) as fh:
        doc = json.load(fh)
    return QTable(values=np.array(doc["values"], dtype=float), s_ref=int(doc["s_ref"]))


def learn_lmdp(problem, config: LearnConfig) -> LearnResult:
    """Train a Q-table against a black-box sampler, then evaluate greedily.

    `problem` may be a Scenario/Kernel (wrapped in a KernelSampler) or any
    sampler object with n_states/n_actions/sample.
    """
    sampler = problem if hasattr(problem, "sample") else KernelSampler(problem)
    rng = np.random.Generator(
        np.random.Philox(key=np.array([np.uint64(config.rng_seed), np.uint64(97)], dtype=np.uint64))
    )
    q = QTable(values=np.zeros((sampler.n_states, sampler.n_actions)))
    guard = 1e6 * (1.0 + config.lam)
    history = np.empty(config.sweeps)
    pair_count = sampler.n_states * sampler.n_actions
    traj_state = 0
    for k in range(config.sweeps):
        alpha = config.alpha_at(k + 1)
        if config.mode == "sweep":
            q_sweep(q, config.lam, alpha, sampler, rng)
        else:
            traj_state = _trajectory_updates(
                q, config.lam, alpha, sampler, rng,
                pair_count, config.eps_greedy, traj_state, k + 1,
            )
        history[k] = q.gain_estimate()
        if np.max(np.abs(q.values)) > guard:
            raise ArithmeticError("Q-values diverged; learning rate likely too large")

    policy = q.greedy_policy()
    c_hat, f_hat, l_hat, se_c, se_f = rollout_estimates(
        sampler, policy, config.eval_horizon, rng, config.lam
    )
    return LearnResult(
        qtable=q,
        policy=policy,
        avg_cae=c_hat,
        avg_freq=f_hat,
        avg_lagrangian=l_hat,
        se_cae=se_c,
        se_freq=se_f,
        lam=config.lam,
        gain_history=history,
    )
