"""Seeded slotted-time simulator for sources, channel, and any policy.

Randomness comes from counter-based Philox streams with one substream per
component (source evolution, channel, policy randomization, mixture
selection), so changing how one component consumes draws never perturbs
the others.  The slot loop is compiled with numba; uniforms are
pre-generated per batch so the compiled loop stays free of generator
state.

Default initial state: every source synced at its first state (a
transient choice, irrelevant to long-run averages for unichain policies).
Standard errors use batch means over 20 batches because the slot sequence
is autocorrelated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .chain_analysis import (
    DeterministicPolicy,
    RandomizedPolicy,
    is_mixture,
    occupancy,
)
from .dpp import DEFAULT_V, expected_cae_table
from .mdp_core import Kernel, StateSpace, SystemState, enumerate_states
from .scenario import Scenario

N_BATCHES = 20

_STREAM_SOURCES = 1
_STREAM_CHANNEL = 2
_STREAM_POLICY = 3
_STREAM_MIXTURE = 4


@dataclass(frozen=True)
class DppPolicy:
    """Marker selecting the online drift-plus-penalty controller."""

    v: float = DEFAULT_V


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    policy: object
    horizon: int
    seed: int = 0
    initial_state: SystemState | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class SimMetrics:
    avg_cae: float
    avg_freq: float
    per_source_freq: np.ndarray
    per_state_freq: list[np.ndarray]
    se_cae: float
    se_freq: float
    horizon: int
    seed: int
    queue_mean: float | None = None
    queue_final: float | None = None


def _stream(seed: int, stream_id: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64(stream_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def step(scenario: Scenario, state: SystemState, action: int, rng: np.random.Generator):
    """One slot: advance sources, resolve the channel, update the estimate.

    Returns (next_state, success, realized_cae, realized_f).  The estimate
    of the selected source adopts its pre-transition state on success; the
    realized cost is read at the delay-appropriate instant.
    """
    p_s = scenario.channel.p_success
    new_x = tuple(
        int(rng.choice(src.n_states, p=src.transition[state[m][0]]))
        for m, src in enumerate(scenario.sources)
    )
    success = bool(rng.random() < p_s)
    new_xhat = list(s[1] for s in state)
    if action > 0 and success:
        new_xhat[action - 1] = state[action - 1][0]
    cae = 0.0
    for m, src in enumerate(scenario.sources):
        x = new_x[m] if scenario.channel.delay == 1 else state[m][0]
        cae += src.weight * src.cae[x, new_xhat[m]]
    next_state = tuple((new_x[m], new_xhat[m]) for m in range(len(scenario.sources)))
    return next_state, success, cae, (1 if action != 0 else 0)


@njit(cache=True)
def _slot_loop(
    xs,
    xh,
    sizes,
    strides,
    cumq,
    delta,
    weights,
    delay,
    p_s,
    mode,
    det_actions,
    rand_cum,
    cbar,
    v,
    f_max,
    z,
    u_src,
    u_chan,
    u_pol,
    t_counts,
    src_counts,
):
    horizon = u_chan.shape[0]
    m_count = sizes.shape[0]
    cae_sum = 0.0
    tx_sum = 0
    z_sum = 0.0
    for t in range(horizon):
        idx = 0
        for m in range(m_count):
            idx += (xs[m] * sizes[m] + xh[m]) * strides[m]

        if mode == 0:
            a = det_actions[idx]
        elif mode == 1:
            u = u_pol[t]
            a = 0
            while rand_cum[idx, a] < u:
                a += 1
        else:
            best = v * cbar[idx, 0] - z * f_max
            a = 0
            for aa in range(1, m_count + 1):
                obj = z * (1.0 - f_max) + v * cbar[idx, aa]
                if obj < best:
                    best = obj
                    a = aa

        if a > 0:
            t_counts[a - 1, xs[a - 1], xh[a - 1]] += 1
            src_counts[a - 1] += 1
            tx_sum += 1
            if u_chan[t] < p_s:
                xh[a - 1] = xs[a - 1]

        c = 0.0
        if delay == 0:
            for m in range(m_count):
                c += weights[m] * delta[m, xs[m], xh[m]]
        for m in range(m_count):
            u = u_src[t, m]
            row = cumq[m, xs[m]]
            k = 0
            while row[k] < u:
                k += 1
            xs[m] = k
        if delay == 1:
            for m in range(m_count):
                c += weights[m] * delta[m, xs[m], xh[m]]
        cae_sum += c

        if mode == 2:
            z = max(z - f_max, 0.0) + (1.0 if a > 0 else 0.0)
            z_sum += z
    return cae_sum, tx_sum, z_sum, z


def _padded_tables(scenario: Scenario):
    m_count = len(scenario.sources)
    n_max = max(src.n_states for src in scenario.sources)
    cumq = np.full((m_count, n_max, n_max), 2.0)
    delta = np.zeros((m_count, n_max, n_max))
    for m, src in enumerate(scenario.sources):
        n = src.n_states
        cum = np.cumsum(src.transition, axis=1)
        cum[:, -1] = 2.0  # guard against u == 1.0 edge
        cumq[m, :n, :n] = cum
        delta[m, :n, :n] = src.cae
    weights = np.array([src.weight for src in scenario.sources])
    return cumq, delta, weights


def _policy_tables(space: StateSpace, policy, seed: int):
    """Resolve a policy object to (mode, det_actions, rand_cum, cbar, v)."""
    s_count, a_count = space.n_states, space.n_actions
    det = np.zeros(s_count, dtype=np.int64)
    rand_cum = np.zeros((1, 1))
    cbar = np.zeros((1, 1))
    v = 0.0
    if is_mixture(policy):
        u = _stream(seed, _STREAM_MIXTURE).random()
        chosen = policy.pi_minus if u < policy.mu else policy.pi_plus
        return _policy_tables(space, chosen, seed)
    if isinstance(policy, DeterministicPolicy):
        return 0, np.asarray(policy.actions, dtype=np.int64), rand_cum, cbar, v
    if isinstance(policy, RandomizedPolicy):
        cum = np.cumsum(policy.rows, axis=1)
        cum[:, -1] = 2.0
        return 1, det, cum, cbar, v
    if isinstance(policy, DppPolicy):
        return 2, det, rand_cum, expected_cae_table(space), float(policy.v)
    raise TypeError(f"unsupported policy type {type(policy)!r}")


def run(config: SimConfig) -> SimMetrics:
    """Simulate the configured horizon and return time-average metrics."""
    scenario = config.scenario
    space = enumerate_states(scenario)
    m_count = len(scenario.sources)
    sizes = np.array(space.sizes, dtype=np.int64)
    strides = np.ones(m_count, dtype=np.int64)
    for m in range(m_count - 2, -1, -1):
        strides[m] = strides[m + 1] * sizes[m + 1] ** 2

    cumq, delta, weights = _padded_tables(scenario)
    mode, det_actions, rand_cum, cbar, v = _policy_tables(space, config.policy, config.seed)

    init = config.initial_state or tuple((0, 0) for _ in range(m_count))
    xs = np.array([c[0] for c in init], dtype=np.int64)
    xh = np.array([c[1] for c in init], dtype=np.int64)

    n_max = cumq.shape[1]
    t_counts = np.zeros((m_count, n_max, n_max), dtype=np.int64)
    src_counts = np.zeros(m_count, dtype=np.int64)

    rng_src = _stream(config.seed, _STREAM_SOURCES)
    rng_chan = _stream(config.seed, _STREAM_CHANNEL)
    rng_pol = _stream(config.seed, _STREAM_POLICY)

    n_batches = min(N_BATCHES, config.horizon)
    base = config.horizon // n_batches
    lens = [base] * n_batches
    lens[-1] += config.horizon - base * n_batches

    cae_means = np.empty(n_batches)
    freq_means = np.empty(n_batches)
    z = 0.0
    z_total = 0.0
    for b, ln in enumerate(lens):
        u_src = rng_src.random((ln, m_count))
        u_chan = rng_chan.random(ln)
        u_pol = rng_pol.random(ln)
        cae_sum, tx_sum, z_sum, z = _slot_loop(
            xs, xh, sizes, strides, cumq, delta, weights,
            scenario.channel.delay, scenario.channel.p_success,
            mode, det_actions, rand_cum, cbar, v, scenario.f_max, z,
            u_src, u_chan, u_pol, t_counts, src_counts,
        )
        cae_means[b] = cae_sum / ln
        freq_means[b] = tx_sum / ln
        z_total += z_sum

    avg_cae = float(np.average(cae_means, weights=lens))
    avg_freq = float(np.average(freq_means, weights=lens))
    if n_batches > 1:
        se_cae = float(np.std(cae_means, ddof=1) / np.sqrt(n_batches))
        se_freq = float(np.std(freq_means, ddof=1) / np.sqrt(n_batches))
    else:
        se_cae = se_freq = float("nan")

    per_state = [
        t_counts[m, : src.n_states, : src.n_states] / config.horizon
        for m, src in enumerate(scenario.sources)
    ]
    return SimMetrics(
        avg_cae=avg_cae,
        avg_freq=avg_freq,
        per_source_freq=src_counts / config.horizon,
        per_state_freq=per_state,
        se_cae=se_cae,
        se_freq=se_freq,
        horizon=config.horizon,
        seed=config.seed,
        queue_mean=(z_total / config.horizon) if mode == 2 else None,
        queue_final=z if mode == 2 else None,
    )


def run_trace(config: SimConfig, path) -> None:
    """Slot-by-slot trace export: t, state_index, action, success, cae, z.

    Uses the uncompiled single-slot stepper, so it is meant for short
    diagnostic runs; the z column is blank unless the policy is DPP.
    """
    import csv

    from .dpp import DPPState, dpp_decide, queue_update

    scenario = config.scenario
    space = enumerate_states(scenario)
    policy = config.policy
    if is_mixture(policy):
        u = _stream(config.seed, _STREAM_MIXTURE).random()
        policy = policy.pi_minus if u < policy.mu else policy.pi_plus
    rng = _stream(config.seed, _STREAM_SOURCES)
    rng_pol = _stream(config.seed, _STREAM_POLICY)
    state = config.initial_state or tuple((0, 0) for _ in scenario.sources)
    dpp_state = DPPState(v=policy.v) if isinstance(policy, DppPolicy) else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "state_index", "action", "success", "cae", "z"])
        for t in range(config.horizon):
            idx = space.index_of(state)
            if isinstance(policy, DeterministicPolicy):
                a = int(policy.actions[idx])
            elif isinstance(policy, RandomizedPolicy):
                a = int(rng_pol.choice(space.n_actions, p=policy.rows[idx]))
            elif dpp_state is not None:
                a = dpp_decide(space, state, dpp_state, scenario.f_max)
            else:
                raise TypeError(f"unsupported policy type {type(policy)!r}")
            state, success, cae, _ = step(scenario, state, a, rng)
            z = ""
            if dpp_state is not None:
                dpp_state.z = queue_update(dpp_state.z, a, scenario.f_max)
                z = dpp_state.z
            writer.writerow([t, idx, a, int(success), cae, z])


def run_mixture_expected(config: SimConfig) -> SimMetrics:
    """Expected metrics of a mixture policy: simulate each component on its
    own run and blend by the mixing weight.

    A single `run` realizes just one component (the mixture randomizes once
    per run), so its metrics estimate that component, not the mixture mean.
    """
    policy = config.policy
    if not is_mixture(policy):
        return run(config)
    m_minus = run(replace(config, policy=policy.pi_minus))
    m_plus = run(replace(config, policy=policy.pi_plus))
    mu = policy.mu

    def blend(a, b):
        return mu * a + (1.0 - mu) * b

    return SimMetrics(
        avg_cae=blend(m_minus.avg_cae, m_plus.avg_cae),
        avg_freq=blend(m_minus.avg_freq, m_plus.avg_freq),
        per_source_freq=blend(m_minus.per_source_freq, m_plus.per_source_freq),
        per_state_freq=[
            blend(tm, tp)
            for tm, tp in zip(m_minus.per_state_freq, m_plus.per_state_freq)
        ],
        se_cae=blend(m_minus.se_cae, m_plus.se_cae),
        se_freq=blend(m_minus.se_freq, m_plus.se_freq),
        horizon=config.horizon,
        seed=config.seed,
    )


def per_state_frequency(metrics: SimMetrics) -> list[np.ndarray]:
    """Per-source matrices T[m][i, j]: fraction of slots transmitting source m
    while its subsystem state was (i, j) at decision time."""
    return metrics.per_state_freq


def analytic_per_state_frequency(kernel: Kernel, policy) -> list[np.ndarray]:
    """Stationary-law counterpart of the empirical T matrices."""
    occ = occupancy(kernel, policy)
    space = kernel.space
    out = [np.zeros((n, n)) for n in space.sizes]
    for idx, state in enumerate(space.states()):
        for m in range(len(space.sizes)):
            i, j = state[m]
            out[m][i, j] += occ[idx, m + 1]
    return out
