"""Problem instances: Markov sources, lossy channel, and frequency budget.

A scenario bundles everything a solver needs: per-source transition
matrices, per-source error-cost matrices, the channel success probability
and delay, and the transmission-frequency budget.  Instances are frozen
after validation and can be shared freely between concurrent solver runs.

Source indices are 1-based in documents and CLI output, 0-based in code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ScenarioValidationError, Violation

ROW_SUM_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SourceSpec:
    """One Markov source: transition matrix, error-cost matrix, weight."""

    transition: np.ndarray
    cae: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "cae", _frozen(self.cae))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class ChannelSpec:
    """i.i.d. packet-drop channel with success probability and delay in {0, 1}."""

    p_success: float
    delay: int = 0


@dataclass(frozen=True)
class Scenario:
    sources: tuple[SourceSpec, ...]
    channel: ChannelSpec
    f_max: float

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def with_params(self, p_success=None, delay=None, f_max=None) -> "Scenario":
        """Copy with channel parameters and/or budget replaced (for sweeps)."""
        ch = ChannelSpec(
            p_success=self.channel.p_success if p_success is None else float(p_success),
            delay=self.channel.delay if delay is None else int(delay),
        )
        return replace(self, channel=ch, f_max=self.f_max if f_max is None else float(f_max))


def validate_scenario(scenario: Scenario) -> Scenario:
    """Check every invariant; return the scenario unchanged or raise.

    All violations are collected and reported together.  Malformed rows are
    rejected rather than renormalized so corrupt inputs cannot slip through
    silently.
    """
    violations: list[Violation] = []

    if scenario.n_sources < 1:
        violations.append(Violation("NoSources", "sources", "at least one source required"))

    for m, src in enumerate(scenario.sources, start=1):
        q, d = src.transition, src.cae
        loc = f"source {m}"
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            violations.append(Violation("BadShape", loc, f"transition shape {q.shape} not square"))
            continue
        n = q.shape[0]
        if n < 2:
            violations.append(Violation("BadShape", loc, "n_states must be >= 2"))
        if d.shape != (n, n):
            violations.append(Violation("BadShape", loc, f"cae shape {d.shape} != {(n, n)}"))
            continue
        if np.any(q < 0.0) or np.any(q > 1.0):
            violations.append(Violation("BadProbability", loc, "transition entries outside [0, 1]"))
        rows = q.sum(axis=1)
        for i, rs in enumerate(rows):
            if abs(rs - 1.0) > ROW_SUM_TOL:
                violations.append(
                    Violation("RowSumError", f"{loc} row {i + 1}", f"row sums to {rs!r}")
                )
        if np.any(d < 0.0):
            violations.append(Violation("NegativeCost", loc, "cae entries must be >= 0"))
        diag = np.diagonal(d)
        if np.any(diag != 0.0):
            violations.append(
                Violation("NonzeroDiagonal", loc, "cae diagonal must be exactly 0")
            )
        if src.weight < 0.0:
            violations.append(Violation("NegativeWeight", loc, "weight must be >= 0"))

    ch = scenario.channel
    if not (0.0 <= ch.p_success <= 1.0):
        violations.append(Violation("BadProbability", "channel", "p_success outside [0, 1]"))
    if ch.delay not in (0, 1):
        violations.append(Violation("BadDelay", "channel", "delay must be 0 or 1"))
    if not (0.0 < scenario.f_max <= 1.0):
        violations.append(Violation("BadBudget", "f_max", f"f_max={scenario.f_max!r} not in (0, 1]"))

    if violations:
        raise ScenarioValidationError(violations)
    return scenario


def symmetric_transition(n: int, p: float) -> np.ndarray:
    """n-state matrix with off-diagonal entries p and diagonal 1-(n-1)p."""
    q = np.full((n, n), p)
    np.fill_diagonal(q, 1.0 - (n - 1) * p)
    return q


REFERENCE_CAE = np.array(
    [
        [0.0, 10.0, 30.0],
        [30.0, 0.0, 10.0],
        [10.0, 30.0, 0.0],
    ]
)


def reference_example_scenario(p_success: float, delay: int, f_max: float) -> Scenario:
    """The two-source reference instance used throughout the test suite.

    Source 1 evolves slowly (off-diagonal 0.1), source 2 rapidly (0.4); both
    share the same 3-state error-cost matrix and unit weight.
    """
    s1 = SourceSpec(transition=symmetric_transition(3, 0.1), cae=REFERENCE_CAE, weight=1.0)
    s2 = SourceSpec(transition=symmetric_transition(3, 0.4), cae=REFERENCE_CAE, weight=1.0)
    return validate_scenario(
        Scenario(sources=(s1, s2), channel=ChannelSpec(p_success, delay), f_max=f_max)
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "sources": [
            {
                "transition": src.transition.tolist(),
                "cae": src.cae.tolist(),
                "weight": src.weight,
            }
            for src in scenario.sources
        ],
        "channel": {
            "p_success": scenario.channel.p_success,
            "delay": scenario.channel.delay,
        },
        "f_max": scenario.f_max,
    }


def scenario_from_dict(doc: dict) -> Scenario:
    sources = tuple(
        SourceSpec(
            transition=np.array(s["transition"], dtype=float),
            cae=np.array(s["cae"], dtype=float),
            weight=float(s.get("weight", 1.0)),
        )
        for s in doc["sources"]
    )
    ch = ChannelSpec(float(doc["channel"]["p_success"]), int(doc["channel"]["delay"]))
    return validate_scenario(Scenario(sources=sources, channel=ch, f_max=float(doc["f_max"])))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
