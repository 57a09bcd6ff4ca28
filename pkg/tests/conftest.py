import numpy as np
import pytest

from cae_sched import scenario as sc_mod
from cae_sched.mdp_core import kernel_for
from cae_sched.scenario import ChannelSpec, Scenario, SourceSpec, validate_scenario


@pytest.fixture(scope="session")
def ref_scenario():
    """Two 3-state sources, lossy channel p_s=0.4, zero delay, budget 0.4."""
    return sc_mod.reference_example_scenario(p_success=0.4, delay=0, f_max=0.4)


@pytest.fixture(scope="session")
def ref_kernel(ref_scenario):
    return kernel_for(ref_scenario)


@pytest.fixture(scope="session")
def single_source_scenario():
    """One 2-state source with an asymmetric chain; handy oracle size (4 states)."""
    src = SourceSpec(
        transition=np.array([[0.9, 0.1], [0.3, 0.7]]),
        cae=np.array([[0.0, 4.0], [8.0, 0.0]]),
    )
    return validate_scenario(
        Scenario(sources=(src,), channel=ChannelSpec(p_success=0.6, delay=0), f_max=0.5)
    )


def random_small_scenario(rng: np.random.Generator, delay=None) -> Scenario:
    """Random single-source instance with at most 9 joint states.

    Rows are Dirichlet draws blended with the uniform distribution so every
    entry is positive (irreducible and aperiodic chains only).
    """
    n = int(rng.integers(2, 4))
    q = rng.dirichlet(np.ones(n), size=n)
    q = 0.8 * q + 0.2 / n
    q /= q.sum(axis=1, keepdims=True)
    cae = rng.integers(1, 30, size=(n, n)).astype(float)
    np.fill_diagonal(cae, 0.0)
    src = SourceSpec(transition=q, cae=cae)
    channel = ChannelSpec(
        p_success=float(rng.uniform(0.3, 1.0)),
        delay=int(rng.integers(0, 2)) if delay is None else delay,
    )
    f_max = float(rng.uniform(0.15, 0.85))
    return validate_scenario(Scenario(sources=(src,), channel=channel, f_max=f_max))
